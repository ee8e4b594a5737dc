"""Lower bounders for reduced subproblems and the bracket/verdict contract.

A bounder produces intervals ``[a_p, b_p]`` around some valid lower bound
``nu`` of the subproblem: ``a_p`` never decreases, ``b_p`` never increases and
``a_p <= nu <= b_p``. Against a target value ``t`` the node is pruned as soon
as ``t <= a_p`` and declared active as soon as ``b_p < t``.

Shipped bounders:

``spectral``
    One-shot bound from the sphere slice ``{y : sum(y) = m', |y|^2 = m'}``.
``bisection``
    Same relaxation, but ``lambda_min`` is bracketed by bisection with
    Cholesky tests, giving a genuinely iterative monotone trace.
``exact``
    Enumeration of all feasible completions (small problems / tests only).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Iterator, Literal, Mapping

import numpy as np

from .exceptions import BoundFailure, EnumerationBudgetExceeded, UnknownBounderError
from .subproblem import ReducedBqop

EIG_TOL = 1e-9
DEFAULT_ENUM_BUDGET = 5_000_000


@dataclass(frozen=True)
class BracketStep:
    p: int
    a: float
    b: float


@dataclass(frozen=True)
class Verdict:
    """Outcome of bounding one node against a target.

    ``failed`` marks a bounder breakdown; such nodes are reported active with
    an infinite certificate so that they are branched, never pruned.
    """

    kind: Literal["pruned", "active"]
    certificate: float
    trace: tuple = ()
    failed: bool = False

    @property
    def pruned(self) -> bool:
        return self.kind == "pruned"


@dataclass(frozen=True)
class BounderSpec:
    name: str = "spectral"
    params: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(sorted(self.params.items()))}

    @classmethod
    def parse(cls, text: str) -> "BounderSpec":
        """``name`` or ``name:key=value,key=value``."""
        name, _, rest = text.partition(":")
        params = {}
        for item in filter(None, rest.split(",")):
            k, _, v = item.partition("=")
            try:
                params[k] = int(v)
            except ValueError:
                params[k] = float(v)
        return cls(name, params)


# ---------------------------------------------------------------------------
# relaxation pieces
# ---------------------------------------------------------------------------


def _complement_basis(f: int) -> np.ndarray:
    """Orthonormal ``f x (f-1)`` basis of ``{z : sum(z) = 0}`` (Householder, deterministic)."""
    w = np.full(f, 1.0 / math.sqrt(f))
    v = w.copy()
    v[0] -= 1.0
    H = np.eye(f) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


@dataclass(frozen=True)
class _SphereSlice:
    """Terms of the relaxation ``nu(lam) = const - lin + lam * rho2``, increasing in ``lam``."""

    const: float
    lin: float
    rho2: float
    Qt: np.ndarray
    slack: float

    def value(self, lam: float) -> float:
        val = self.const - self.lin + lam * self.rho2
        return val - self.slack - EIG_TOL * abs(lam) * self.rho2


def _sphere_slice(r: ReducedBqop) -> _SphereSlice:
    f, mres = r.f, r.m_res
    Q = r.matrix.astype(np.float64)
    V = _complement_basis(f)
    c = mres / f
    ell = V.T @ Q.sum(axis=1)
    rho2 = mres * (f - mres) / f
    const = r.offset + c * c * float(r.matrix.sum())
    lin = 2.0 * c * float(np.linalg.norm(ell)) * math.sqrt(rho2)
    Qt = V.T @ Q @ V
    Qt = 0.5 * (Qt + Qt.T)
    if not np.all(np.isfinite(Qt)):
        raise BoundFailure("non-finite projected matrix")
    slack = EIG_TOL * (abs(const - r.offset) + lin + 1.0)
    return _SphereSlice(const, lin, rho2, Qt, slack)


def _degenerate(r: ReducedBqop):
    if r.m_res == 0:
        return float(r.offset)
    if r.m_res == r.f:
        return float(r.offset + int(r.matrix.sum()))
    return None


def spectral_bound(r: ReducedBqop) -> float:
    """Lower bound from ``y = (m'/f) e + z`` with ``z`` orthogonal to ``e`` and ``|z|^2 = rho^2``.

    Each of the three terms is minimised separately; the smallest projected
    eigenvalue is shifted down by a relative tolerance before use.
    """
    deg = _degenerate(r)
    if deg is not None:
        return deg
    s = _sphere_slice(r)
    try:
        eig = np.linalg.eigvalsh(s.Qt)
    except np.linalg.LinAlgError as exc:
        raise BoundFailure(f"eigensolver failed: {exc}") from exc
    lam = float(eig[0]) - EIG_TOL * max(1.0, float(np.abs(eig).max()))
    return s.value(lam)


def exact_minimize(r: ReducedBqop, budget: int = DEFAULT_ENUM_BUDGET) -> tuple[int, np.ndarray]:
    """Exact minimum and a minimiser over all ``y`` with ``sum(y) = m'``.

    Ties go to the lexicographically first support.

    Raises:
        EnumerationBudgetExceeded: if ``C(f, m')`` exceeds ``budget``.
    """
    f, mres = r.f, r.m_res
    total = comb(f, mres)
    if total > budget:
        raise EnumerationBudgetExceeded(f"C({f},{mres}) = {total} exceeds budget {budget}")
    if mres == 0:
        return r.offset, np.zeros(f, dtype=bool)
    Q = r.matrix
    best_val, best_sup = None, None
    combos = itertools.combinations(range(f), mres)
    chunk = max(1, 200_000 // max(1, mres * mres))
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64).reshape(-1, mres)
        if block.shape[0] == 0:
            break
        vals = Q[block[:, :, None], block[:, None, :]].sum(axis=(1, 2))
        k = int(np.argmin(vals))
        if best_val is None or vals[k] < best_val:
            best_val, best_sup = int(vals[k]), block[k]
    y = np.zeros(f, dtype=bool)
    y[best_sup] = True
    return r.offset + best_val, y


def exact_bound(r: ReducedBqop, budget: int = DEFAULT_ENUM_BUDGET) -> int:
    return exact_minimize(r, budget)[0]


# ---------------------------------------------------------------------------
# bounder objects
# ---------------------------------------------------------------------------


class SpectralBounder:
    """One-shot spectral bound: a single step with ``a == b``."""

    name = "spectral"

    def brackets(self, r: ReducedBqop) -> Iterator[tuple[float, float]]:
        v = spectral_bound(r)
        yield v, v


class ExactBounder:
    name = "exact"

    def __init__(self, budget: int = DEFAULT_ENUM_BUDGET):
        self.budget = int(budget)

    def brackets(self, r):
        v = float(exact_bound(r, self.budget))
        yield v, v


class BisectionBounder:
    """Bracket the spectral relaxation value by bisecting on ``lambda_min``.

    ``lo`` starts at the Gershgorin bound and only moves up after a successful
    Cholesky factorisation of ``Qt - mid I``; ``hi`` starts at the smallest
    diagonal entry (a Rayleigh quotient) and only moves down. The last step
    collapses the interval onto its lower end.
    """

    name = "bisection"

    def __init__(self, max_iter: int = 60, rel_tol: float = 1e-6):
        self.max_iter = int(max_iter)
        self.rel_tol = float(rel_tol)

    def brackets(self, r):
        deg = _degenerate(r)
        if deg is not None:
            yield deg, deg
            return
        s = _sphere_slice(r)
        Qt = s.Qt
        diag = np.diag(Qt)
        radius = np.abs(Qt).sum(axis=1) - np.abs(diag)
        lo = float(np.min(diag - radius))
        hi = float(np.min(diag))
        scale = max(1.0, float(np.abs(Qt).max()) * Qt.shape[0])
        shift = EIG_TOL * scale
        eye = np.eye(Qt.shape[0])
        a, b = s.value(lo - shift), max(s.value(hi), s.value(lo - shift))
        yield a, b
        for _ in range(self.max_iter):
            if hi - lo <= self.rel_tol * scale:
                break
            mid = 0.5 * (lo + hi)
            try:
                np.linalg.cholesky(Qt - mid * eye)
                lo = mid
            except np.linalg.LinAlgError:
                hi = mid
            a = max(a, s.value(lo - shift))
            b = max(a, min(b, s.value(hi)))
            yield a, b
        yield a, a


_REGISTRY: dict[str, Callable[..., object]] = {
    "spectral": SpectralBounder,
    "exact": ExactBounder,
    "bisection": BisectionBounder,
}


def register_bounder(name: str, factory: Callable[..., object]) -> None:
    _REGISTRY[name] = factory


def available_bounders() -> list[str]:
    return sorted(_REGISTRY)


def make_bounder(spec: BounderSpec | str):
    if isinstance(spec, str):
        spec = BounderSpec.parse(spec)
    try:
        factory = _REGISTRY[spec.name]
    except KeyError:
        raise UnknownBounderError(f"unknown bounder {spec.name!r}; available: {available_bounders()}") from None
    return factory(**dict(spec.params))


def bound_node(r: ReducedBqop, target: float, spec) -> Verdict:
    """Run a bounder until the node can be pruned or must be branched.

    ``spec`` is a :class:`BounderSpec`, a bounder name, or a bounder object.
    Bounder breakdowns (and non-monotone traces) give an active verdict with
    an infinite certificate, never a prune.
    """
    bounder = spec if hasattr(spec, "brackets") else make_bounder(spec)
    steps: list[BracketStep] = []
    try:
        for p, (a, b) in enumerate(bounder.brackets(r), start=1):
            a, b = float(a), float(b)
            if not (a <= b) or math.isnan(a):
                raise BoundFailure(f"invalid bracket [{a}, {b}]")
            if steps and (a < steps[-1].a or b > steps[-1].b):
                raise BoundFailure("bracket sequence is not monotone")
            steps.append(BracketStep(p, a, b))
            if target <= a:
                return Verdict("pruned", a, tuple(steps))
            if b < target:
                return Verdict("active", b, tuple(steps))
        raise BoundFailure("bracket sequence ended without a decision")
    except (BoundFailure, EnumerationBudgetExceeded, np.linalg.LinAlgError, FloatingPointError):
        return Verdict("active", math.inf, tuple(steps), failed=True)
