"""Search-tree subproblems: fix some variables to 0 (``I0``) and some to 1 (``I1``).

The free part ``F`` carries a reduced matrix whose diagonal absorbs the
linear terms created by the ones in ``I1``. The reduced problem also keeps
the constant ``sum_{j,k in I1} B_jk`` so its values stay comparable with
the global objective.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._validation import check_binary, check_index_set
from .exceptions import InfeasibleNodeError, QaplibFormatError
from .instance import CardBqop

LAMBDA_NUMERATOR = 1.0e8


@dataclass(frozen=True)
class NodeKey:
    """Partition of ``range(n)`` into fixed-to-0, fixed-to-1 and free indices (0-based)."""

    n: int
    I0: tuple = ()
    I1: tuple = ()

    def __post_init__(self):
        I0 = tuple(check_index_set(self.I0, self.n, name="I0").tolist())
        I1 = tuple(check_index_set(self.I1, self.n, name="I1").tolist())
        if set(I0) & set(I1):
            raise ValueError("I0 and I1 must be disjoint")
        object.__setattr__(self, "I0", I0)
        object.__setattr__(self, "I1", I1)

    @property
    def F(self) -> np.ndarray:
        free = np.ones(self.n, dtype=bool)
        free[list(self.I0)] = False
        free[list(self.I1)] = False
        return np.flatnonzero(free)

    @classmethod
    def root(cls, n: int) -> "NodeKey":
        return cls(n)

    def with_zeros(self, idx) -> "NodeKey":
        return NodeKey(self.n, tuple(self.I0) + tuple(int(i) for i in idx), self.I1)

    def with_ones(self, idx) -> "NodeKey":
        return NodeKey(self.n, self.I0, tuple(self.I1) + tuple(int(i) for i in idx))

    def to_dict(self) -> dict:
        """1-based, for reports."""
        return {"I0": [i + 1 for i in self.I0], "I1": [i + 1 for i in self.I1]}


def residual_cardinality(bqop: CardBqop, key: NodeKey) -> int:
    return bqop.m - len(key.I1)


def is_feasible(bqop: CardBqop, key: NodeKey) -> bool:
    mres = residual_cardinality(bqop, key)
    return 0 <= mres <= bqop.n - len(key.I0) - len(key.I1)


@dataclass(frozen=True, eq=False)
class ReducedBqop:
    """``offset + y' matrix y`` over binary ``y`` on ``F`` with ``sum(y) = m_res``.

    ``matrix`` and ``offset`` already include the problem's scale factor.
    """

    key: NodeKey
    F: np.ndarray
    matrix: np.ndarray
    offset: int
    m_res: int

    @property
    def f(self) -> int:
        return len(self.F)

    def value(self, y) -> int:
        y = check_binary(y, self.f)
        idx = np.flatnonzero(y)
        return self.offset + int(self.matrix[np.ix_(idx, idx)].sum())

    def lift(self, y) -> np.ndarray:
        """Full-length binary vector with ``I1`` set and ``y`` placed on ``F``."""
        y = check_binary(y, self.f)
        x = np.zeros(self.key.n, dtype=bool)
        x[list(self.key.I1)] = True
        x[self.F] = y
        return x


def reduce(bqop: CardBqop, key: NodeKey) -> ReducedBqop:
    """Build the reduced problem of a node.

    Raises:
        InfeasibleNodeError: if ``|I1| > m`` or too few free indices remain.
    """
    if key.n != bqop.n:
        raise ValueError(f"node is over {key.n} indices but problem has {bqop.n}")
    F = key.F
    mres = bqop.m - len(key.I1)
    if mres < 0 or mres > len(F):
        raise InfeasibleNodeError(f"|I1|={len(key.I1)}, |F|={len(F)}, m={bqop.m}")
    B = bqop.B
    I1 = np.asarray(key.I1, dtype=np.int64)
    mat = B[np.ix_(F, F)].copy()
    if I1.size:
        mat[np.diag_indices_from(mat)] += 2 * B[np.ix_(I1, F)].sum(axis=0)
    offset = bqop.scale * int(B[np.ix_(I1, I1)].sum())
    if bqop.scale != 1:
        mat *= bqop.scale
    mat.setflags(write=False)
    return ReducedBqop(key, F, mat, offset, mres)


@dataclass(frozen=True, eq=False)
class QuboInstance:
    """Penalty form ``offset + y'Qy``, equal to ``reduced(y) + lam * (sum(y) - m_res)**2`` on binaries.

    ``Q`` is materialised as float64. :meth:`value` evaluates exactly.
    """

    reduced: ReducedBqop
    lam: Fraction

    @property
    def F(self) -> np.ndarray:
        return self.reduced.F

    @property
    def offset(self) -> Fraction:
        return self.reduced.offset + self.lam * self.reduced.m_res ** 2

    @property
    def Q(self) -> np.ndarray:
        r = self.reduced
        lam = float(self.lam)
        Q = r.matrix.astype(np.float64) + lam
        Q[np.diag_indices_from(Q)] -= 2.0 * lam * r.m_res
        return Q

    def value(self, y) -> Fraction:
        y = check_binary(y, self.reduced.f)
        idx = np.flatnonzero(y)
        base = int(self.reduced.matrix[np.ix_(idx, idx)].sum())
        s = len(idx)
        # y'(lam J)y = lam s^2, diagonal shift contributes -2 lam m' s
        return self.offset + base + self.lam * (s * s - 2 * self.reduced.m_res * s)


def to_qubo(r: ReducedBqop, lam) -> QuboInstance:
    lam = Fraction(lam)
    if lam <= 0:
        raise ValueError("penalty parameter must be positive")
    return QuboInstance(r, lam)


def frobenius_norm(r: ReducedBqop) -> float:
    return float(np.sqrt(np.sum(r.matrix.astype(np.float64) ** 2)))


def default_lambda(r: ReducedBqop) -> float:
    """``1e8 / ||matrix||_F``."""
    norm = frobenius_norm(r)
    if norm == 0.0:
        raise ValueError("reduced matrix is zero; default penalty undefined")
    return LAMBDA_NUMERATOR / norm


def serialize_qubo(q: QuboInstance) -> str:
    """Symmetric sparse triplet layout.

    Header ``f lambda offset`` (floats written with ``repr`` precision, plus
    the exact fractions), a line with the original 1-based indices of ``F``,
    then ``i j q`` for ``i <= j`` (1-based positions in ``F``). Off-diagonal
    triples stand for both ``(i, j)`` and ``(j, i)``.
    """
    Q = q.Q
    lines = [
        "# qapcert qubo: energy = offset + sum_ij Q_ij y_i y_j",
        f"{q.reduced.f} {float(q.lam)!r} {float(q.offset)!r}",
        f"exact lambda={q.lam} offset={q.offset} m_res={q.reduced.m_res} base_offset={q.reduced.offset}",
        "F " + " ".join(str(i + 1) for i in q.F),
    ]
    iu, ju = np.triu_indices(len(Q))
    for i, j in zip(iu, ju):
        if Q[i, j] != 0.0:
            lines.append(f"{i + 1} {j + 1} {float(Q[i, j])!r}")
    return "\n".join(lines) + "\n"


def parse_qubo(text: str) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Read a QUBO file back into ``(F, Q, lam, offset)`` (``F`` 0-based)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    try:
        f, lam, offset = lines[0].split()
        f = int(f)
        F = np.array([int(t) - 1 for t in lines[2].split()[1:]], dtype=np.int64)
        Q = np.zeros((f, f))
        for ln in lines[3:]:
            i, j, v = ln.split()
            Q[int(i) - 1, int(j) - 1] = Q[int(j) - 1, int(i) - 1] = float(v)
    except (ValueError, IndexError) as exc:
        raise QaplibFormatError(f"malformed QUBO file: {exc}") from None
    return F, Q, float(lam), float(offset)


def write_qubo(q: QuboInstance, path) -> None:
    Path(path).write_text(serialize_qubo(q))
