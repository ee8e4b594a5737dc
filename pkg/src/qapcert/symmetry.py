"""Automorphism group of the cost matrix, setwise stabilizers and orbits.

Groups are stored as an explicit ``(order, n)`` array of 0-based images.
A permutation ``pi`` belongs to the group of ``B`` when
``B[pi[i], pi[j]] == B[i, j]`` for all ``i, j``; it then also preserves
``x'Bx`` for the permuted vector ``x[pi]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary, check_index_set, check_sym_matrix
from .exceptions import DimensionMismatchError, GroupTooLargeError

logger = logging.getLogger(__name__)

DEFAULT_MAX_ELEMENTS = 1_000_000


@dataclass(frozen=True, eq=False)
class PermutationGroup:
    """Finite permutation group given by the full list of its elements."""

    elements: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.elements, dtype=np.int64)
        if E.ndim != 2:
            raise ValueError("elements must be a 2-d array")
        E = E[np.lexsort(E.T[::-1])]
        E.setflags(write=False)
        object.__setattr__(self, "elements", E)

    @property
    def n(self) -> int:
        return self.elements.shape[1]

    @property
    def order(self) -> int:
        return self.elements.shape[0]

    def __len__(self):
        return self.order

    def __contains__(self, perm) -> bool:
        p = np.asarray(perm, dtype=np.int64)
        return bool(np.any(np.all(self.elements == p[None, :], axis=1)))

    @classmethod
    def trivial(cls, n: int) -> "PermutationGroup":
        return cls(np.arange(n, dtype=np.int64)[None, :])


@dataclass(frozen=True, eq=False)
class OrbitSet:
    """Orbit partition of a ground set; orbits sorted ascending and listed by minimum."""

    ground: np.ndarray
    orbits: tuple

    def __len__(self):
        return len(self.orbits)

    def __iter__(self):
        return iter(self.orbits)

    @property
    def representatives(self) -> np.ndarray:
        return np.array([o[0] for o in self.orbits], dtype=np.int64)

    def size_profile(self) -> dict[int, int]:
        sizes, counts = np.unique([len(o) for o in self.orbits], return_counts=True)
        return {int(s): int(c) for s, c in sorted(zip(sizes, counts), reverse=True)}

    def orbit_of(self, i: int) -> np.ndarray:
        for o in self.orbits:
            if i in o:
                return o
        raise KeyError(i)


def _row_signatures(B: np.ndarray) -> np.ndarray:
    """Label rows by their sorted multiset of entries; equal labels mean equal multisets."""
    srt = np.sort(B, axis=1)
    _, labels = np.unique(srt, axis=0, return_inverse=True)
    return labels.ravel()


def discover_automorphisms(B, max_elements: int = DEFAULT_MAX_ELEMENTS) -> PermutationGroup:
    """Enumerate every permutation ``pi`` with ``B[pi][:, pi] == B``.

    Depth-first assignment of ``pi(0), pi(1), ...``. ``cand[i, l]`` records
    whether ``l`` can still be the image of ``i``; it starts from row
    signatures and every assignment ``pi(d) = j`` keeps only ``l`` with
    ``B[l, j] == B[i, d]``. Once each open row has a single candidate the
    permutation is forced and checked directly.

    Raises:
        GroupTooLargeError: when more than ``max_elements`` automorphisms exist.
    """
    B = check_sym_matrix(B, name="matrix B", zero_diagonal=False)
    n = B.shape[0]
    sig = _row_signatures(B)
    cand0 = sig[:, None] == sig[None, :]
    found: list[np.ndarray] = []

    def record(perm):
        found.append(perm)
        if len(found) > max_elements:
            raise GroupTooLargeError(f"automorphism group has more than {max_elements} elements")

    # stack entries: (depth, candidate mask, images of 0..depth-1)
    stack = [(0, cand0, np.empty(0, dtype=np.int64))]
    while stack:
        d, cand, prefix = stack.pop()
        if d == n:
            record(prefix)
            continue
        open_rows = cand[d:]
        counts = open_rows.sum(axis=1)
        if np.any(counts == 0):
            continue
        if np.all(counts == 1):
            perm = np.concatenate([prefix, open_rows.argmax(axis=1)])
            if len(np.unique(perm)) == n and np.array_equal(B[np.ix_(perm, perm)], B):
                record(perm)
            continue
        col_d = B[:, d][:, None]
        # pushed in reverse so the smallest image is explored first
        for j in np.flatnonzero(cand[d])[::-1]:
            nxt = cand & (col_d == B[:, j][None, :])
            nxt[:, j] = False
            stack.append((d + 1, nxt, np.append(prefix, j)))
    group = PermutationGroup(np.array(found, dtype=np.int64))
    logger.debug("discovered automorphism group of order %d (n=%d)", group.order, n)
    return group


def setwise_stabilizer(G: PermutationGroup, I0=None, I1=None) -> PermutationGroup:
    """Elements ``pi`` of ``G`` with ``pi(I0) = I0`` and ``pi(I1) = I1``."""
    n = G.n
    I0 = check_index_set(I0, n, name="I0")
    I1 = check_index_set(I1, n, name="I1")
    if np.intersect1d(I0, I1).size:
        raise ValueError("I0 and I1 must be disjoint")
    E = G.elements
    keep = np.ones(G.order, dtype=bool)
    for idx in (I0, I1):
        if idx.size:
            member = np.zeros(n, dtype=bool)
            member[idx] = True
            keep &= member[E[:, idx]].all(axis=1)
    return PermutationGroup(E[keep])


def orbits(G: PermutationGroup, F=None) -> OrbitSet:
    """Orbit partition of ``F`` (default: everything) under ``G``."""
    n = G.n
    F = np.arange(n, dtype=np.int64) if F is None else check_index_set(F, n, name="F")
    if F.size == 0:
        return OrbitSet(F, ())
    member = np.zeros(n, dtype=bool)
    member[F] = True
    images = G.elements[:, F]
    if not member[images].all():
        raise ValueError("group does not map F onto itself")
    reps = images.min(axis=0)  # orbit of i is the column of images, since G is a group
    groups: dict[int, list[int]] = {}
    for i, r in zip(F.tolist(), reps.tolist()):
        groups.setdefault(r, []).append(i)
    orbs = tuple(np.array(groups[r], dtype=np.int64) for r in sorted(groups))
    return OrbitSet(F, orbs)


def expand_solution(G: PermutationGroup, x, bqop=None) -> np.ndarray:
    """Distinct images ``x[pi]`` over the group, as rows of a bool array.

    When ``bqop`` is given, every image is checked to have the same objective.
    """
    x = check_binary(x)
    if x.size != G.n:
        raise DimensionMismatchError(f"vector has length {x.size}, group acts on {G.n} points")
    images = np.unique(x[G.elements], axis=0)
    if bqop is not None:
        from .instance import bqop_objective

        base = bqop_objective(bqop, x)
        for y in images:
            if bqop_objective(bqop, y) != base:
                raise AssertionError("group image changed the objective value")
    return images


class AutomorphismFinder(BaseEstimator):
    """``fit(B)`` discovers the automorphism group (``group_``, ``order_``)."""

    def __init__(self, max_elements=DEFAULT_MAX_ELEMENTS):
        self.max_elements = max_elements

    def fit(self, B, y=None):
        self.group_ = discover_automorphisms(B, self.max_elements)
        self.order_ = self.group_.order
        self.n_features_in_ = self.group_.n
        return self

    def orbits(self, I0=None, I1=None) -> OrbitSet:
        """Orbits of the free indices under the setwise stabilizer of ``(I0, I1)``."""
        check_is_fitted(self, "group_")
        stab = setwise_stabilizer(self.group_, I0, I1)
        free = np.ones(self.group_.n, dtype=bool)
        free[check_index_set(I0, self.group_.n)] = False
        free[check_index_set(I1, self.group_.n)] = False
        return orbits(stab, np.flatnonzero(free))

    def expand(self, x, bqop=None) -> np.ndarray:
        check_is_fitted(self, "group_")
        return expand_solution(self.group_, x, bqop)
