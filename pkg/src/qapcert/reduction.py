"""Clone detection and the QAP -> cardinality-BQOP reduction.

Two facilities are clones when their flow rows agree outside the pair
itself. Clones are interchangeable, so a QAP only needs to know which
*class* each location hosts. When exactly one class carries flow (and only
within itself), that boils down to choosing the set of locations for that
class: a binary quadratic problem with a single cardinality constraint.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary, check_permutation, check_sym_matrix
from .exceptions import CardinalityError, DimensionMismatchError, NotSelectorStructure, QaplibFormatError
from .instance import CardBqop, QapInstance


@dataclass(frozen=True, eq=False)
class CloneClasses:
    """Partition of the facilities into clone classes.

    Attributes:
        classes: sorted 0-based member arrays, ordered by smallest member.
        reduced_A: ``|M| x |M|`` flow between classes. Diagonal entries of
            singleton classes are 0.
        labels: class index of every facility.
    """

    classes: tuple
    reduced_A: np.ndarray
    labels: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.classes], dtype=np.int64)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def selector_class(self) -> int | None:
        """Index ``u`` when ``reduced_A`` has one nonzero entry, positive and on the diagonal."""
        nz = np.argwhere(self.reduced_A != 0)
        if len(nz) == 1 and nz[0][0] == nz[0][1] and self.reduced_A[nz[0][0], nz[0][0]] > 0:
            return int(nz[0][0])
        return None


def _clone_mask(A: np.ndarray, i: int) -> np.ndarray:
    """Boolean mask of facilities ``k`` that are clones of ``i``."""
    diff = A[i][None, :] != A  # diff[k, h] = a_ih != a_kh
    n = A.shape[0]
    mismatches = diff.sum(axis=1) - diff[:, i] - diff[np.arange(n), np.arange(n)]
    mask = mismatches == 0
    mask[i] = True
    return mask


def find_clones(A) -> CloneClasses:
    """Partition ``{0..n-1}`` into clone classes and compute the reduced flow matrix."""
    A = check_sym_matrix(A, name="flow matrix A", zero_diagonal=False)
    n = A.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    classes = []
    for i in range(n):
        if labels[i] >= 0:
            continue
        members = np.flatnonzero(_clone_mask(A, i) & (labels < 0))
        labels[members] = len(classes)
        classes.append(members)

    k = len(classes)
    reduced = np.zeros((k, k), dtype=np.int64)
    for u in range(k):
        for v in range(k):
            block = A[np.ix_(classes[u], classes[v])]
            if u == v:
                if len(classes[u]) == 1:
                    continue
                block = block[~np.eye(len(classes[u]), dtype=bool)]
            vals = np.unique(block)
            if len(vals) != 1:
                raise AssertionError(f"clone classes {u} and {v} have inconsistent flows {vals[:4]}")
            reduced[u, v] = vals[0]
    reduced.setflags(write=False)
    labels.setflags(write=False)
    for c in classes:
        c.setflags(write=False)
    return CloneClasses(tuple(classes), reduced, labels)


def reduce_to_bqop(inst: QapInstance, classes: CloneClasses | None = None) -> CardBqop:
    """Turn a selector-structured QAP into ``min c * x'Bx, sum(x) = mu_u``.

    Raises:
        NotSelectorStructure: if the reduced flow matrix is not a single
            positive diagonal entry.
    """
    classes = find_clones(inst.A) if classes is None else classes
    u = classes.selector_class
    if u is None:
        raise NotSelectorStructure(
            f"reduced flow matrix over {classes.n_classes} clone classes has "
            f"{int(np.count_nonzero(classes.reduced_A))} nonzero entries; need exactly one positive diagonal entry"
        )
    return CardBqop(inst.B, m=len(classes.classes[u]), scale=int(classes.reduced_A[u, u]),
                    source="reduced-from-qap", name=inst.name)


def permutation_to_binary(perm, classes: CloneClasses, u: int | None = None) -> np.ndarray:
    """Indicator of the locations hosting class-``u`` facilities under ``perm`` (0-based)."""
    n = len(classes.labels)
    perm = np.asarray(perm)
    if perm.size != n:
        raise DimensionMismatchError(f"permutation has length {perm.size}, expected {n}")
    perm = check_permutation(perm, n)
    u = _resolve_class(classes, u)
    x = np.zeros(n, dtype=bool)
    x[perm[classes.classes[u]]] = True
    return x


def binary_to_permutation(x, classes: CloneClasses, u: int | None = None) -> np.ndarray:
    """Canonical permutation placing class ``u`` on the support of ``x``.

    Class-``u`` facilities go to the support in ascending order; every other
    facility goes to the remaining locations in ascending order.
    """
    n = len(classes.labels)
    u = _resolve_class(classes, u)
    x = check_binary(x, n)
    if int(x.sum()) != len(classes.classes[u]):
        raise CardinalityError(f"vector has {int(x.sum())} ones but class has {len(classes.classes[u])} facilities")
    perm = np.empty(n, dtype=np.int64)
    members = classes.classes[u]
    perm[members] = np.flatnonzero(x)
    others = np.flatnonzero(classes.labels != u)
    perm[others] = np.flatnonzero(~x)
    return perm


def _resolve_class(classes: CloneClasses, u):
    if u is None:
        u = classes.selector_class
        if u is None:
            raise NotSelectorStructure("no selector class; pass the class index explicitly")
    if not 0 <= u < classes.n_classes:
        raise ValueError(f"class index {u} out of range")
    return u


# ---------------------------------------------------------------------------
# general (class-assignment) model
# ---------------------------------------------------------------------------

_MODEL_MAGIC = "qapcert-general-model 1"


@dataclass(frozen=True, eq=False)
class GeneralReducedModel:
    """Class-assignment model over variables ``x[i, u]`` (location ``i`` hosts class ``u``).

    Variable ``(i, u)`` has flat id ``i * n_classes + u``. ``objective`` holds
    ``(var, var, coef)`` rows for every ordered pair with nonzero
    ``reduced_A[u, v] * B[i, j]``; ``constraints`` holds ``(name, rhs, var ids)``
    equality rows.
    """

    n: int
    class_members: tuple
    objective: np.ndarray
    constraints: tuple

    @property
    def n_classes(self) -> int:
        return len(self.class_members)

    @property
    def n_vars(self) -> int:
        return self.n * self.n_classes

    def value(self, x) -> int:
        x = np.asarray(x, dtype=np.int64).ravel()
        o = self.objective
        return int(np.sum(o[:, 2] * x[o[:, 0]] * x[o[:, 1]]))

    def is_feasible(self, x) -> bool:
        x = np.asarray(x, dtype=np.int64).ravel()
        return all(int(x[list(vs)].sum()) == rhs for _, rhs, vs in self.constraints)

    def __eq__(self, other):
        if not isinstance(other, GeneralReducedModel):
            return NotImplemented
        return (self.n == other.n
                and [list(c) for c in self.class_members] == [list(c) for c in other.class_members]
                and np.array_equal(self.objective, other.objective)
                and [(a, b, tuple(c)) for a, b, c in self.constraints]
                == [(a, b, tuple(c)) for a, b, c in other.constraints])


def emit_general_model(inst: QapInstance, classes: CloneClasses | None = None) -> GeneralReducedModel:
    classes = find_clones(inst.A) if classes is None else classes
    n, k = inst.n, classes.n_classes
    rows = []
    for u, v in zip(*np.nonzero(classes.reduced_A)):
        i, j = np.nonzero(inst.B)
        coef = classes.reduced_A[u, v] * inst.B[i, j]
        rows.append(np.column_stack([i * k + u, j * k + v, coef]))
    objective = np.concatenate(rows) if rows else np.empty((0, 3), dtype=np.int64)
    objective = objective[np.lexsort((objective[:, 1], objective[:, 0]))].astype(np.int64)
    constraints = [(f"assign_{i + 1}", 1, tuple(i * k + u for u in range(k))) for i in range(n)]
    constraints += [(f"class_{u + 1}", len(classes.classes[u]), tuple(i * k + u for i in range(n)))
                    for u in range(k)]
    members = tuple(tuple(int(i) for i in c) for c in classes.classes)
    return GeneralReducedModel(n, members, objective, tuple(constraints))


def serialize_general_model(model: GeneralReducedModel) -> str:
    """Sparse text layout; every index written 1-based."""
    out = [_MODEL_MAGIC, f"n {model.n} classes {model.n_classes}"]
    for u, mem in enumerate(model.class_members):
        out.append(f"class {u + 1} size {len(mem)} : " + " ".join(str(i + 1) for i in mem))
    out.append(f"objective {len(model.objective)}")
    out += [f"{a + 1} {b + 1} {c}" for a, b, c in model.objective]
    out.append(f"constraints {len(model.constraints)}")
    out += [f"{name} {rhs} : " + " ".join(str(v + 1) for v in vs) for name, rhs, vs in model.constraints]
    return "\n".join(out) + "\n"


def parse_general_model(text: str) -> GeneralReducedModel:
    lines = iter(text.splitlines())
    if next(lines, "").strip() != _MODEL_MAGIC:
        raise QaplibFormatError("not a qapcert general model file")
    _, n, _, k = next(lines).split()
    n, k = int(n), int(k)
    members = []
    for _ in range(k):
        head, _, body = next(lines).partition(":")
        members.append(tuple(int(t) - 1 for t in body.split()))
    _, count = next(lines).split()
    obj = [[int(t) for t in next(lines).split()] for _ in range(int(count))]
    objective = np.asarray(obj, dtype=np.int64).reshape(-1, 3)
    objective[:, :2] -= 1
    _, count = next(lines).split()
    constraints = []
    for _ in range(int(count)):
        head, _, body = next(lines).partition(":")
        name, rhs = head.split()
        constraints.append((name, int(rhs), tuple(int(t) - 1 for t in body.split())))
    return GeneralReducedModel(n, tuple(members), objective, tuple(constraints))


def write_general_model(model: GeneralReducedModel, path) -> None:
    Path(path).write_text(serialize_general_model(model))


def read_general_model(path) -> GeneralReducedModel:
    return parse_general_model(Path(path).read_text())


class CloneReducer(TransformerMixin, BaseEstimator):
    """Learn the clone classes of a flow matrix; map permutations to selector vectors and back.

    ``fit(A)`` sets ``classes_``, ``selector_class_`` and ``scale_``.
    ``transform`` takes one permutation or a 2-d array of them (0-based rows)
    and returns bool indicator rows; ``inverse_transform`` goes back with the
    canonical assignment of :func:`binary_to_permutation`.
    """

    def __init__(self, require_selector=True):
        self.require_selector = require_selector

    def fit(self, A, y=None):
        self.classes_ = find_clones(A)
        self.selector_class_ = self.classes_.selector_class
        if self.selector_class_ is None and self.require_selector:
            raise NotSelectorStructure("flow matrix has no selector structure")
        self.scale_ = None if self.selector_class_ is None else int(
            self.classes_.reduced_A[self.selector_class_, self.selector_class_])
        self.n_features_in_ = len(self.classes_.labels)
        return self

    def transform(self, X):
        check_is_fitted(self, "classes_")
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        return np.array([permutation_to_binary(p, self.classes_, self.selector_class_) for p in X])

    def inverse_transform(self, X):
        check_is_fitted(self, "classes_")
        X = np.atleast_2d(np.asarray(X))
        return np.array([binary_to_permutation(x, self.classes_, self.selector_class_) for x in X])

    def to_bqop(self, inst: QapInstance) -> CardBqop:
        check_is_fitted(self, "classes_")
        return reduce_to_bqop(inst, self.classes_)
