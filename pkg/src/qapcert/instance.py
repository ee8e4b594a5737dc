"""Problem data: QAP instances, cardinality-constrained BQOPs, file I/O and objectives.

Indices are 0-based internally. Anything written for humans or read from
files (QAPLIB data, solution files, CLI output) is 1-based.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from ._validation import check_binary, check_permutation, check_sym_matrix
from .exceptions import (
    CountMismatchError,
    DimensionMismatchError,
    MalformedTokenError,
    NonzeroDiagonalError,
    QaplibFormatError,
)

TAI256C_N = 256
TAI256C_M = 92


@dataclass(frozen=True, eq=False)
class QapInstance:
    """Symmetric QAP with flow matrix ``A`` and distance matrix ``B``."""

    A: np.ndarray
    B: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = check_sym_matrix(self.A, name="flow matrix A")
        B = check_sym_matrix(self.B, name="distance matrix B")
        if A.shape != B.shape:
            raise DimensionMismatchError(f"A is {A.shape[0]}x{A.shape[0]} but B is {B.shape[0]}x{B.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def __eq__(self, other):
        if not isinstance(other, QapInstance):
            return NotImplemented
        return np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B)


@dataclass(frozen=True, eq=False)
class CardBqop:
    """``min scale * x'Bx`` over binary ``x`` with exactly ``m`` ones."""

    B: np.ndarray
    m: int
    scale: int = 1
    source: Literal["raw", "reduced-from-qap"] = "raw"
    name: str = ""
    _row_sums: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        B = check_sym_matrix(self.B, name="matrix B")
        object.__setattr__(self, "B", B)
        if not 0 <= self.m <= B.shape[0]:
            raise ValueError(f"cardinality m={self.m} outside 0..{B.shape[0]}")
        if self.scale <= 0:
            raise ValueError("scale must be a positive integer")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "scale", int(self.scale))

    @property
    def n(self) -> int:
        return self.B.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CardBqop):
            return NotImplemented
        return (np.array_equal(self.B, other.B) and self.m == other.m
                and self.scale == other.scale and self.source == other.source)


def _tokens_to_ints(text: str) -> list[int]:
    out = []
    for pos, tok in enumerate(text.split()):
        try:
            out.append(int(tok))
        except ValueError:
            try:
                val = float(tok)
            except ValueError:
                raise MalformedTokenError(f"token #{pos + 1} {tok!r} is not a number") from None
            if not val.is_integer():
                raise MalformedTokenError(f"token #{pos + 1} {tok!r} is not an integer")
            out.append(int(val))
    return out


def parse_qaplib(text: str, *, name: str = "", strict: bool = False) -> QapInstance:
    """Parse QAPLIB ``.dat`` text: ``n`` followed by the n*n entries of A, then of B.

    QAPLIB files do not always honour the zero-diagonal convention (tai256c
    stores ``a_ii = 1`` on its first 92 facilities). A diagonal term
    ``a_ii * b_jj`` vanishes whenever the *other* matrix has a zero diagonal,
    so in that case the offending diagonal is dropped with a warning. With
    ``strict=True`` every nonzero diagonal is an error.
    """
    values = _tokens_to_ints(text)
    if not values:
        raise CountMismatchError("empty QAPLIB text")
    n = values[0]
    if n <= 0:
        raise QaplibFormatError(f"dimension must be positive, got {n}")
    if len(values) - 1 != 2 * n * n:
        raise CountMismatchError(f"expected {2 * n * n} matrix entries for n={n}, found {len(values) - 1}")
    data = np.asarray(values[1:], dtype=np.int64)
    A = data[: n * n].reshape(n, n).copy()
    B = data[n * n:].reshape(n, n).copy()
    check_sym_matrix(A, name="flow matrix A", zero_diagonal=False)
    check_sym_matrix(B, name="distance matrix B", zero_diagonal=False)
    a_diag, b_diag = np.any(np.diag(A)), np.any(np.diag(B))
    if strict or (a_diag and b_diag):
        check_sym_matrix(A, name="flow matrix A")
        check_sym_matrix(B, name="distance matrix B")
    elif a_diag or b_diag:
        which, M = ("A", A) if a_diag else ("B", B)
        warnings.warn(
            f"{name or 'instance'}: dropping nonzero diagonal of {which} "
            f"({int(np.count_nonzero(np.diag(M)))} entries); the objective is unaffected",
            stacklevel=2,
        )
        np.fill_diagonal(M, 0)
    return QapInstance(A, B, name=name)


def serialize_qaplib(inst: QapInstance) -> str:
    """Render an instance in QAPLIB layout (inverse of :func:`parse_qaplib`)."""
    lines = [str(inst.n), ""]
    lines += [" ".join(map(str, row)) for row in inst.A]
    lines.append("")
    lines += [" ".join(map(str, row)) for row in inst.B]
    return "\n".join(lines) + "\n"


def read_qaplib(path, *, strict: bool = False) -> QapInstance:
    path = Path(path)
    return parse_qaplib(path.read_text(), name=path.stem, strict=strict)


def parse_bqop(text: str, *, name: str = "") -> CardBqop:
    """Parse the ``.bqop`` layout: header ``n m scale source`` then the n*n entries of B."""
    head, _, body = text.strip().partition("\n")
    parts = head.split()
    if len(parts) != 4:
        raise QaplibFormatError("bqop header must be 'n m scale source'")
    n, m, scale = (int(p) for p in parts[:3])
    values = _tokens_to_ints(body)
    if len(values) != n * n:
        raise CountMismatchError(f"expected {n * n} entries for n={n}, found {len(values)}")
    B = np.asarray(values, dtype=np.int64).reshape(n, n)
    return CardBqop(B, m, scale, source=parts[3], name=name)


def serialize_bqop(bqop: CardBqop) -> str:
    lines = [f"{bqop.n} {bqop.m} {bqop.scale} {bqop.source}"]
    lines += [" ".join(map(str, row)) for row in bqop.B]
    return "\n".join(lines) + "\n"


def generate_tai256c_A() -> np.ndarray:
    """Flow matrix of tai256c: ones off the diagonal of the leading 92x92 block."""
    A = np.zeros((TAI256C_N, TAI256C_N), dtype=np.int64)
    A[:TAI256C_M, :TAI256C_M] = 1
    np.fill_diagonal(A, 0)
    A.setflags(write=False)
    return A


def qap_objective(inst: QapInstance, perm) -> int:
    """``sum_i sum_k a_ik * b_{perm(i) perm(k)}`` as an exact integer (``perm`` 0-based)."""
    p = check_permutation(perm, inst.n)
    return int(np.sum(inst.A * inst.B[np.ix_(p, p)]))


def bqop_objective(bqop: CardBqop, x) -> int:
    """``scale * x'Bx`` for a binary ``x`` of cardinality ``m``."""
    x = np.asarray(x)
    if x.size != bqop.n:
        raise DimensionMismatchError(f"vector has length {x.size}, expected {bqop.n}")
    x = check_binary(x, bqop.n, bqop.m)
    idx = np.flatnonzero(x)
    return bqop.scale * int(bqop.B[np.ix_(idx, idx)].sum())


def parse_solution(text: str, n: int) -> tuple[str, np.ndarray]:
    """Read a solution line; returns ``("permutation", 0-based perm)`` or ``("binary", bool vector)``.

    A QAPLIB ``.sln`` file (``n value`` header followed by the permutation)
    is accepted as well. The format is detected from the values: anything
    containing a 0 or consisting only of ones is a 0/1 vector.
    """
    values = _tokens_to_ints(text)
    if len(values) == n + 2 and values[0] == n:
        values = values[2:]
    if len(values) != n:
        raise CountMismatchError(f"solution has {len(values)} entries, expected {n}")
    vals = np.asarray(values, dtype=np.int64)
    if np.all((vals == 0) | (vals == 1)) and (0 in values or n > 1):
        return "binary", vals.astype(bool)
    return "permutation", check_permutation(vals - 1, n)


def format_solution(sol: np.ndarray) -> str:
    sol = np.asarray(sol)
    if sol.dtype == np.bool_:
        return " ".join(str(int(v)) for v in sol) + "\n"
    return " ".join(str(int(v) + 1) for v in sol) + "\n"
