"""Input validation helpers.

All public entry points funnel their array arguments through these so that
internal code can assume 0-based ``int64`` / ``bool`` numpy arrays.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .exceptions import (
    AsymmetricMatrixError,
    CardinalityError,
    DimensionMismatchError,
    NonzeroDiagonalError,
)


def check_sym_matrix(M, *, name: str = "matrix", zero_diagonal: bool = True) -> np.ndarray:
    """Return ``M`` as a read-only square symmetric int64 array.

    Raises:
        AsymmetricMatrixError: if ``M`` is not symmetric.
        NonzeroDiagonalError: if ``zero_diagonal`` and a diagonal entry is nonzero.
    """
    arr = np.asarray(M)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {arr.shape}")
    if arr.dtype.kind not in "iub":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError(f"{name} must contain integers")
    arr = np.array(arr, dtype=np.int64)
    if not np.array_equal(arr, arr.T):
        i, j = np.argwhere(arr != arr.T)[0]
        raise AsymmetricMatrixError(
            f"{name} is not symmetric: entry ({i + 1},{j + 1}) = {arr[i, j]} "
            f"but ({j + 1},{i + 1}) = {arr[j, i]}"
        )
    if zero_diagonal and np.any(np.diag(arr) != 0):
        i = int(np.flatnonzero(np.diag(arr))[0])
        raise NonzeroDiagonalError(f"{name} has nonzero diagonal entry ({i + 1},{i + 1}) = {arr[i, i]}")
    arr.setflags(write=False)
    return arr


def check_permutation(perm, n: int | None = None) -> np.ndarray:
    """Return ``perm`` as a 0-based int64 image array, validating bijectivity."""
    arr = np.asarray(perm, dtype=np.int64).ravel()
    if n is not None and arr.size != n:
        raise DimensionMismatchError(f"permutation has length {arr.size}, expected {n}")
    if not np.array_equal(np.sort(arr), np.arange(arr.size)):
        raise ValueError("not a permutation of 0..n-1")
    return arr


def check_binary(x, n: int | None = None, m: int | None = None) -> np.ndarray:
    """Return ``x`` as a bool vector; optionally enforce length ``n`` and cardinality ``m``."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.dtype != np.bool_:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("binary vector must contain only 0 and 1")
        arr = arr.astype(bool)
    if n is not None and arr.size != n:
        raise DimensionMismatchError(f"binary vector has length {arr.size}, expected {n}")
    if m is not None and int(arr.sum()) != m:
        raise CardinalityError(f"binary vector has {int(arr.sum())} ones, expected {m}")
    return arr


def check_index_set(idx: Iterable[int] | None, n: int, *, name: str = "index set") -> np.ndarray:
    """Return a sorted, duplicate-free 0-based int64 index array inside ``range(n)``."""
    if idx is None:
        return np.empty(0, dtype=np.int64)
    arr = np.unique(np.asarray(list(idx), dtype=np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= n):
        raise ValueError(f"{name} contains indices outside 0..{n - 1}")
    return arr
