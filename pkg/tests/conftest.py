"""Shared fixtures.

The tai256c instance is never bundled. By default it is regenerated from its
closed form (grey-pattern cells on a 16x16 torus, ``b = round(1e5 / d^2)``
with wrap-around distances, flow = the 92-facility clique) and passed through
the QAPLIB writer and parser. Set ``QAPLIB_TAI256C`` to a real ``tai256c.dat``
to use the distributed file instead; its checksum is verified.

``QAPLIB_TAI256C_SOLUTION`` may point to a best-known solution (a 1-based
permutation, QAPLIB ``.sln`` file or 0/1 selection vector) for the checks
that need one.
"""
from __future__ import annotations

import hashlib
import os
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from qapcert.instance import QapInstance, generate_tai256c_A, parse_qaplib, serialize_qaplib
from qapcert.reduction import reduce_to_bqop
from qapcert.symmetry import discover_automorphisms

TAI256C_SHA256 = "199c83466168179fb9a2272f467056697baaa6ee1b1b8238f4fd87265283e02c"
ACCEPTANCE_LINES: list[str] = []


def tai256c_B() -> np.ndarray:
    idx = np.arange(256)
    r, c = idx // 16, idx % 16
    dr = np.abs(r[:, None] - r[None, :])
    dc = np.abs(c[:, None] - c[None, :])
    d2 = np.minimum(dr, 16 - dr) ** 2 + np.minimum(dc, 16 - dc) ** 2
    B = np.zeros((256, 256), dtype=np.int64)
    for i, j in zip(*np.nonzero(d2)):
        B[i, j] = round(Fraction(100000, int(d2[i, j])))
    return B


def tai256c_text() -> str:
    path = os.environ.get("QAPLIB_TAI256C")
    if path:
        data = Path(path).read_bytes()
        if hashlib.sha256(data).hexdigest() != TAI256C_SHA256:
            raise RuntimeError(f"{path} is not the distributed tai256c.dat (checksum mismatch)")
        return data.decode()
    return serialize_qaplib(QapInstance(generate_tai256c_A(), tai256c_B(), name="tai256c"))


@pytest.fixture(scope="session")
def tai_text() -> str:
    return tai256c_text()


@pytest.fixture(scope="session")
def tai(tai_text):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the real file stores a_ii = 1 for the clique
        return parse_qaplib(tai_text, name="tai256c")


@pytest.fixture(scope="session")
def tai_bqop(tai):
    return reduce_to_bqop(tai)


@pytest.fixture(scope="session")
def tai_group(tai):
    return discover_automorphisms(tai.B)


@pytest.fixture(scope="session")
def tai_solution_text():
    path = os.environ.get("QAPLIB_TAI256C_SOLUTION")
    return Path(path).read_text() if path else None


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
