import math

import numpy as np
import pytest

from oracles import constrained_min, random_sym, torus_B
from qapcert.bounding import (
    BisectionBounder,
    BounderSpec,
    available_bounders,
    bound_node,
    exact_bound,
    exact_minimize,
    make_bounder,
    register_bounder,
    spectral_bound,
)
from qapcert.exceptions import EnumerationBudgetExceeded, UnknownBounderError
from qapcert.instance import CardBqop
from qapcert.subproblem import NodeKey, ReducedBqop, reduce


def _reduced(matrix, m_res, offset=0):
    M = np.asarray(matrix, dtype=np.int64)
    M.setflags(write=False)
    f = len(M)
    return ReducedBqop(NodeKey(f), np.arange(f), M, offset, m_res)


def _random_reduced(rng, fmax=12):
    f = int(rng.integers(1, fmax + 1))
    M = random_sym(rng, f, -30, 60)
    M = M + np.diag(rng.integers(-30, 60, f))
    return _reduced(M, int(rng.integers(0, f + 1)), int(rng.integers(-100, 100)))


def test_spectral_zero_matrix_gives_offset():
    assert spectral_bound(_reduced(np.zeros((5, 5), int), 2, 7)) == pytest.approx(7, abs=1e-6)


def test_spectral_hand_example():
    assert spectral_bound(_reduced([[0, 1], [1, 0]], 1)) == pytest.approx(0.0, abs=1e-6)


def test_spectral_degenerate_cardinalities():
    M = np.array([[2, 1, 0], [1, 0, 3], [0, 3, 1]])
    assert spectral_bound(_reduced(M, 0, 5)) == 5
    assert spectral_bound(_reduced(M, 3, 5)) == 5 + M.sum()


def test_spectral_is_valid_on_random_problems():
    rng = np.random.default_rng(0)
    for _ in range(300):
        r = _random_reduced(rng)
        assert spectral_bound(r) <= constrained_min(r.matrix, r.offset, r.m_res)


def test_spectral_valid_on_highly_symmetric_matrices():
    # repeated eigenvalues stress the tolerance shift
    for rows, cols in [(2, 3), (3, 3), (3, 4)]:
        B = torus_B(rows, cols)
        n = rows * cols
        for m in range(n + 1):
            r = reduce(CardBqop(B, m), NodeKey.root(n))
            assert spectral_bound(r) <= constrained_min(r.matrix, 0, m)


def test_exact_examples():
    M = np.array([[5, 1], [1, 7]])
    assert exact_bound(_reduced(M, 0, 3)) == 3
    J = np.ones((4, 4), int) - np.eye(4, dtype=int)
    assert exact_bound(_reduced(J, 2, 10)) == 12


def test_exact_matches_oracle_and_returns_minimiser():
    rng = np.random.default_rng(1)
    for _ in range(100):
        r = _random_reduced(rng, 10)
        val, y = exact_minimize(r)
        assert val == constrained_min(r.matrix, r.offset, r.m_res)
        assert y.sum() == r.m_res and r.value(y) == val


def test_exact_budget():
    r = _reduced(np.zeros((20, 20), int), 10)
    with pytest.raises(EnumerationBudgetExceeded):
        exact_bound(r, budget=1000)


def test_one_shot_bounders_emit_single_step():
    r = _random_reduced(np.random.default_rng(2))
    for name in ("spectral", "exact"):
        steps = list(make_bounder(name).brackets(r))
        assert len(steps) == 1 and steps[0][0] == steps[0][1]


def test_bisection_trace_is_monotone_and_converges_to_spectral():
    rng = np.random.default_rng(3)
    for _ in range(100):
        r = _random_reduced(rng)
        steps = list(BisectionBounder().brackets(r))
        a = [s[0] for s in steps]
        b = [s[1] for s in steps]
        assert all(x <= y for x, y in zip(a, b))
        assert a == sorted(a) and b == sorted(b, reverse=True)
        if 0 < r.m_res < r.f:
            assert a[-1] <= constrained_min(r.matrix, r.offset, r.m_res)
            assert a[-1] == pytest.approx(spectral_bound(r), rel=1e-4, abs=1e-3)


def test_bound_node_rules():
    rng = np.random.default_rng(4)
    for _ in range(200):
        r = _random_reduced(rng, 9)
        opt = constrained_min(r.matrix, r.offset, r.m_res)
        ex = bound_node(r, opt, "exact")
        assert ex.pruned and ex.certificate == opt
        assert not bound_node(r, opt + 1, "exact").pruned
        for name in ("spectral", "bisection"):
            assert bound_node(r, -1e18, name).pruned
            assert len(bound_node(r, -1e18, name).trace) == 1
            assert not bound_node(r, opt + 1, name).pruned


def test_early_stop_does_not_change_emitted_brackets():
    rng = np.random.default_rng(5)
    for _ in range(50):
        r = _random_reduced(rng)
        full = [(a, b) for a, b in BisectionBounder().brackets(r)]
        for target in (full[0][0] - 1, full[-1][0], full[0][1] + 1, 0.5 * (full[0][0] + full[0][1])):
            v = bound_node(r, target, "bisection")
            assert [(s.a, s.b) for s in v.trace] == full[: len(v.trace)]


class _Broken:
    name = "broken"

    def brackets(self, r):
        yield 0.0, 10.0
        raise np.linalg.LinAlgError("no convergence")


class _NonMonotone:
    def brackets(self, r):
        yield 0.0, 10.0
        yield -1.0, 5.0


class _Silent:
    def brackets(self, r):
        yield 0.0, 10.0


@pytest.mark.parametrize("bounder", [_Broken(), _NonMonotone(), _Silent()])
def test_failures_degrade_to_active(bounder):
    v = bound_node(_reduced([[0, 1], [1, 0]], 1), 5.0, bounder)
    assert not v.pruned and v.failed and v.certificate == math.inf


def test_registry():
    assert {"spectral", "exact", "bisection"} <= set(available_bounders())
    with pytest.raises(UnknownBounderError):
        make_bounder("nope")
    register_bounder("flat", lambda value=0.0: type("Flat", (), {"brackets": lambda self, r: iter([(value, value)])})())
    v = bound_node(_reduced([[0]], 0), 1.0, BounderSpec.parse("flat:value=2"))
    assert v.pruned and v.certificate == 2.0


def test_spec_parse():
    s = BounderSpec.parse("bisection:max_iter=5,rel_tol=0.01")
    assert s.name == "bisection" and s.params == {"max_iter": 5, "rel_tol": 0.01}
    assert s.to_dict() == {"name": "bisection", "params": {"max_iter": 5, "rel_tol": 0.01}}
