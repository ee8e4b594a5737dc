import itertools
from math import comb

import numpy as np
import pytest

from oracles import is_group, random_sym, torus_B, xBx
from qapcert.exceptions import GroupTooLargeError
from qapcert.instance import CardBqop
from qapcert.subproblem import NodeKey, reduce
from qapcert.symmetry import (
    AutomorphismFinder,
    PermutationGroup,
    discover_automorphisms,
    expand_solution,
    orbits,
    setwise_stabilizer,
)


def brute_automorphisms(B):
    n = len(B)
    return sorted(p for p in itertools.permutations(range(n))
                  if np.array_equal(B[np.ix_(p, p)], B))


def test_complete_graph_gives_symmetric_group():
    B = np.ones((4, 4), int) - np.eye(4, dtype=int)
    assert discover_automorphisms(B).order == 24


def test_rigid_matrix_gives_identity():
    B = np.array([[0, 1, 2, 3], [1, 0, 4, 5], [2, 4, 0, 6], [3, 5, 6, 0]])
    G = discover_automorphisms(B)
    assert G.order == 1 and G.elements[0].tolist() == [0, 1, 2, 3]


@pytest.mark.parametrize("seed", range(12))
def test_discovery_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    B = random_sym(rng, n, 0, int(rng.integers(1, 4)))  # few values -> nontrivial groups
    G = discover_automorphisms(B)
    assert [tuple(e) for e in G.elements] == brute_automorphisms(B)


@pytest.mark.parametrize("rows, cols", [(2, 3), (3, 3), (2, 4)])
def test_torus_group_matches_brute_force(rows, cols):
    B = torus_B(rows, cols)
    G = discover_automorphisms(B)
    assert [tuple(e) for e in G.elements] == brute_automorphisms(B)
    assert is_group(G.elements)


def test_element_cap():
    B = np.ones((7, 7), int) - np.eye(7, dtype=int)
    with pytest.raises(GroupTooLargeError):
        discover_automorphisms(B, max_elements=100)


def test_tai256c_group(tai_group, tai):
    assert tai_group.order == 2048
    E = tai_group.elements
    assert E[0].tolist() == list(range(256))
    rng = np.random.default_rng(0)
    rows = {e.tobytes() for e in E}
    for _ in range(200):
        a, b = E[rng.integers(2048)], E[rng.integers(2048)]
        assert a[b].tobytes() in rows
        assert np.argsort(a).tobytes() in rows
    for e in E[rng.integers(0, 2048, 50)]:
        assert np.array_equal(tai.B[np.ix_(e, e)], tai.B)


def test_objective_invariance_tai256c(tai_group, tai):
    rng = np.random.default_rng(1)
    E = tai_group.elements
    for _ in range(1000):
        x = rng.random(256) < 0.36
        p = E[rng.integers(len(E))]
        assert xBx(tai.B, x[p]) == xBx(tai.B, x)


def test_stabilizer_examples(tai_group):
    assert setwise_stabilizer(tai_group).order == 2048
    assert setwise_stabilizer(tai_group, [], list(range(256))).order == 2048
    fix_first = setwise_stabilizer(tai_group, [], [0])
    assert fix_first.order == 8


def test_stabilizer_of_all_points_on_rigid_group():
    B = torus_B(3, 3)
    G = discover_automorphisms(B)
    assert setwise_stabilizer(G, [0], [1, 2]).order < G.order
    # fixing every point individually leaves only the identity
    keep = G.elements
    for i in range(9):
        keep = keep[keep[:, i] == i]
    assert len(keep) == 1


def test_table_orbits_after_fixing_first_location(tai_group):
    key = NodeKey(256, (), (0,))
    orb = orbits(setwise_stabilizer(tai_group, key.I0, key.I1), key.F)
    assert len(orb) == 44
    assert orb.size_profile() == {8: 21, 4: 21, 2: 1, 1: 1}
    assert (orb.orbit_of(1) + 1).tolist() == [2, 16, 17, 241]


def test_root_has_single_orbit(tai_group):
    orb = orbits(tai_group)
    assert len(orb) == 1 and len(orb.orbits[0]) == 256


def test_identity_group_gives_singletons():
    orb = orbits(PermutationGroup.trivial(5), [0, 2, 4])
    assert [o.tolist() for o in orb] == [[0], [2], [4]]


def test_stabilizer_is_subgroup_and_refines_orbits():
    rng = np.random.default_rng(5)
    B = torus_B(3, 4)
    G = discover_automorphisms(B)
    for _ in range(20):
        idx = rng.permutation(12)
        I0, I1 = sorted(idx[:2].tolist()), sorted(idx[2:4].tolist())
        S = setwise_stabilizer(G, I0, I1)
        assert is_group(S.elements)
        for e in S.elements:
            assert set(e[I0].tolist()) == set(I0) and set(e[I1].tolist()) == set(I1)
        F = sorted(idx[4:].tolist())
        fine = orbits(S, F)
        coarse = {i: set(o.tolist()) for o in orbits(G) for i in o}
        for o in fine:
            assert set(o.tolist()) <= coarse[int(o[0])]


def test_reduced_matrix_invariance_under_stabilizer():
    rng = np.random.default_rng(6)
    B = torus_B(4, 4)
    G = discover_automorphisms(B)
    bq = CardBqop(B, 6)
    for _ in range(20):
        idx = rng.permutation(16)
        key = NodeKey(16, tuple(sorted(idx[:3].tolist())), tuple(sorted(idx[3:5].tolist())))
        r = reduce(bq, key)
        S = setwise_stabilizer(G, key.I0, key.I1)
        F = key.F
        pos = {int(j): k for k, j in enumerate(F)}
        for e in S.elements:
            perm_F = np.array([pos[int(e[j])] for j in F])
            for _ in range(5):
                y = rng.random(len(F)) < 0.5
                y_pi = np.empty_like(y)
                y_pi[perm_F] = y
                assert xBx(r.matrix, y) == xBx(r.matrix, y_pi)


def test_expand_solution_cases():
    x = np.array([1, 0, 1, 0, 0], bool)
    assert expand_solution(PermutationGroup.trivial(5), x).tolist() == [x.tolist()]
    B = np.ones((6, 6), int) - np.eye(6, dtype=int)
    G = discover_automorphisms(B)
    x = np.array([1, 1, 0, 0, 1, 0], bool)
    imgs = expand_solution(G, x, CardBqop(B, 3))
    assert len(imgs) == comb(6, 3)


def test_automorphism_finder_estimator():
    B = torus_B(3, 3)
    est = AutomorphismFinder().fit(B)
    assert est.order_ == len(brute_automorphisms(B))
    assert len(est.orbits()) == 1
    assert est.expand(np.eye(9, dtype=bool)[0]).shape == (9, 9)
