"""Breadth-first branch-and-bound that certifies a target lower bound.

No incumbent is searched for. Every node is bounded against the fixed
target and either pruned or split by orbit branching:
``(I0 + o, I1)`` and ``(I0, I1 + {min(o)})`` where ``o`` is an orbit of the
node's setwise stabilizer. The run ends *certified* when the frontier
empties, *refuted* when a leaf scores below the target, or *budget* when
the node or depth limit is hit.
"""
from __future__ import annotations

import logging
import math
import os
import pickle
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Literal

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bounding import BounderSpec, bound_node, make_bounder
from .instance import CardBqop, bqop_objective
from .subproblem import NodeKey, is_feasible, reduce
from .symmetry import PermutationGroup, discover_automorphisms, orbits, setwise_stabilizer

logger = logging.getLogger(__name__)

ScoreMode = Literal["reduced", "fractional", "exact"]

# ---------------------------------------------------------------------------
# orbit scoring
# ---------------------------------------------------------------------------


def _average(offset: int, trace: int, offdiag: int, mres: int, f: int, mode: ScoreMode) -> Fraction:
    if f == 0:
        return Fraction(offset)
    c = Fraction(mres, f)
    if mode == "reduced":
        return offset + c * c * (trace + offdiag)
    if mode == "fractional":
        return offset + c * trace + c * c * offdiag
    if mode == "exact":
        pair = Fraction(mres * (mres - 1), f * (f - 1)) if f > 1 else Fraction(0)
        return offset + c * trace + pair * offdiag
    raise ValueError(f"unknown score mode {mode!r}")


def score_node_average(bqop: CardBqop, key: NodeKey, mode: ScoreMode = "reduced") -> Fraction:
    """Surrogate for the mean objective of a node over its feasible completions.

    ``reduced`` (default) evaluates ``offset + y' B(I0,I1) y`` at the uniform
    point ``y = m'/|F|``; the diagonal of the reduced matrix is then weighted
    quadratically. ``fractional`` plugs the uniform point into ``x'Bx``
    directly. ``exact`` is the true average over all feasible completions.
    With ``F`` empty every mode gives the exact objective of the fixed vector.
    """
    r = reduce(bqop, key)
    tr = int(np.trace(r.matrix))
    off = int(r.matrix.sum()) - tr
    return _average(r.offset, tr, off, r.m_res, r.f, mode)


def child_scores(bqop: CardBqop, key: NodeKey, candidates: Iterable[int],
                 mode: ScoreMode = "reduced") -> list[Fraction]:
    """``score_node_average(I0, I1 + {j})`` for every ``j`` in ``candidates`` without rebuilding matrices."""
    B = bqop.B
    s = bqop.scale
    F = key.F
    I1 = np.asarray(key.I1, dtype=np.int64)
    B_FF = B[np.ix_(F, F)]
    S_FF = int(B_FF.sum())
    T = int(B[np.ix_(I1, F)].sum()) if I1.size else 0
    offset = int(B[np.ix_(I1, I1)].sum()) if I1.size else 0
    pos = {int(j): p for p, j in enumerate(F)}
    row_F = B_FF.sum(axis=1)
    col_I1 = B[np.ix_(I1, F)].sum(axis=0) if I1.size else np.zeros(len(F), dtype=np.int64)
    mres = bqop.m - len(I1) - 1
    f = len(F) - 1
    out = []
    for j in candidates:
        p = pos[int(j)]
        r_j, t_j = int(row_F[p]), int(col_I1[p])
        out.append(_average(s * (offset + 2 * t_j), s * 2 * (T - t_j + r_j), s * (S_FF - 2 * r_j), mres, f, mode))
    return out


def node_orbits(G: PermutationGroup, key: NodeKey):
    if G.order == 1:
        return orbits(G, key.F)
    return orbits(setwise_stabilizer(G, key.I0, key.I1), key.F)


def select_orbit(bqop: CardBqop, key: NodeKey, G: PermutationGroup, mode: ScoreMode = "reduced") -> np.ndarray:
    """Orbit whose representative, fixed to one, gives the largest score; ties go to the smallest representative."""
    orbs = node_orbits(G, key)
    if len(orbs) == 0:
        raise ValueError("no free variables to branch on")
    scores = child_scores(bqop, key, orbs.representatives, mode)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return orbs.orbits[best]


def branch(key: NodeKey, orbit) -> tuple[NodeKey, NodeKey]:
    """Children ``(I0 + orbit, I1)`` and ``(I0, I1 + {min(orbit)})``."""
    orbit = [int(i) for i in orbit]
    if set(orbit) & (set(key.I0) | set(key.I1)):
        raise ValueError("orbit must lie inside the free set")
    return key.with_zeros(orbit), key.with_ones([min(orbit)])


# ---------------------------------------------------------------------------
# node processing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BbConfig:
    """Settings for :func:`certify`. ``max_depth=None`` means no depth limit beyond ``n``."""

    target: float
    bounder: BounderSpec = field(default_factory=BounderSpec)
    max_nodes: int = 1_000_000
    max_depth: int | None = None
    workers: int = 1
    score: ScoreMode = "reduced"
    spill_threshold: int = 200_000
    chunk_size: int = 512
    collect_traces: bool = False

    def __post_init__(self):
        if isinstance(self.bounder, str):
            object.__setattr__(self, "bounder", BounderSpec.parse(self.bounder))
        if not math.isfinite(self.target):
            raise ValueError("target must be finite")
        if self.max_nodes <= 0 or self.workers <= 0 or self.chunk_size <= 0:
            raise ValueError("budgets and worker counts must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "bounder": self.bounder.to_dict(),
            "max_nodes": self.max_nodes,
            "max_depth": self.max_depth,
            "score": self.score,
        }


@dataclass(frozen=True)
class BbNode:
    """Processed node. ``status`` is one of infeasible, leaf, pruned, active."""

    key: NodeKey
    status: str
    value: int | None = None
    children: tuple = ()
    orbit_size: int | None = None
    steps: tuple = ()
    certificate: float | None = None
    bound_failed: bool = False

    def refutes(self, target) -> bool:
        return self.status == "leaf" and self.value < target


class _NodeProcessor:
    def __init__(self, bqop: CardBqop, G: PermutationGroup, target, bounder: BounderSpec, score: ScoreMode):
        self.bqop, self.G, self.target, self.score = bqop, G, target, score
        self.bounder = make_bounder(bounder)

    def leaf_vector(self, key: NodeKey) -> np.ndarray | None:
        mres = self.bqop.m - len(key.I1)
        F = key.F
        if len(F) and 0 < mres < len(F):
            return None
        x = np.zeros(self.bqop.n, dtype=bool)
        x[list(key.I1)] = True
        if mres == len(F):
            x[F] = True
        return x

    def __call__(self, key: NodeKey) -> BbNode:
        if not is_feasible(self.bqop, key):
            return BbNode(key, "infeasible")
        x = self.leaf_vector(key)
        if x is not None:
            return BbNode(key, "leaf", value=bqop_objective(self.bqop, x))
        r = reduce(self.bqop, key)
        verdict = bound_node(r, self.target, self.bounder)
        if verdict.pruned:
            return BbNode(key, "pruned", steps=verdict.trace, certificate=verdict.certificate)
        orbit = select_orbit(self.bqop, key, self.G, self.score)
        return BbNode(key, "active", children=branch(key, orbit), orbit_size=len(orbit),
                      steps=verdict.trace, certificate=verdict.certificate, bound_failed=verdict.failed)


_WORKER: _NodeProcessor | None = None


def _init_worker(args):
    global _WORKER
    _WORKER = _NodeProcessor(*args)


def _work(key):
    return _WORKER(key)


class NodeMapper:
    """Applies the node processor to batches, serially or with a process pool; output keeps input order."""

    def __init__(self, bqop, G, target, bounder, score, workers: int = 1):
        self.args = (bqop, G, target, bounder, score)
        self.workers = workers
        self._local = _NodeProcessor(*self.args)
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers, initializer=_init_worker,
                                             initargs=(self.args,))
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def map(self, keys: list) -> list[BbNode]:
        if self._pool is None or len(keys) < 2:
            return [self._local(k) for k in keys]
        size = max(1, len(keys) // (4 * self.workers))
        return list(self._pool.map(_work, keys, chunksize=size))


# ---------------------------------------------------------------------------
# frontier
# ---------------------------------------------------------------------------


class Frontier:
    """FIFO list of node keys that spills to a temporary file past ``spill_threshold`` entries."""

    def __init__(self, spill_threshold: int = 200_000):
        self.spill_threshold = spill_threshold
        self._buffer: list = []
        self._file = None
        self._spilled = 0

    def append(self, key: NodeKey) -> None:
        self._buffer.append((key.I0, key.I1))
        if len(self._buffer) >= self.spill_threshold:
            self._spill()

    def _spill(self):
        if self._file is None:
            self._file = tempfile.TemporaryFile(prefix="qapcert-frontier-")
        pickle.dump(self._buffer, self._file, protocol=pickle.HIGHEST_PROTOCOL)
        self._spilled += len(self._buffer)
        self._buffer = []

    @property
    def spilled(self) -> int:
        return self._spilled

    def __len__(self):
        return self._spilled + len(self._buffer)

    def iter_keys(self, n: int):
        if self._file is not None:
            self._file.flush()
            self._file.seek(0)
            while True:
                try:
                    block = pickle.load(self._file)
                except EOFError:
                    break
                for I0, I1 in block:
                    yield NodeKey(n, I0, I1)
        for I0, I1 in self._buffer:
            yield NodeKey(n, I0, I1)

    def iter_chunks(self, n: int, size: int):
        chunk = []
        for key in self.iter_keys(n):
            chunk.append(key)
            if len(chunk) == size:
                yield chunk
                chunk = []
        if chunk:
            yield chunk

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass
class BbReport:
    """Result of a certification run. ``wall_time`` is kept out of :meth:`to_dict`."""

    outcome: Literal["certified", "refuted", "budget"]
    target: float
    nodes_per_depth: list = field(default_factory=list)
    orbit_sizes_per_depth: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    bounder_stats: dict = field(default_factory=dict)
    witness: np.ndarray | None = None
    witness_value: int | None = None
    budget_reason: str | None = None
    traces: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def total_nodes(self) -> int:
        return int(sum(self.nodes_per_depth))

    @property
    def size2_per_depth(self) -> list:
        return [h.get(2, 0) for h in self.orbit_sizes_per_depth]

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "outcome": self.outcome,
            "target": self.target,
            "total_nodes": self.total_nodes,
            "nodes_per_depth": list(self.nodes_per_depth),
            "orbit_sizes_per_depth": [{str(k): v for k, v in sorted(h.items())} for h in self.orbit_sizes_per_depth],
            "size2_orbits_per_depth": self.size2_per_depth,
            "counts": dict(self.counts),
            "bounder_stats": dict(self.bounder_stats),
            "witness": None if self.witness is None else [int(i) + 1 for i in np.flatnonzero(self.witness)],
            "witness_value": self.witness_value,
            "budget_reason": self.budget_reason,
            "config": self.config,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def certify(bqop: CardBqop, config: BbConfig, G: PermutationGroup | None = None) -> BbReport:
    """Prove ``min x'Bx >= config.target`` or find a counterexample."""
    t0 = time.perf_counter()
    G = PermutationGroup.trivial(bqop.n) if G is None else G
    if G.n != bqop.n:
        raise ValueError("group and problem dimensions differ")
    max_depth = bqop.n + 1 if config.max_depth is None else config.max_depth
    counts = dict.fromkeys(("infeasible", "leaf", "pruned", "active"), 0)
    counts["bound_failures"] = 0
    steps_total = 0
    report = BbReport("budget", config.target, config=config.to_dict())

    level = Frontier(config.spill_threshold)
    level.append(NodeKey.root(bqop.n))
    generated = 0
    depth = 0
    with NodeMapper(bqop, G, config.target, config.bounder, config.score, config.workers) as mapper:
        while len(level):
            if depth > max_depth:
                report.budget_reason = f"depth limit {max_depth} reached"
                break
            if generated + len(level) > config.max_nodes:
                report.budget_reason = f"node limit {config.max_nodes} reached at depth {depth}"
                break
            generated += len(level)
            report.nodes_per_depth.append(len(level))
            hist: dict[int, int] = {}
            nxt = Frontier(config.spill_threshold)
            for index_base, chunk in _enumerate_chunks(level.iter_chunks(bqop.n, config.chunk_size)):
                for offset, node in enumerate(mapper.map(chunk)):
                    counts[node.status] += 1
                    steps_total += len(node.steps)
                    counts["bound_failures"] += node.bound_failed
                    if config.collect_traces and node.steps:
                        report.traces += [(depth, index_base + offset, node.status, s.p, s.a, s.b)
                                          for s in node.steps]
                    if node.status == "active":
                        hist[node.orbit_size] = hist.get(node.orbit_size, 0) + 1
                        for child in node.children:
                            nxt.append(child)
                    elif report.witness is None and node.refutes(config.target):
                        report.witness = _leaf_vector(bqop, node.key)
                        report.witness_value = node.value
                if report.witness is not None:
                    break
            report.orbit_sizes_per_depth.append(hist)
            level.close()
            level = nxt
            if report.witness is not None:
                report.outcome = "refuted"
                break
            depth += 1
        else:
            report.outcome = "certified"
    level.close()
    bounded = counts["pruned"] + counts["active"]
    report.counts = counts
    report.bounder_stats = {
        "name": config.bounder.name,
        "bound_calls": bounded,
        "bracket_steps": steps_total,
        "mean_steps": (steps_total / bounded) if bounded else 0.0,
    }
    report.wall_time = time.perf_counter() - t0
    logger.info("certify target=%s outcome=%s nodes=%d time=%.2fs", config.target, report.outcome,
                report.total_nodes, report.wall_time)
    return report


def _enumerate_chunks(chunks):
    base = 0
    for chunk in chunks:
        yield base, chunk
        base += len(chunk)


def _leaf_vector(bqop: CardBqop, key: NodeKey) -> np.ndarray:
    x = np.zeros(bqop.n, dtype=bool)
    x[list(key.I1)] = True
    F = key.F
    if bqop.m - len(key.I1) == len(F):
        x[F] = True
    return x


class TargetBoundCertifier(BaseEstimator):
    """Estimator front end for :func:`certify`.

    ``fit(bqop)`` runs the search (discovering the symmetry group unless one
    is passed) and stores ``report_``, ``outcome_`` and ``group_``.
    """

    def __init__(self, target=0.0, bounder="spectral", bounder_params=None, workers=1, max_nodes=1_000_000,
                 max_depth=None, score="reduced", spill_threshold=200_000, use_symmetry=True,
                 collect_traces=False):
        self.target = target
        self.bounder = bounder
        self.bounder_params = bounder_params
        self.workers = workers
        self.max_nodes = max_nodes
        self.max_depth = max_depth
        self.score = score
        self.spill_threshold = spill_threshold
        self.use_symmetry = use_symmetry
        self.collect_traces = collect_traces

    def _config(self) -> BbConfig:
        return BbConfig(
            target=self.target,
            bounder=BounderSpec(self.bounder, dict(self.bounder_params or {})),
            max_nodes=self.max_nodes,
            max_depth=self.max_depth,
            workers=self.workers,
            score=self.score,
            spill_threshold=self.spill_threshold,
            collect_traces=self.collect_traces,
        )

    def fit(self, bqop: CardBqop, group: PermutationGroup | None = None):
        if not isinstance(bqop, CardBqop):
            raise TypeError("fit expects a CardBqop")
        if group is None:
            group = discover_automorphisms(bqop.B) if self.use_symmetry else PermutationGroup.trivial(bqop.n)
        self.group_ = group
        self.report_ = certify(bqop, self._config(), group)
        self.outcome_ = self.report_.outcome
        return self

    @property
    def certified_(self) -> bool:
        check_is_fitted(self, "report_")
        return self.report_.outcome == "certified"


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
