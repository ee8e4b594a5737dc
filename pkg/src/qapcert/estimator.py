"""Estimate the size of the full branch-and-bound tree by per-depth sampling.

The tree is expanded completely while a level holds fewer than
``full_width_threshold`` nodes. From the first wider level ``l`` on, only a
uniform sample of the carried nodes is bounded and branched; with ``s_k``
sampled and ``r_k`` active nodes at depth ``k``, the carried set at depth
``k+1`` is their ``2 r_k`` children and the level size is extrapolated as
``t_hat[k+1] = (2 r_k / s_k) * t_hat[k]`` starting from ``t_hat[l] = t_l``.
The estimate is ``sum_{k<=l} t_k + sum_{k>l} t_hat[k]``.

Sampling uses the raw Philox4x64 stream of numpy (a counter-based generator
keyed by the seed) with rejection sampling for bounded integers, so the
draws depend only on the seed and not on numpy's higher-level sampling code.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator

from .bb import NodeMapper, ScoreMode
from .bounding import BounderSpec
from .exceptions import BudgetExhaustedError
from .instance import CardBqop
from .subproblem import NodeKey
from .symmetry import PermutationGroup, discover_automorphisms


class PhiloxSampler:
    """Uniform draws from the raw 64-bit Philox4x64 stream keyed by ``seed``."""

    def __init__(self, seed: int):
        self._bits = np.random.Philox(key=int(seed) % (1 << 64))

    def _next64(self) -> int:
        return int(self._bits.random_raw())

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection of the top partial block."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            v = self._next64()
            if v < limit:
                return v % bound

    def sample(self, items: list, k: int) -> list:
        """``k`` items without replacement (partial Fisher-Yates shuffle), in draw order."""
        pool = list(items)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


@dataclass(frozen=True)
class EstimatorConfig:
    target: float
    bounder: BounderSpec = field(default_factory=BounderSpec)
    full_width_threshold: int = 1000
    sample_size: int = 100
    sample_cutoff: int = 500
    seed: int = 0
    score: ScoreMode = "reduced"
    max_nodes: int = 10_000_000
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.bounder, str):
            object.__setattr__(self, "bounder", BounderSpec.parse(self.bounder))
        if min(self.full_width_threshold, self.sample_size, self.sample_cutoff, self.max_nodes) <= 0:
            raise ValueError("thresholds and budgets must be positive")
        if self.sample_size > self.full_width_threshold:
            raise ValueError("sample_size must not exceed full_width_threshold")

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "bounder": self.bounder.to_dict(),
            "full_width_threshold": self.full_width_threshold,
            "sample_size": self.sample_size,
            "sample_cutoff": self.sample_cutoff,
            "seed": self.seed,
            "score": self.score,
            "max_nodes": self.max_nodes,
        }


@dataclass
class EstimatorReport:
    """``switch_depth`` is ``None`` when the whole tree fit under the width threshold."""

    switch_depth: int | None
    exact_counts: list
    per_depth: list  # rows (k, t_bar, s, r, t_hat) for k >= switch_depth
    total_estimate: Fraction
    processed_nodes: int
    config: dict = field(default_factory=dict)

    @property
    def exact_total(self) -> int:
        return int(sum(self.exact_counts))

    @property
    def rates(self) -> list:
        """``(k, 2 r_k / s_k)`` per sampled depth."""
        return [(k, Fraction(2 * r, s)) for k, _, s, r, _ in self.per_depth]

    def to_dict(self) -> dict:
        return {
            "switch_depth": self.switch_depth,
            "exact_counts": list(self.exact_counts),
            "per_depth": [
                {"k": k, "t_bar": tb, "s": s, "r": r, "t_hat": float(th), "t_hat_exact": str(th)}
                for k, tb, s, r, th in self.per_depth
            ],
            "rates": [{"k": k, "rate": float(v)} for k, v in self.rates],
            "total_estimate": float(self.total_estimate),
            "total_estimate_exact": str(self.total_estimate),
            "processed_nodes": self.processed_nodes,
            "config": self.config,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "t_bar", "s", "r", "t_hat", "rate"])
        for (k, tb, s, r, th), (_, rate) in zip(self.per_depth, self.rates):
            w.writerow([k, tb, s, r, repr(float(th)), repr(float(rate))])
        return buf.getvalue()


def _process(mapper: NodeMapper, keys: list, cache: dict | None):
    if cache is None:
        return mapper.map(keys)
    missing = [k for k in keys if (k.I0, k.I1) not in cache]
    for k, node in zip(missing, mapper.map(missing)):
        cache[(k.I0, k.I1)] = node
    return [cache[(k.I0, k.I1)] for k in keys]


def estimate(bqop: CardBqop, G: PermutationGroup | None, cfg: EstimatorConfig,
             cache: dict | None = None) -> EstimatorReport:
    """Run the sampling estimator.

    ``cache`` (optional dict) memoises processed nodes; node processing does
    not depend on the seed, so a cache can be shared across seeds.

    Raises:
        BudgetExhaustedError: after more than ``cfg.max_nodes`` processed nodes.
    """
    G = PermutationGroup.trivial(bqop.n) if G is None else G
    rng = PhiloxSampler(cfg.seed)
    processed = 0
    exact_counts: list[int] = []

    def run(keys):
        nonlocal processed
        processed += len(keys)
        if processed > cfg.max_nodes:
            raise BudgetExhaustedError(f"estimator processed more than {cfg.max_nodes} nodes")
        return _process(mapper, keys, cache)

    with NodeMapper(bqop, G, cfg.target, cfg.bounder, cfg.score, cfg.workers) as mapper:
        level = [NodeKey.root(bqop.n)]
        depth = 0
        while level and len(level) < cfg.full_width_threshold:
            exact_counts.append(len(level))
            level = [c for node in run(level) if node.status == "active" for c in node.children]
            depth += 1
        if not level:
            total = Fraction(sum(exact_counts))
            return EstimatorReport(None, exact_counts, [], total, processed, cfg.to_dict())

        switch = depth
        exact_counts.append(len(level))
        carried = level
        t_hat = Fraction(len(level))
        rows = []
        while True:
            t_bar = len(carried)
            s = cfg.sample_size if t_bar >= cfg.sample_cutoff else t_bar
            sample = rng.sample(carried, s)
            active = [node for node in run(sample) if node.status == "active"]
            r = len(active)
            rows.append((depth, t_bar, s, r, t_hat))
            if r == 0:
                break
            carried = [c for node in active for c in node.children]
            t_hat = t_hat * Fraction(2 * r, s)
            depth += 1
    total = Fraction(sum(exact_counts)) + sum((row[4] for row in rows[1:]), Fraction(0))
    return EstimatorReport(switch, exact_counts, rows, total, processed, cfg.to_dict())


class TreeSizeEstimator(BaseEstimator):
    """Estimator front end for :func:`estimate`; ``fit`` stores ``report_`` and ``total_estimate_``."""

    def __init__(self, target=0.0, bounder="spectral", bounder_params=None, full_width_threshold=1000,
                 sample_size=100, sample_cutoff=500, seed=0, score="reduced", max_nodes=10_000_000,
                 workers=1, use_symmetry=True):
        self.target = target
        self.bounder = bounder
        self.bounder_params = bounder_params
        self.full_width_threshold = full_width_threshold
        self.sample_size = sample_size
        self.sample_cutoff = sample_cutoff
        self.seed = seed
        self.score = score
        self.max_nodes = max_nodes
        self.workers = workers
        self.use_symmetry = use_symmetry

    def fit(self, bqop: CardBqop, group: PermutationGroup | None = None, cache: dict | None = None):
        if group is None:
            group = discover_automorphisms(bqop.B) if self.use_symmetry else PermutationGroup.trivial(bqop.n)
        cfg = EstimatorConfig(
            target=self.target,
            bounder=BounderSpec(self.bounder, dict(self.bounder_params or {})),
            full_width_threshold=self.full_width_threshold,
            sample_size=self.sample_size,
            sample_cutoff=self.sample_cutoff,
            seed=self.seed,
            score=self.score,
            max_nodes=self.max_nodes,
            workers=self.workers,
        )
        self.group_ = group
        self.report_ = estimate(bqop, group, cfg, cache)
        self.total_estimate_ = float(self.report_.total_estimate)
        return self
