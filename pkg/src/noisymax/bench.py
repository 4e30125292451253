"""Synthetic network generators and the benchmark runner.

Generation is driven by a splitmix64 stream so that a given seed produces a
byte-identical serialized network on every platform.  The runner evaluates a
grid of (query, strategy, heuristic) cells, enforces cross-strategy
agreement, and emits decade-bucketed cost histograms.
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .factorize import ExpandedNetwork, Strategy, expand
from .infer import EliminationStats, Heuristic, Query, query_posterior
from .model import (
    Factor,
    GuardExceededError,
    LinkTable,
    Network,
    NoisyMaxCpd,
    TableCpd,
    Variable,
)

DEFAULT_GUARD_MULTS = 10**8
DEFAULT_GUARD_ENTRIES = 10**7
GUARD_MULTS_ENV = "NOISYMAX_GUARD_MULTS"
AGREEMENT_ATOL = 1e-9

_MASK = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit stream; the algorithm is fixed so independent
    implementations generate identical networks from the same seed."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], by modulus (fixed by convention)."""
        return lo + self.next_u64() % (hi - lo + 1)

    def sample(self, pool: Sequence[int], k: int) -> list[int]:
        """k items without replacement via partial Fisher-Yates."""
        items = list(pool)
        for i in range(k):
            j = self.randint(i, len(items) - 1)
            items[i], items[j] = items[j], items[i]
        return items[:k]


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for the synthetic generators.

    ``bn2o`` builds a two-level network: binary disease roots with small
    priors, and noisy-max findings whose parents are sampled from the
    diseases.  ``multilevel`` lets findings also take earlier findings as
    parents, producing a layered DAG; ``link_density`` scales its fan-in.
    """

    kind: str
    seed: int
    diseases: int
    findings: int
    max_parents: int
    effect_domain_size: int = 2
    link_density: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bn2o", "multilevel"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if min(self.diseases, self.findings, self.max_parents) < 1:
            raise ValueError("diseases, findings, and max_parents must all be >= 1")
        if self.effect_domain_size < 2:
            raise ValueError("effect_domain_size must be >= 2")
        if not 0.0 < self.link_density <= 1.0:
            raise ValueError("link_density must lie in (0, 1]")
        if self.max_parents > self.diseases:
            raise ValueError(
                f"infeasible spec: max_parents {self.max_parents} > diseases {self.diseases}"
            )


def _disease_prior(rng: SplitMix64) -> float:
    return 0.001 + rng.uniform() * 0.099


def _random_row(rng: SplitMix64, m: int) -> list[float]:
    row = [rng.uniform() for _ in range(m)]
    total = sum(row)
    while total == 0.0:
        row = [rng.uniform() for _ in range(m)]
        total = sum(row)
    return [x / total for x in row]


def _random_links(rng: SplitMix64, parents: Sequence[int], sizes: Sequence[int], m: int):
    links = []
    for cause in parents:
        rows = [_random_row(rng, m) for _ in range(sizes[cause])]
        links.append(LinkTable(cause, rows))
    return tuple(links)


def generate(spec: GeneratorSpec) -> Network:
    """Deterministic synthetic network: the same spec yields a byte-identical
    serialization."""
    rng = SplitMix64(spec.seed)
    m = spec.effect_domain_size
    finding_domain = tuple(f"l{k}" for k in range(m))

    variables: list[Variable] = []
    nodes: list = []
    sizes: list[int] = []
    for d in range(spec.diseases):
        var = Variable(len(variables), f"d{d}", ("absent", "present"))
        variables.append(var)
        sizes.append(2)
        p = _disease_prior(rng)
        nodes.append(TableCpd(Factor((var.id,), [1.0 - p, p])))

    disease_ids = list(range(spec.diseases))
    for f_idx in range(spec.findings):
        var = Variable(len(variables), f"f{f_idx}", finding_domain)
        variables.append(var)
        sizes.append(m)
        if spec.kind == "bn2o":
            count = rng.randint(1, spec.max_parents)
            parents = sorted(rng.sample(disease_ids, count))
        else:
            pool = list(range(var.id))
            cap = min(spec.max_parents, len(pool))
            desired = rng.randint(1, cap)
            count = min(cap, max(1, round(desired * spec.link_density)))
            parents = sorted(rng.sample(pool, count))
        links = _random_links(rng, parents, sizes, m)
        nodes.append(NoisyMaxCpd(var.id, tuple(parents), links))

    return Network(tuple(variables), tuple(nodes))


@dataclass(frozen=True)
class BenchCell:
    query: str
    strategy: str
    heuristic: str
    multiplications: int
    peak_table_entries: int
    relevant_vars: int
    status: str
    time_ms: float


@dataclass(frozen=True)
class BenchReport:
    """Per-cell results plus decade histograms and totals.

    Everything except wall-clock times is a deterministic function of the
    inputs; :meth:`to_json` keeps times in a separate field so reports can
    be compared byte-for-byte modulo timing.
    """

    cells: tuple[BenchCell, ...]
    histograms: dict
    totals: dict
    query_count: int

    def to_json(self, include_timings: bool = True) -> dict:
        doc = {
            "query_count": self.query_count,
            "cells": [
                {
                    "query": c.query,
                    "strategy": c.strategy,
                    "heuristic": c.heuristic,
                    "multiplications": c.multiplications,
                    "peak_table_entries": c.peak_table_entries,
                    "relevant_vars": c.relevant_vars,
                    "status": c.status,
                }
                for c in self.cells
            ],
            "histograms": self.histograms,
            "totals": self.totals,
        }
        if include_timings:
            doc["cell_times_ms"] = [c.time_ms for c in self.cells]
        return doc

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["query", "strategy", "heuristic", "mults", "peak", "time_ms", "status"])
        for c in self.cells:
            writer.writerow(
                [
                    c.query,
                    c.strategy,
                    c.heuristic,
                    c.multiplications,
                    c.peak_table_entries,
                    f"{c.time_ms:.3f}",
                    c.status,
                ]
            )
        return out.getvalue()


class AgreementError(Exception):
    """Completed strategies disagreed on a query beyond tolerance."""

    def __init__(self, query: str, deviation: float):
        super().__init__(
            f"strategies disagree on query {query!r}: max deviation {deviation:.3e}"
        )
        self.query = query
        self.deviation = deviation


def _decade_bucket(mults: int) -> str:
    if mults < 10:
        return "0-9"
    k = len(str(mults)) - 1
    return f"{10**k}-{10**(k + 1) - 1}"


def _query_label(net: Network, query: Query) -> str:
    names = [net.var(t).name for t in query.targets]
    label = ",".join(names)
    if query.evidence:
        obs = ",".join(
            f"{net.var(v).name}={net.var(v).domain[s]}"
            for v, s in sorted(query.evidence.items())
        )
        label = f"{label}|{obs}"
    return label


def default_guard_mults() -> int:
    raw = os.environ.get(GUARD_MULTS_ENV)
    return int(raw) if raw else DEFAULT_GUARD_MULTS


def run_benchmark(
    net: Network,
    strategies: Sequence[Strategy],
    heuristics: Sequence[Heuristic],
    queries="all-marginals",
    *,
    guard_mults: int | None = None,
    guard_entries: int = DEFAULT_GUARD_ENTRIES,
    expanded: Mapping[Strategy, ExpandedNetwork] | None = None,
    atol: float = AGREEMENT_ATOL,
) -> BenchReport:
    """Run every (query, strategy, heuristic) cell.

    Cells that trip a guard are recorded as aborted and excluded from the
    agreement check; any disagreement among completed cells beyond ``atol``
    raises :class:`AgreementError`.  ``expanded`` lets callers inject
    pre-expanded networks (fault injection, reuse across runs).
    """
    if guard_mults is None:
        guard_mults = default_guard_mults()
    if queries == "all-marginals":
        query_list = [Query((v.id,), {}) for v in net.variables]
    else:
        query_list = list(queries)

    nets: dict[Strategy, ExpandedNetwork] = {}
    for strategy in strategies:
        if expanded is not None and strategy in expanded:
            nets[strategy] = expanded[strategy]
        else:
            nets[strategy], _ = expand(net, strategy)

    cells: list[BenchCell] = []
    counts: dict[tuple[str, str], dict[str, int]] = {
        (s.value, h.value): {} for s in strategies for h in heuristics
    }
    totals: dict[tuple[str, str], dict[str, int]] = {
        (s.value, h.value): {"multiplications": 0, "completed": 0, "aborted": 0}
        for s in strategies
        for h in heuristics
    }

    for query in query_list:
        label = _query_label(net, query)
        answers: list[tuple[str, Factor]] = []
        for strategy in strategies:
            for heuristic in heuristics:
                start = time.perf_counter()
                try:
                    posterior, stats = query_posterior(
                        nets[strategy],
                        query,
                        heuristic,
                        max_multiplications=guard_mults,
                        max_table_entries=guard_entries,
                    )
                    status = "ok"
                except GuardExceededError:
                    posterior, stats = None, EliminationStats()
                    status = "aborted"
                elapsed = (time.perf_counter() - start) * 1000.0
                key = (strategy.value, heuristic.value)
                bucket = _decade_bucket(stats.multiplications) if status == "ok" else "aborted"
                counts[key][bucket] = counts[key].get(bucket, 0) + 1
                totals[key]["multiplications"] += stats.multiplications
                totals[key]["completed" if status == "ok" else "aborted"] += 1
                cells.append(
                    BenchCell(
                        label,
                        strategy.value,
                        heuristic.value,
                        stats.multiplications,
                        stats.peak_table_entries,
                        stats.relevant_vars,
                        status,
                        elapsed,
                    )
                )
                if status == "ok":
                    answers.append((f"{strategy.value}/{heuristic.value}", posterior))
        if len(answers) > 1:
            worst = 0.0
            for i in range(len(answers)):
                for j in range(i + 1, len(answers)):
                    dev = float(abs(answers[i][1].values - answers[j][1].values).max())
                    worst = max(worst, dev)
            if worst > atol:
                raise AgreementError(label, worst)

    def _bucket_sort_key(bucket: str):
        return (1, 0) if bucket == "aborted" else (0, int(bucket.split("-")[0]))

    histograms = {
        f"{s}/{h}": {b: n for b, n in sorted(c.items(), key=lambda kv: _bucket_sort_key(kv[0]))}
        for (s, h), c in counts.items()
    }
    totals_json = {f"{s}/{h}": t for (s, h), t in totals.items()}
    return BenchReport(tuple(cells), histograms, totals_json, len(query_list))
