"""Exact inference by variable elimination over dense factors.

The engine runs on expanded networks (plain factors only) and tolerates
negative entries everywhere except in the final, fully marginalized target
table, where tiny negative residue from exact cancellations is clamped to
zero.  Elimination cost is instrumented: scalar multiplications are counted
one per output entry per binary product, and the peak intermediate table
size is tracked.

``brute_force_joint`` answers the same queries from the original network by
enumerating the full joint; it shares no code path with elimination and acts
as the independent test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .factorize import ExpandedNetwork, oracle_cpd
from .model import Factor, GuardExceededError, Network, NoisyMaxCpd, node_parents

JOINT_STATE_GUARD = 2**22
NEGATIVE_MASS_RTOL = 1e-9


class InferenceError(Exception):
    """Base class for inference failures."""


class ZeroPosteriorError(InferenceError):
    """The normalization constant is zero: the evidence has probability
    zero, or the signed factors cancelled completely."""


class NegativeMassError(InferenceError):
    """The final unnormalized table is more negative than cancellation
    round-off can explain."""


class Heuristic(Enum):
    """Greedy elimination-ordering rules.

    ``MIN_SIZE`` picks the variable whose elimination forms the product with
    the fewest scope variables; ``MIN_WEIGHT`` minimizes that product's
    entry count (the product of its scope's domain sizes).  Ties go to the
    smallest variable id.
    """

    MIN_SIZE = "min-size"
    MIN_WEIGHT = "min-weight"


@dataclass(frozen=True)
class Query:
    """Marginal or posterior query: joint over ``targets`` given the
    observed ``evidence`` states."""

    targets: tuple[int, ...]
    evidence: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        targets = tuple(self.targets)
        evidence = dict(self.evidence)
        if not targets:
            raise ValueError("query needs at least one target")
        if len(set(targets)) != len(targets):
            raise ValueError("duplicate target")
        overlap = set(targets) & set(evidence)
        if overlap:
            raise ValueError(f"variables {sorted(overlap)} are both target and evidence")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "evidence", evidence)


@dataclass
class EliminationStats:
    multiplications: int = 0
    peak_table_entries: int = 0
    ordering: list[int] = field(default_factory=list)
    relevant_vars: int = 0
    min_unnormalized: float = 0.0


def multiply(a: Factor, b: Factor, stats: EliminationStats | None = None) -> Factor:
    """Pointwise product.  The output scope is ``a``'s scope followed by
    ``b``'s new variables; the multiplication count grows by the output
    entry count."""
    pos_b = {v: i for i, v in enumerate(b.scope)}
    a_set = set(a.scope)
    new = [v for v in b.scope if v not in a_set]
    for i, v in enumerate(a.scope):
        j = pos_b.get(v)
        if j is not None and a.values.shape[i] != b.values.shape[j]:
            raise ValueError(
                f"domain size mismatch for shared variable {v}: "
                f"{a.values.shape[i]} vs {b.values.shape[j]}"
            )
    out_scope = a.scope + tuple(new)

    a_vals = a.values.reshape(a.values.shape + (1,) * len(new))
    order = [pos_b[v] for v in out_scope if v in pos_b]
    b_vals = b.values.transpose(order) if order else b.values
    b_shape = tuple(
        b.values.shape[pos_b[v]] if v in pos_b else 1 for v in out_scope
    )
    b_vals = b_vals.reshape(b_shape)

    out = a_vals * b_vals
    if stats is not None:
        stats.multiplications += out.size
        if out.size > stats.peak_table_entries:
            stats.peak_table_entries = out.size
    return Factor(out_scope, out)


def marginalize(f: Factor, v: int) -> Factor:
    """Sum ``v`` out of the factor.  Negative entries may cancel."""
    if v not in f.scope:
        raise ValueError(f"variable {v} not in scope {f.scope}")
    axis = f.scope.index(v)
    return Factor(f.scope[:axis] + f.scope[axis + 1 :], f.values.sum(axis=axis))


def restrict(f: Factor, v: int, state: int) -> Factor:
    """Instantiate evidence: keep the selected slice and drop ``v``."""
    if v not in f.scope:
        raise ValueError(f"variable {v} not in scope {f.scope}")
    axis = f.scope.index(v)
    if not 0 <= state < f.values.shape[axis]:
        raise ValueError(f"state {state} out of range for variable {v}")
    taken = f.values[(slice(None),) * axis + (state,)]
    return Factor(f.scope[:axis] + f.scope[axis + 1 :], taken)


def align(f: Factor, scope: Sequence[int]) -> Factor:
    """Reorder axes to the given scope (a permutation of the factor's)."""
    scope = tuple(scope)
    if set(scope) != set(f.scope) or len(scope) != len(f.scope):
        raise ValueError(f"{scope} is not a permutation of {f.scope}")
    if scope == f.scope:
        return f
    perm = [f.scope.index(v) for v in scope]
    return Factor(scope, f.values.transpose(perm))


def _metric_key(
    v: int,
    factor_ids: Iterable[int],
    live: Mapping[int, Factor],
    sizes: Mapping[int, int],
    heuristic: Heuristic,
) -> tuple[int, int]:
    union: set[int] = set()
    for fid in factor_ids:
        union.update(live[fid].scope)
    if heuristic is Heuristic.MIN_SIZE:
        return (len(union), v)
    return (math.prod(sizes[u] for u in union) if union else 1, v)


def choose_next(factors: Sequence[Factor], eliminable: Iterable[int], heuristic: Heuristic) -> int:
    """Next variable to eliminate from a live factor set.  The cost of a
    candidate is measured on the product of all factors containing it."""
    candidates = sorted(set(eliminable))
    if not candidates:
        raise ValueError("no eliminable variables")
    live = dict(enumerate(factors))
    sizes: dict[int, int] = {}
    for f in factors:
        for u, s in zip(f.scope, f.values.shape):
            sizes[u] = s
    best = None
    for v in candidates:
        fids = [fid for fid, f in live.items() if v in f.scope]
        key = _metric_key(v, fids, live, sizes, heuristic)
        if best is None or key < best:
            best = key
    return best[1]


def _prune_barren(net: ExpandedNetwork, query: Query) -> set[int]:
    """Iteratively remove original leaves that are neither target nor
    evidence.  Each removed node drops its whole factor group, which sums to
    one over its child and auxiliary variables, so posteriors are
    unchanged.  Returns the kept original ids."""
    protected = set(query.targets) | set(query.evidence)
    source = net.source
    n = len(source.variables)
    child_count = [0] * n
    for vid in range(n):
        for p in node_parents(source.nodes[vid]):
            child_count[p] += 1
    removed: set[int] = set()
    stack = [v for v in range(n) if child_count[v] == 0 and v not in protected]
    while stack:
        v = stack.pop()
        removed.add(v)
        for p in node_parents(source.nodes[v]):
            child_count[p] -= 1
            if child_count[p] == 0 and p not in protected and p not in removed:
                stack.append(p)
    return set(range(n)) - removed


def _validate_query(net: ExpandedNetwork, query: Query):
    originals = set(net.original_ids)
    for t in query.targets:
        if t not in originals:
            raise ValueError(f"target {t} is not an original network variable")
    for v, state in query.evidence.items():
        if v not in originals:
            raise ValueError(f"evidence variable {v} is not an original network variable")
        if not 0 <= state < net.size_of(v):
            raise ValueError(f"evidence state {state} out of range for variable {v}")


def query_posterior(
    net: ExpandedNetwork,
    query: Query,
    heuristic: Heuristic = Heuristic.MIN_SIZE,
    *,
    order: Sequence[int] | None = None,
    max_multiplications: int | None = None,
    max_table_entries: int | None = None,
) -> tuple[Factor, EliminationStats]:
    """Posterior over the query targets by variable elimination.

    Evidence is applied by restricting every factor mentioning it (the
    effect selector included; no special casing).  Unless an explicit
    ``order`` is supplied, barren original nodes are pruned first and the
    heuristic picks the elimination order.  An explicit order must cover
    every eliminable variable; entries that have nothing to eliminate are
    skipped, so orders over all variables are accepted.

    The final table is clamped (entries within round-off of zero) and
    normalized; a zero normalization constant raises
    :class:`ZeroPosteriorError`, distinct from plain underflow.
    """
    _validate_query(net, query)
    stats = EliminationStats()

    if order is None:
        kept = _prune_barren(net, query)
    else:
        kept = set(net.original_ids)
    stats.relevant_vars = len(kept)

    sizes = {vid: var.size for vid, var in net.variables.items()}
    live: dict[int, Factor] = {}
    var_index: dict[int, set[int]] = {}
    next_fid = 0

    def insert(f: Factor):
        nonlocal next_fid
        live[next_fid] = f
        for u in f.scope:
            var_index.setdefault(u, set()).add(next_fid)
        next_fid += 1

    for child in sorted(kept):
        for idx in net.groups[child].factor_indices:
            f = net.factors[idx]
            for v, state in query.evidence.items():
                if v in f.scope:
                    f = restrict(f, v, state)
            insert(f)

    targets = set(query.targets)
    eliminable = set(var_index) - targets

    if order is not None:
        given = [v for v in order if v in eliminable]
        missing = eliminable - set(given)
        if missing:
            raise ValueError(f"explicit order misses eliminable variables {sorted(missing)}")
        sequence = iter(given)

    metric: dict[int, tuple[int, int]] = {}
    dirty = set(eliminable)

    def next_variable() -> int:
        if order is not None:
            return next(sequence)
        for v in dirty:
            metric[v] = _metric_key(v, var_index.get(v, ()), live, sizes, heuristic)
        dirty.clear()
        return min(metric.values())[1]

    def check_guards(table_entries: int):
        if max_table_entries is not None and table_entries > max_table_entries:
            raise GuardExceededError(
                f"intermediate table of {table_entries} entries exceeds the guard"
            )
        if max_multiplications is not None and stats.multiplications > max_multiplications:
            raise GuardExceededError(
                f"{stats.multiplications} multiplications exceed the guard"
            )

    while eliminable:
        v = next_variable()
        eliminable.discard(v)
        metric.pop(v, None)
        fids = sorted(var_index.get(v, ()))
        if not fids:
            continue
        product = live[fids[0]]
        for fid in fids[1:]:
            product = multiply(product, live[fid], stats)
            check_guards(product.size)
        for fid in fids:
            f = live.pop(fid)
            for u in f.scope:
                var_index[u].discard(fid)
        summed = marginalize(product, v)
        if summed.size > stats.peak_table_entries:
            stats.peak_table_entries = summed.size
        insert(summed)
        for u in summed.scope:
            if u in eliminable:
                dirty.add(u)
        stats.ordering.append(v)

    remaining = [live[fid] for fid in sorted(live)]
    result = remaining[0]
    for f in remaining[1:]:
        result = multiply(result, f, stats)
        check_guards(result.size)
    if result.size > stats.peak_table_entries:
        stats.peak_table_entries = result.size
    if set(result.scope) != targets:
        raise InferenceError(
            f"elimination left scope {result.scope}, expected targets {query.targets}"
        )
    result = align(result, query.targets)

    values = result.values
    stats.min_unnormalized = float(values.min())
    max_abs = float(np.abs(values).max())
    if max_abs == 0.0:
        raise ZeroPosteriorError(
            "zero normalization constant: evidence has probability 0, or total cancellation"
        )
    if stats.min_unnormalized < -NEGATIVE_MASS_RTOL * max_abs:
        raise NegativeMassError(
            f"unnormalized posterior entry {stats.min_unnormalized} below "
            f"-{NEGATIVE_MASS_RTOL} of the table maximum {max_abs}"
        )
    values = np.where(values < 0.0, 0.0, values)
    total = float(values.sum())
    if total <= 0.0:
        raise ZeroPosteriorError(
            "zero normalization constant: evidence has probability 0, or total cancellation"
        )
    return Factor(result.scope, values / total), stats


def _broadcast_full(f: Factor, n_vars: int, sizes: Sequence[int]) -> np.ndarray:
    order = np.argsort(f.scope)
    values = f.values.transpose(order)
    shape = [1] * n_vars
    for vid in f.scope:
        shape[vid] = sizes[vid]
    return values.reshape(shape)


def brute_force_joint(net: Network, query: Query, guard: int = JOINT_STATE_GUARD) -> Factor:
    """Posterior over the query targets by full joint enumeration of the
    original network (noisy-max nodes expanded through the enumeration
    oracle).  Independent of the elimination engine."""
    sizes = [v.size for v in net.variables]
    n = len(sizes)
    if math.prod(sizes) > guard:
        raise GuardExceededError(f"joint state space {math.prod(sizes)} exceeds the guard")
    for t in query.targets:
        if not 0 <= t < n:
            raise ValueError(f"unknown target variable {t}")
    for v, state in query.evidence.items():
        if not 0 <= v < n:
            raise ValueError(f"unknown evidence variable {v}")
        if not 0 <= state < sizes[v]:
            raise ValueError(f"evidence state {state} out of range for variable {v}")

    vmap = net.variable_map
    joint = np.ones(sizes)
    for node in net.nodes:
        if isinstance(node, NoisyMaxCpd):
            f = oracle_cpd(node, vmap)
        else:
            f = node.factor
        joint = joint * _broadcast_full(f, n, sizes)

    for v, state in query.evidence.items():
        joint = np.take(joint, [state], axis=v)
    drop = tuple(i for i in range(n) if i not in set(query.targets))
    table = joint.sum(axis=drop) if drop else joint
    remaining = tuple(sorted(query.targets))
    result = align(Factor(remaining, table), query.targets)
    total = float(result.values.sum())
    if total <= 0.0:
        raise ZeroPosteriorError(
            "zero normalization constant: evidence has probability 0, or total cancellation"
        )
    return Factor(result.scope, result.values / total)
