"""Expansion of noisy-max nodes into plain factors.

Four strategies are provided:

* ``trivial``              -- one dense table deterministically encoding the
  n-ary max over per-cause contribution variables.
* ``parent-divorcing``     -- a balanced binary tree of binary-max tables.
* ``temporal``             -- a left-deep chain of binary-max tables (the
  leading identity node is elided by feeding the first contribution
  directly into the first combine).
* ``multiplicative``       -- for an effect with m values, m-1 two-state
  auxiliary variables, one per prefix of the effect domain.  State ``V``
  of prefix variable i carries, per cause, the cumulative probability that
  the cause contributes a value within the first i states; state ``I``
  carries 1.  A single signed selector table over the prefix variables
  turns the products of cumulative masses into effect probabilities by
  telescoping differences.  The per-cause tables stay pairwise; the joint
  product over all causes is never materialized.

All strategies marginalize back to the same conditional table, which
:func:`oracle_cpd` computes independently by enumerating every combination
of per-cause contributions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Callable, Mapping

import numpy as np

from .model import (
    Factor,
    GuardExceededError,
    Network,
    NoisyMaxCpd,
    TableCpd,
    Variable,
    node_child,
)

V_STATE = "V"
I_STATE = "I"
PREFIX_DOMAIN = (V_STATE, I_STATE)

ORACLE_ENUMERATION_GUARD = 10**7
TABLE_ENTRY_GUARD = 10**7


class Strategy(Enum):
    """Closed enumeration of the expansion strategies."""

    TRIVIAL = "trivial"
    PARENT_DIVORCING = "parent-divorcing"
    TEMPORAL = "temporal"
    MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class ExpansionResult:
    """Factors and auxiliary variables produced for one noisy-max node.

    ``encoding_entry_count`` counts only the machinery tables (max tables or
    the effect selector), not tables restating knowledge-engineer input;
    ``total_entry_count`` counts every emitted entry.
    """

    factors: tuple[Factor, ...]
    auxiliary_variables: tuple[Variable, ...]
    encoding_entry_count: int
    total_entry_count: int


def _contribution_rows(cpd: NoisyMaxCpd) -> list[tuple[int | None, np.ndarray]]:
    """Per-contribution link rows; the leak appears as a one-row table with
    no cause variable (a virtual always-on cause)."""
    rows = [(cause, link.rows) for cause, link in zip(cpd.causes, cpd.links)]
    if cpd.leak is not None:
        rows.append((None, cpd.leak.reshape(1, -1)))
    return rows


def oracle_cpd(cpd: NoisyMaxCpd, variables: Mapping[int, Variable]) -> Factor:
    """Exact conditional table P(effect | causes) by brute-force enumeration
    of all per-cause contribution combinations.  Scope is
    ``causes + (effect,)``; every child slice sums to one.

    Serves as the independent reference for every expansion strategy.
    """
    effect = variables[cpd.effect]
    m = effect.size
    contribs = _contribution_rows(cpd)
    if m ** len(contribs) > ORACLE_ENUMERATION_GUARD:
        raise GuardExceededError(
            f"{m}^{len(contribs)} contribution combinations exceed the enumeration guard"
        )
    cause_sizes = tuple(variables[c].size for c in cpd.causes)
    n_causes = len(cpd.causes)
    out = np.zeros(cause_sizes + (m,))
    for combo in itertools.product(range(m), repeat=len(contribs)):
        weight = reduce(
            np.multiply.outer, (contribs[j][1][:, combo[j]] for j in range(n_causes))
        )
        for j in range(n_causes, len(contribs)):
            weight = weight * contribs[j][1][0, combo[j]]
        out[..., max(combo)] += weight
    return Factor(cpd.causes + (cpd.effect,), out)


def _single_link_result(cpd: NoisyMaxCpd, variables: Mapping[int, Variable]) -> ExpansionResult:
    # A lone contribution IS the conditional table: max of one value.
    (cause, rows), = _contribution_rows(cpd)
    factor = Factor((cause, cpd.effect), rows)
    return ExpansionResult((factor,), (), 0, factor.size)


def _next_id(cpd: NoisyMaxCpd, variables: Mapping[int, Variable], id_base: int | None) -> int:
    if id_base is not None:
        return id_base
    return max(variables) + 1


def _contribution_variables(
    cpd: NoisyMaxCpd,
    variables: Mapping[int, Variable],
    contribs: list[tuple[int | None, np.ndarray]],
    fresh: "_IdAllocator",
) -> tuple[list[int], list[Variable], list[Factor]]:
    """One auxiliary variable per contribution, carrying the effect domain,
    plus the factor tying it to its cause (a bare prior for the leak)."""
    effect = variables[cpd.effect]
    aux_ids, aux_vars, factors = [], [], []
    for position, (cause, rows) in enumerate(contribs):
        if cause is None:
            name = f"{effect.name}__leak"
        else:
            name = f"{effect.name}__in{position}"
        var = Variable(fresh(), name, effect.domain)
        aux_ids.append(var.id)
        aux_vars.append(var)
        if cause is None:
            factors.append(Factor((var.id,), rows[0]))
        else:
            factors.append(Factor((cause, var.id), rows))
    return aux_ids, aux_vars, factors


class _IdAllocator:
    def __init__(self, start: int):
        self.next = start

    def __call__(self) -> int:
        vid = self.next
        self.next += 1
        return vid


def _binary_max_values(m: int) -> np.ndarray:
    mx = np.maximum.outer(np.arange(m), np.arange(m))
    return (mx[..., None] == np.arange(m)).astype(float)


def expand_trivial(
    cpd: NoisyMaxCpd, variables: Mapping[int, Variable], id_base: int | None = None
) -> ExpansionResult:
    """One deterministic table over all contribution variables plus the
    effect; its size is m**(k+1) for k contributions."""
    contribs = _contribution_rows(cpd)
    if len(contribs) == 1:
        return _single_link_result(cpd, variables)
    m = variables[cpd.effect].size
    k = len(contribs)
    if m ** (k + 1) > TABLE_ENTRY_GUARD:
        raise GuardExceededError(f"trivial max table would hold {m}^{k + 1} entries")
    fresh = _IdAllocator(_next_id(cpd, variables, id_base))
    aux_ids, aux_vars, factors = _contribution_variables(cpd, variables, contribs, fresh)

    grids = np.indices((m,) * k)
    mx = np.maximum.reduce(grids)
    max_table = (mx[..., None] == np.arange(m)).astype(float)
    factors.append(Factor(tuple(aux_ids) + (cpd.effect,), max_table))

    encoding = m ** (k + 1)
    return ExpansionResult(
        tuple(factors), tuple(aux_vars), encoding, sum(f.size for f in factors)
    )


def expand_parent_divorcing(
    cpd: NoisyMaxCpd, variables: Mapping[int, Variable], id_base: int | None = None
) -> ExpansionResult:
    """Balanced binary tree of k-1 binary-max tables over the contribution
    variables (declared cause order, ties split left-heavy); the root
    outputs the effect."""
    contribs = _contribution_rows(cpd)
    if len(contribs) == 1:
        return _single_link_result(cpd, variables)
    effect = variables[cpd.effect]
    m = effect.size
    fresh = _IdAllocator(_next_id(cpd, variables, id_base))
    aux_ids, aux_vars, factors = _contribution_variables(cpd, variables, contribs, fresh)
    bmax = _binary_max_values(m)

    def combine(ids: list[int], out: int):
        mid = (len(ids) + 1) // 2
        left = _subtree(ids[:mid])
        right = _subtree(ids[mid:])
        factors.append(Factor((left, right, out), bmax))

    def _subtree(ids: list[int]) -> int:
        if len(ids) == 1:
            return ids[0]
        vid = fresh()
        node = Variable(vid, f"{effect.name}__max{vid}", effect.domain)
        aux_vars.append(node)
        combine(ids, node.id)
        return node.id

    combine(aux_ids, cpd.effect)
    encoding = (len(contribs) - 1) * m**3
    return ExpansionResult(
        tuple(factors), tuple(aux_vars), encoding, sum(f.size for f in factors)
    )


def expand_temporal(
    cpd: NoisyMaxCpd, variables: Mapping[int, Variable], id_base: int | None = None
) -> ExpansionResult:
    """Left-deep chain of k-1 binary-max tables: each link folds the next
    contribution into a running max, and the last combine outputs the
    effect."""
    contribs = _contribution_rows(cpd)
    if len(contribs) == 1:
        return _single_link_result(cpd, variables)
    effect = variables[cpd.effect]
    m = effect.size
    fresh = _IdAllocator(_next_id(cpd, variables, id_base))
    aux_ids, aux_vars, factors = _contribution_variables(cpd, variables, contribs, fresh)
    bmax = _binary_max_values(m)

    running = aux_ids[0]
    for position in range(1, len(aux_ids)):
        if position == len(aux_ids) - 1:
            out = cpd.effect
        else:
            vid = fresh()
            node = Variable(vid, f"{effect.name}__run{vid}", effect.domain)
            aux_vars.append(node)
            out = node.id
        factors.append(Factor((running, aux_ids[position], out), bmax))
        running = out

    encoding = (len(contribs) - 1) * m**3
    return ExpansionResult(
        tuple(factors), tuple(aux_vars), encoding, sum(f.size for f in factors)
    )


def cumulative_density(link, prefix_len: int, state: str, cause_state: int) -> float:
    """Entry of the pairwise generalized table tying a prefix variable to one
    cause: 1 in state ``I``; in state ``V``, the total link mass the cause
    places on the first ``prefix_len`` effect values."""
    rows = link.rows
    m = rows.shape[1]
    if not 1 <= prefix_len <= m - 1:
        raise ValueError(f"prefix length {prefix_len} out of range 1..{m - 1}")
    if state == I_STATE:
        return 1.0
    if state == V_STATE:
        return float(rows[cause_state, :prefix_len].sum())
    raise ValueError(f"state must be {V_STATE!r} or {I_STATE!r}, got {state!r}")


def _selector_values(m: int) -> np.ndarray:
    """Signed selector over the m-1 prefix variables and the effect.

    Axis order: prefix variables 1..m-1 (states V=0, I=1), then the effect.
    For each prefix j the lone-V pattern contributes +1 at effect value j-1
    and -1 at effect value j; the all-I pattern contributes +1 at the top
    effect value.  Entries lie in {-1, 0, +1} and sum to one.
    """
    values = np.zeros((2,) * (m - 1) + (m,))
    all_i = (1,) * (m - 1)
    values[all_i + (m - 1,)] = 1.0
    for j in range(1, m):
        pattern = [1] * (m - 1)
        pattern[j - 1] = 0
        values[tuple(pattern) + (j - 1,)] = 1.0
        values[tuple(pattern) + (j,)] = -1.0
    return values


def expand_multiplicative(
    cpd: NoisyMaxCpd, variables: Mapping[int, Variable], id_base: int | None = None
) -> ExpansionResult:
    """m-1 two-state prefix variables, one pairwise cumulative table per
    (prefix, cause), and one signed effect selector.  No table over more
    than one cause is ever produced."""
    contribs = _contribution_rows(cpd)
    if len(contribs) == 1:
        return _single_link_result(cpd, variables)
    effect = variables[cpd.effect]
    m = effect.size
    fresh = _IdAllocator(_next_id(cpd, variables, id_base))

    prefix_ids, aux_vars, factors = [], [], []
    for i in range(1, m):
        var = Variable(fresh(), f"{effect.name}__cum{i}", PREFIX_DOMAIN)
        prefix_ids.append(var.id)
        aux_vars.append(var)
        for cause, rows in contribs:
            v_row = rows[:, :i].sum(axis=1)
            if cause is None:
                factors.append(Factor((var.id,), np.array([v_row[0], 1.0])))
            else:
                factors.append(Factor((var.id, cause), np.stack([v_row, np.ones_like(v_row)])))

    factors.append(Factor(tuple(prefix_ids) + (cpd.effect,), _selector_values(m)))
    encoding = m * 2 ** (m - 1)
    return ExpansionResult(
        tuple(factors), tuple(aux_vars), encoding, sum(f.size for f in factors)
    )


_EXPANDERS: dict[Strategy, Callable] = {
    Strategy.TRIVIAL: expand_trivial,
    Strategy.PARENT_DIVORCING: expand_parent_divorcing,
    Strategy.TEMPORAL: expand_temporal,
    Strategy.MULTIPLICATIVE: expand_multiplicative,
}


def expand_cpd(
    cpd: NoisyMaxCpd,
    variables: Mapping[int, Variable],
    strategy: Strategy,
    id_base: int | None = None,
) -> ExpansionResult:
    return _EXPANDERS[strategy](cpd, variables, id_base)


def encoding_entries(strategy: Strategy, n_contributions: int, m: int) -> int:
    """Entry count of the machinery tables a strategy would emit, computed by
    walking the construction without materializing any array."""
    if n_contributions == 1:
        return 0
    if strategy is Strategy.TRIVIAL:
        return math.prod([m] * n_contributions) * m
    if strategy is Strategy.MULTIPLICATIVE:
        return math.prod([2] * (m - 1)) * m
    # Both binary decompositions emit one m**3 table per combine; count the
    # combines by walking the shape they build.
    if strategy is Strategy.PARENT_DIVORCING:
        combines = 0
        stack = [n_contributions]
        while stack:
            width = stack.pop()
            if width == 1:
                continue
            combines += 1
            mid = (width + 1) // 2
            stack.extend((mid, width - mid))
        return combines * m**3
    if strategy is Strategy.TEMPORAL:
        return sum(m**3 for _ in range(1, n_contributions))
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class ExpandedNode:
    """Factors (as indices into the expanded factor list) and auxiliary
    variable ids produced for one original node."""

    child: int
    factor_indices: tuple[int, ...]
    aux_ids: tuple[int, ...]


@dataclass(frozen=True)
class SizeRow:
    child: str
    strategy: str
    encoding_entries: int
    total_entries: int
    auxiliary_count: int


@dataclass(frozen=True)
class SizeReport:
    """Per-node size accounting for one expansion pass."""

    strategy: Strategy
    rows: tuple[SizeRow, ...]

    @property
    def encoding_total(self) -> int:
        return sum(r.encoding_entries for r in self.rows)

    @property
    def entry_total(self) -> int:
        return sum(r.total_entries for r in self.rows)

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "nodes": [
                {
                    "child": r.child,
                    "strategy": r.strategy,
                    "encoding_entries": r.encoding_entries,
                    "total_entries": r.total_entries,
                    "auxiliary_count": r.auxiliary_count,
                }
                for r in self.rows
            ],
            "totals": {
                "encoding_entries": self.encoding_total,
                "total_entries": self.entry_total,
            },
        }


@dataclass(frozen=True)
class ExpandedNetwork:
    """A plain factor network: the original variables plus any auxiliary
    variables, one factor group per original node.  Factors may hold
    negative entries; this container has no normalization invariants."""

    source: Network
    variables: Mapping[int, Variable]
    factors: tuple[Factor, ...]
    groups: tuple[ExpandedNode, ...]

    @property
    def original_ids(self) -> range:
        return range(len(self.source.variables))

    @property
    def auxiliary_ids(self) -> tuple[int, ...]:
        n = len(self.source.variables)
        return tuple(vid for vid in self.variables if vid >= n)

    def size_of(self, vid: int) -> int:
        return self.variables[vid].size

    def name_of(self, vid: int) -> str:
        return self.variables[vid].name


def expand(net: Network, strategy: Strategy) -> tuple[ExpandedNetwork, SizeReport]:
    """Apply ``strategy`` to every noisy-max node of ``net``.  The result
    contains only plain factors and preserves the original variable set;
    the report aggregates per-node entry counts (zero rows when the network
    has no noisy-max nodes)."""
    variables: dict[int, Variable] = {v.id: v for v in net.variables}
    next_id = len(net.variables)
    factors: list[Factor] = []
    groups: list[ExpandedNode] = []
    rows: list[SizeRow] = []

    for node in net.nodes:
        child = node_child(node)
        if isinstance(node, TableCpd):
            factors.append(node.factor)
            groups.append(ExpandedNode(child, (len(factors) - 1,), ()))
            continue
        result = expand_cpd(node, variables, strategy, id_base=next_id)
        for aux in result.auxiliary_variables:
            variables[aux.id] = aux
        next_id += len(result.auxiliary_variables)
        start = len(factors)
        factors.extend(result.factors)
        groups.append(
            ExpandedNode(
                child,
                tuple(range(start, len(factors))),
                tuple(a.id for a in result.auxiliary_variables),
            )
        )
        rows.append(
            SizeRow(
                net.var(child).name,
                strategy.value,
                result.encoding_entry_count,
                result.total_entry_count,
                len(result.auxiliary_variables),
            )
        )

    expanded = ExpandedNetwork(net, variables, tuple(factors), tuple(groups))
    return expanded, SizeReport(strategy, tuple(rows))
