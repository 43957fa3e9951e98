"""Workflow, infrastructure, and plan data model.

All types here are immutable after construction and safe to share across
threads; the operations are pure functions.

Tier indices are 1-based: tier 1 is the lowest (edge) tier and tier
``len(tiers)`` is the root (cloud) tier. A forbidden tier pair (traffic
flowing downward under assumption A2) is represented internally as
``math.inf`` in ``traffic_price``; instance files use the string sentinel
``"forbidden"`` instead (see :mod:`hetplan.instance`).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping

import networkx as nx

from .errors import CycleError, HetplanError

# Implicit variant carried by source/relational/sink nodes.
IDENTITY = "identity"

NODE_KINDS = ("ml", "relational", "source", "sink")
ASSIGNABLE_KINDS = ("ml", "relational")

FORBIDDEN = math.inf


@dataclass(frozen=True)
class OperatorNode:
    id: str
    kind: str
    # outputs-per-input for each variant this node may run
    output_ratio: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class LogicalPlan:
    """DAG of operators with per-operator model choices and edge data rates."""

    nodes: tuple[OperatorNode, ...]
    edges: tuple[tuple[str, str], ...]
    choices: Mapping[str, tuple[str, ...]]
    edge_unit_size: Mapping[tuple[str, str], float]  # bytes per item on the edge
    source_throughput: Mapping[str, float]  # items/second per source node

    def node(self, node_id: str) -> OperatorNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def parents(self, node_id: str) -> list[str]:
        return sorted(u for (u, v) in self.edges if v == node_id)

    def children(self, node_id: str) -> list[str]:
        return sorted(v for (u, v) in self.edges if u == node_id)

    def sources(self) -> list[str]:
        return sorted(n.id for n in self.nodes if n.kind == "source")

    def sink(self) -> str:
        sinks = [n.id for n in self.nodes if n.kind == "sink"]
        if len(sinks) != 1:
            raise HetplanError(f"plan must have exactly one sink, found {sinks}")
        return sinks[0]

    def assignable_nodes(self) -> list[str]:
        return [n.id for n in self.nodes if n.kind in ASSIGNABLE_KINDS]

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.node_ids)
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class Worker:
    id: str
    type: str
    tier: int  # 1-based tier index
    location: int  # 0-based location index within the tier


@dataclass(frozen=True)
class InfrastructureSpec:
    """Tier tree with locations, worker types, and inter-tier traffic prices."""

    tiers: tuple[str, ...]  # tiers[0] is tier 1 (edge), tiers[-1] is the root
    locations_per_parent: Mapping[int, int]  # tier index -> locations per parent
    worker_types: Mapping[str, float]  # type id -> hourly price ($/hour)
    workers: tuple[Worker, ...]
    traffic_price: Mapping[tuple[int, int], float]  # (tier, tier) -> $/byte

    @property
    def n_tiers(self) -> int:
        return len(self.tiers)

    def worker(self, worker_id: str) -> Worker:
        for w in self.workers:
            if w.id == worker_id:
                return w
        raise KeyError(worker_id)

    def tier_of(self, worker_id: str) -> int:
        return self.worker(worker_id).tier

    def hourly_price(self, worker_id: str) -> float:
        return self.worker_types[self.worker(worker_id).type]

    def traffic(self, tier_from: int, tier_to: int) -> float:
        """$/byte between tiers; FORBIDDEN (inf) for downward flow (A2)."""
        if tier_from == tier_to:
            return self.traffic_price.get((tier_from, tier_to), 0.0)
        return self.traffic_price.get((tier_from, tier_to), FORBIDDEN)

    def total_locations(self, tier: int) -> int:
        """Number of locations a tier has in the whole partition."""
        count = 1
        for j in range(tier, self.n_tiers + 1):
            count *= self.locations_per_parent.get(j, 1)
        return count


@dataclass(frozen=True)
class CostBreakdown:
    compute: float  # $/hour
    network: float  # $/hour
    total: float  # $/hour

    @classmethod
    def make(cls, compute: float, network: float) -> "CostBreakdown":
        return cls(compute=compute, network=network, total=compute + network)


@dataclass(frozen=True)
class PhysicalPlan:
    selection: Mapping[str, str]  # node id -> variant id
    assignment: Mapping[str, frozenset[str]]  # node id -> worker ids
    cost: CostBreakdown


def validate(plan: LogicalPlan, infra: InfrastructureSpec) -> list[str]:
    """Check all data-model invariants; returns one message per violation.

    An empty list means the instance is well formed. Violations are data,
    not failures: this never raises for bad content.
    """
    out: list[str] = []
    ids = set()
    for n in plan.nodes:
        if n.id in ids:
            out.append(f"duplicate node id {n.id}")
        ids.add(n.id)
        if n.kind not in NODE_KINDS:
            out.append(f"node {n.id} has unknown kind {n.kind!r}")

    for (u, v) in plan.edges:
        if u not in ids:
            out.append(f"edge source {u} undefined")
        if v not in ids:
            out.append(f"edge target {v} undefined")
        if (u, v) not in plan.edge_unit_size:
            out.append(f"edge {u}->{v} has no unit size")

    for edge, size in plan.edge_unit_size.items():
        if edge not in set(plan.edges):
            out.append(f"unit size given for unknown edge {edge[0]}->{edge[1]}")
        elif size < 0:
            out.append(f"edge {edge[0]}->{edge[1]} unit size is negative")

    g = nx.DiGraph()
    g.add_nodes_from(ids)
    g.add_edges_from((u, v) for (u, v) in plan.edges if u in ids and v in ids)
    if not nx.is_directed_acyclic_graph(g):
        out.append("edges do not form a DAG (cycle detected)")

    sinks = [n.id for n in plan.nodes if n.kind == "sink"]
    if len(sinks) != 1:
        out.append(f"plan must have exactly one sink node, found {len(sinks)}")

    for n in plan.nodes:
        ch = tuple(plan.choices.get(n.id, ()))
        if n.kind == "ml":
            if not ch:
                out.append(f"ml node {n.id} has no model choices")
        else:
            if ch and ch != (IDENTITY,):
                out.append(
                    f"{n.kind} node {n.id} must carry the single {IDENTITY!r} choice"
                )
        for variant in ch:
            if variant not in n.output_ratio:
                out.append(f"node {n.id} has no output ratio for variant {variant}")
        for variant, ratio in n.output_ratio.items():
            if ratio <= 0:
                out.append(f"node {n.id} output ratio for {variant} is not positive")

    for n in plan.nodes:
        if n.kind == "source" and n.id not in plan.source_throughput:
            out.append(f"source node {n.id} has no source throughput")
    for node_id, rate in plan.source_throughput.items():
        if node_id not in ids:
            out.append(f"source throughput given for unknown node {node_id}")
        elif plan.node(node_id).kind != "source":
            out.append(f"source throughput given for non-source node {node_id}")
        if rate <= 0:
            out.append(f"source throughput for {node_id} must be positive")

    # Infrastructure invariants.
    n_tiers = infra.n_tiers
    if n_tiers == 0:
        out.append("infrastructure has no tiers")
    if infra.locations_per_parent.get(n_tiers, 1) != 1:
        out.append("root tier must have exactly one location per parent")
    for tier, count in infra.locations_per_parent.items():
        if not 1 <= tier <= n_tiers:
            out.append(f"locations given for unknown tier index {tier}")
        if count < 1:
            out.append(f"tier {tier} locations per parent must be >= 1")

    for i in range(1, n_tiers + 1):
        if infra.traffic_price.get((i, i), 0.0) != 0.0:
            out.append(f"A1 violated: intra-tier price nonzero for tier {i}")
        for j in range(1, n_tiers + 1):
            price = infra.traffic_price.get((i, j))
            if price is None:
                continue
            if j < i and price != FORBIDDEN:
                out.append(
                    f"A2 violated: downward price tier {i}->{j} must be forbidden"
                )
            # Upward prices may be FORBIDDEN (a link one never provisions),
            # but a plain negative or NaN price is a data error.
            if j > i and not (0 <= price <= FORBIDDEN):
                out.append(f"traffic price tier {i}->{j} must be >= 0")

    seen_workers = set()
    for w in infra.workers:
        if w.id in seen_workers:
            out.append(f"duplicate worker id {w.id}")
        seen_workers.add(w.id)
        if w.type not in infra.worker_types:
            out.append(f"worker {w.id} references unknown type {w.type}")
        if not 1 <= w.tier <= n_tiers:
            out.append(f"worker {w.id} references unknown tier {w.tier}")
        elif not 0 <= w.location < infra.total_locations(w.tier):
            out.append(f"worker {w.id} location {w.location} out of range")
    for type_id, price in infra.worker_types.items():
        if price < 0:
            out.append(f"worker type {type_id} has a negative hourly price")

    return out


def propagate_throughput(
    plan: LogicalPlan, selection: Mapping[str, str]
) -> dict[str, float]:
    """Per-node input throughput T_v given a complete model selection.

    Sources carry their configured rate; every other node receives the sum
    of its parents' throughputs scaled by the parent's output ratio under
    the selected variant.
    """
    order = topological_orderings(plan, count=1, seed=0)[0]
    tput: dict[str, float] = {}
    for v in order:
        node = plan.node(v)
        if node.kind == "source":
            tput[v] = plan.source_throughput[v]
            continue
        total = 0.0
        for u in plan.parents(v):
            if u not in selection:
                raise HetplanError(f"selection has no entry for node {u}")
            ratio = plan.node(u).output_ratio[selection[u]]
            total += tput[u] * ratio
        tput[v] = total
    return tput


def output_rate(plan: LogicalPlan, selection: Mapping[str, str], tput: Mapping[str, float], node_id: str) -> float:
    """Items/second a node emits on each outgoing edge."""
    return tput[node_id] * plan.node(node_id).output_ratio[selection[node_id]]


def topological_orderings(
    plan: LogicalPlan, count: int, seed: int = 0
) -> list[list[str]]:
    """Up to ``count`` distinct topological orders of the plan DAG.

    The first ordering is always the canonical lexicographic-tiebreak
    order; the rest are seeded-random linear extensions. Deterministic for
    a given seed.
    """
    if count < 1:
        raise HetplanError("count must be >= 1")
    g = plan.graph()
    if not nx.is_directed_acyclic_graph(g):
        raise CycleError("workflow graph contains a cycle")

    canonical = list(nx.lexicographical_topological_sort(g))
    seen = {tuple(canonical)}
    orders = [canonical]

    rng = random.Random(seed)
    attempts = 0
    while len(orders) < count and attempts < 20 * count:
        attempts += 1
        order = _random_linear_extension(g, rng)
        key = tuple(order)
        if key not in seen:
            seen.add(key)
            orders.append(order)

    if len(orders) < count:
        # Random sampling stalled: the graph likely has few distinct orders.
        # Enumerate systematically to top up (stops as soon as we have count).
        for order in nx.all_topological_sorts(g):
            key = tuple(order)
            if key not in seen:
                seen.add(key)
                orders.append(order)
            if len(orders) >= count:
                break
    return orders


def _random_linear_extension(g: nx.DiGraph, rng: random.Random) -> list[str]:
    indeg = {v: d for v, d in g.in_degree()}
    ready = sorted(v for v, d in indeg.items() if d == 0)
    order = []
    while ready:
        v = ready.pop(rng.randrange(len(ready)))
        order.append(v)
        for w in sorted(g.successors(v)):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    return order
