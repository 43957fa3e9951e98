"""Greedy beam-searched worker assignment over expanding tier pools.

Cost semantics shared by the optimizer, the baselines, and the simulator:

* Within a node, traffic service is split across its workers in proportion
  to their effective capacity (profiled throughput times the tier's
  location coefficient). The same split drives routing: traffic from a
  parent worker is distributed over child workers proportional to the
  child's serving share.
* A source node behaves like a single pseudo-worker pinned to tier 1 that
  serves 100% of its traffic. Traffic into the sink is not modeled.
* Compute is charged per assigned worker: the full hourly price by
  default, or price scaled by utilization under ``charge_mode
  "utilization"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ForbiddenRouteError, HetplanError
from .model import (
    FORBIDDEN,
    CostBreakdown,
    InfrastructureSpec,
    LogicalPlan,
    PhysicalPlan,
    propagate_throughput,
    topological_orderings,
)
from .profiles import ProfileSet, throughput_coefficient, unit_compute_cost

CHARGE_MODES = ("full-hour", "utilization")

# (entity id, tier, share of the node's traffic served by the entity)
ShareEntry = tuple[str, int, float]


def effective_capacity(
    variant_id: str,
    worker_id: str,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    percentile: str | None = None,
) -> float:
    """Partition-wide items/second a worker contributes to a node."""
    worker = infra.worker(worker_id)
    t = profiles.throughput(variant_id, worker.type, percentile)
    return t * throughput_coefficient(worker_id, infra)


def serving_shares(
    variant_id: str,
    workers: Sequence[str],
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    percentile: str | None = None,
) -> tuple[ShareEntry, ...]:
    """Capacity-proportional serving shares for a node's workers."""
    caps = {
        w: effective_capacity(variant_id, w, infra, profiles, percentile)
        for w in workers
    }
    total = sum(caps.values())
    if total <= 0:
        raise HetplanError(
            f"workers {sorted(workers)} have zero total capacity for {variant_id}"
        )
    return tuple(
        (w, infra.tier_of(w), caps[w] / total) for w in sorted(workers)
    )


def source_share(node_id: str) -> tuple[ShareEntry, ...]:
    return ((node_id, 1, 1.0),)


def _edge_price(
    infra: InfrastructureSpec,
    tier_from: int,
    tier_to: int,
    edge: tuple[str, str],
    enforce_a2: bool,
) -> float:
    price = infra.traffic(tier_from, tier_to)
    if price == FORBIDDEN:
        if enforce_a2:
            raise ForbiddenRouteError(edge, tier_from, tier_to)
        # A2 relaxed: price downward traffic as if it flowed upward.
        price = infra.traffic(min(tier_from, tier_to), max(tier_from, tier_to))
        if price == FORBIDDEN:
            raise ForbiddenRouteError(edge, tier_from, tier_to)
    return price


def assignment_unit_cost(
    v: str,
    variant_id: str,
    worker_id: str,
    parent_shares: Mapping[str, Sequence[ShareEntry]],
    throughputs: Mapping[str, float],
    plan: LogicalPlan,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    enforce_a2: bool = True,
    percentile: str | None = None,
) -> float | None:
    """Per-item cost of adding a worker to a node (compute + inbound traffic).

    None when the worker cannot run the variant or, with A2 enforced, a
    parent's traffic would have to flow downward to reach it.
    """
    compute = unit_compute_cost(variant_id, worker_id, infra, profiles, percentile)
    if compute is None:
        return None
    tier_w = infra.tier_of(worker_id)
    network = 0.0
    for u in plan.parents(v):
        if u not in parent_shares:
            raise HetplanError(f"parent {u} of {v} has no assignment yet")
        r = plan.edge_unit_size[(u, v)]
        for (_, tier_x, share) in parent_shares[u]:
            price = infra.traffic(tier_x, tier_w)
            if price == FORBIDDEN:
                if enforce_a2:
                    return None
                price = _edge_price(infra, tier_x, tier_w, (u, v), enforce_a2)
            network += price * share * r
    return compute + network


def plan_total_cost(
    plan: LogicalPlan,
    selection: Mapping[str, str],
    assignment: Mapping[str, Sequence[str]],
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    charge_mode: str = "full-hour",
    enforce_a2: bool = True,
    percentile: str | None = None,
) -> CostBreakdown:
    """Hourly cost of a complete (selection, assignment) pair (objective value).

    Compute sums hourly worker prices (optionally utilization-scaled);
    network prices the per-hour traffic on every edge between assigned
    entities, split by serving shares on both ends. Raises
    ForbiddenRouteError when A2 is enforced and an edge routes downward.
    """
    if charge_mode not in CHARGE_MODES:
        raise HetplanError(f"unknown charge mode {charge_mode!r}")
    tput = propagate_throughput(plan, selection)
    shares: dict[str, tuple[ShareEntry, ...]] = {}
    for node in plan.nodes:
        if node.kind == "source":
            shares[node.id] = source_share(node.id)
        elif node.id in assignment and assignment[node.id]:
            shares[node.id] = serving_shares(
                selection[node.id], assignment[node.id], infra, profiles, percentile
            )

    compute = 0.0
    for v, workers in assignment.items():
        for w in workers:
            price = infra.hourly_price(w)
            if charge_mode == "utilization":
                cap = effective_capacity(
                    selection[v], w, infra, profiles, percentile
                )
                share = next(s for (wid, _, s) in shares[v] if wid == w)
                served = share * tput[v]
                price *= min(1.0, served / cap) if cap > 0 else 0.0
            compute += price

    network = 0.0
    for (u, v) in plan.edges:
        if v not in shares or plan.node(v).kind == "sink":
            continue
        if u not in shares:
            continue
        r = plan.edge_unit_size[(u, v)]
        # Traffic on the edge is the producing node's emission rate in items/s.
        items_per_s = tput[u] * plan.node(u).output_ratio[selection[u]]
        for (_, tier_x, share_x) in shares[u]:
            for (_, tier_y, share_y) in shares[v]:
                price = _edge_price(infra, tier_x, tier_y, (u, v), enforce_a2)
                network += price * share_x * share_y * items_per_s * r * 3600.0

    return CostBreakdown.make(compute, network)


def tier1_outbound(
    plan: LogicalPlan,
    selection: Mapping[str, str],
    assignment: Mapping[str, Sequence[str]],
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    percentile: str | None = None,
) -> dict[str, float]:
    """Bytes/s each tier-1 entity (source or edge worker) ships to higher
    tiers; the quantity a per-device outbound bandwidth cap constrains."""
    tput = propagate_throughput(plan, selection)
    shares: dict[str, tuple[ShareEntry, ...]] = {}
    for node in plan.nodes:
        if node.kind == "source":
            shares[node.id] = source_share(node.id)
        elif assignment.get(node.id):
            shares[node.id] = serving_shares(
                selection[node.id], assignment[node.id], infra, profiles, percentile
            )
    out: dict[str, float] = {}
    for (u, v) in plan.edges:
        if u not in shares or v not in shares or plan.node(v).kind == "sink":
            continue
        r = plan.edge_unit_size[(u, v)]
        items_per_s = tput[u] * plan.node(u).output_ratio[selection[u]]
        for (xid, tier_x, share_x) in shares[u]:
            if tier_x != 1:
                continue
            for (_, tier_y, share_y) in shares[v]:
                if tier_y == 1:
                    continue
                out[xid] = out.get(xid, 0.0) + share_x * share_y * items_per_s * r
    return out


@dataclass
class AssignmentCandidate:
    assignment: dict[str, tuple[str, ...]] = field(default_factory=dict)
    shares: dict[str, tuple[ShareEntry, ...]] = field(default_factory=dict)
    used_workers: frozenset[str] = frozenset()
    accumulated_cost: float = 0.0
    outbound: dict[str, float] = field(default_factory=dict)  # tier-1 bytes/s

    def sort_key(self):
        return (
            self.accumulated_cost,
            tuple(sorted((v, ws) for v, ws in self.assignment.items())),
        )


def assign_workers(
    plan: LogicalPlan,
    selection: Mapping[str, str],
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    target_throughput: float,
    beam_width: int = 6,
    orderings: int = 4,
    seed: int = 0,
    charge_mode: str = "full-hour",
    enforce_a2: bool = True,
    bandwidth_cap: float | None = None,
    percentile: str | None = None,
) -> PhysicalPlan | None:
    """Beam-searched greedy worker assignment (best over several orderings).

    Returns None when no ordering yields a complete candidate, or when the
    propagated sink throughput cannot reach the target.
    """
    tput = propagate_throughput(plan, selection)
    if tput[plan.sink()] + 1e-12 < target_throughput:
        return None

    orders = topological_orderings(plan, count=max(1, orderings), seed=seed)
    best: AssignmentCandidate | None = None
    for order in orders:
        cand = _assign_one_ordering(
            plan,
            selection,
            infra,
            profiles,
            tput,
            order,
            beam_width,
            charge_mode,
            enforce_a2,
            bandwidth_cap,
            percentile,
        )
        if cand is not None and (best is None or cand.sort_key() < best.sort_key()):
            best = cand
    if best is None:
        return None

    assignment = {v: frozenset(ws) for v, ws in best.assignment.items()}
    cost = plan_total_cost(
        plan, selection, best.assignment, infra, profiles, charge_mode,
        enforce_a2, percentile,
    )
    return PhysicalPlan(selection=dict(selection), assignment=assignment, cost=cost)


def _assign_one_ordering(
    plan, selection, infra, profiles, tput, order,
    beam_width, charge_mode, enforce_a2, bandwidth_cap, percentile,
) -> AssignmentCandidate | None:
    beam = [AssignmentCandidate()]
    for v in order:
        if plan.node(v).kind not in ("ml", "relational"):
            continue
        variant = selection[v]
        expanded: dict[tuple, AssignmentCandidate] = {}
        for cand in beam:
            parent_shares = _parent_shares(plan, cand, v)
            if parent_shares is None:
                continue
            costs = _worker_costs(
                plan, infra, profiles, v, variant, parent_shares,
                tput, cand.used_workers, enforce_a2, percentile,
            )
            for pool_tier in range(1, infra.n_tiers + 1):
                for chosen in _candidate_fills(
                    costs, pool_tier, tput[v], variant, infra, profiles, percentile
                ):
                    nxt = _extend(
                        plan, infra, profiles, selection, cand, v, variant, chosen,
                        tput, charge_mode, enforce_a2, bandwidth_cap, percentile,
                    )
                    if nxt is None:
                        continue
                    key = tuple(
                        sorted((n, ws) for n, ws in nxt.assignment.items())
                    )
                    if key not in expanded or nxt.sort_key() < expanded[key].sort_key():
                        expanded[key] = nxt
        beam = sorted(expanded.values(), key=AssignmentCandidate.sort_key)
        beam = beam[:beam_width]
        if not beam:
            return None
    return beam[0] if beam else None


def _parent_shares(plan, cand, v):
    shares = {}
    for u in plan.parents(v):
        kind = plan.node(u).kind
        if kind == "source":
            shares[u] = source_share(u)
        elif u in cand.shares:
            shares[u] = cand.shares[u]
        else:
            return None  # parent not assigned (zero-throughput corner)
    return shares


def _worker_costs(
    plan, infra, profiles, v, variant, parent_shares, tput,
    used, enforce_a2, percentile,
):
    """Unit cost for every available capable worker, cheapest first."""
    out = []
    for w in infra.workers:
        if w.id in used:
            continue
        c = assignment_unit_cost(
            v, variant, w.id, parent_shares, tput, plan, infra, profiles,
            enforce_a2, percentile,
        )
        if c is not None:
            out.append((c, w.id, w.tier))
    out.sort()
    return out


def _candidate_fills(costs, pool_tier, demand, variant, infra, profiles, percentile):
    """Candidate worker subsets for one node from the tier-``pool_tier``-and-up
    pool. The workhorse is the greedy min-unit-cost fill; a couple of cheap
    alternatives (each sufficient single worker, and a greedy fill by hourly
    price per unit of capacity) cover the cases where per-item cost is a bad
    guide under whole-worker pricing. The beam keeps whichever wins."""
    if demand <= 0:
        return [()]
    pool = []
    for (c, wid, tier) in costs:
        if tier < pool_tier:
            continue
        cap = effective_capacity(variant, wid, infra, profiles, percentile)
        if cap > 0:
            pool.append((c, wid, cap))
    fills = []

    def greedy(entries):
        chosen, remaining = [], demand
        for (_, wid, cap) in entries:
            chosen.append(wid)
            remaining -= cap
            if remaining <= 1e-12:
                return tuple(chosen)
        return None

    primary = greedy(pool)
    if primary is not None:
        fills.append(primary)
    by_efficiency = greedy(
        sorted(
            ((infra.hourly_price(wid) / cap, wid, cap) for (_, wid, cap) in pool),
            key=lambda e: (e[0], e[1]),
        )
    )
    if by_efficiency is not None:
        fills.append(by_efficiency)
    for (_, wid, cap) in pool:
        if cap + 1e-12 >= demand:
            fills.append((wid,))
    # Dedupe, preserving order.
    seen, out = set(), []
    for f in fills:
        key = tuple(sorted(f))
        if key not in seen:
            seen.add(key)
            out.append(f)
    return out


def _extend(
    plan, infra, profiles, selection, cand, v, variant, chosen, tput,
    charge_mode, enforce_a2, bandwidth_cap, percentile,
):
    assignment = dict(cand.assignment)
    assignment[v] = tuple(sorted(chosen))
    shares = dict(cand.shares)
    if chosen:
        shares[v] = serving_shares(variant, chosen, infra, profiles, percentile)
    else:
        shares[v] = ()

    delta = 0.0
    for w in chosen:
        price = infra.hourly_price(w)
        if charge_mode == "utilization":
            cap = effective_capacity(variant, w, infra, profiles, percentile)
            share = next(s for (wid, _, s) in shares[v] if wid == w)
            served = share * tput[v]
            price *= min(1.0, served / cap) if cap > 0 else 0.0
        delta += price

    outbound = dict(cand.outbound)
    for u in plan.parents(v):
        kind = plan.node(u).kind
        src_shares = source_share(u) if kind == "source" else cand.shares.get(u, ())
        r = plan.edge_unit_size[(u, v)]
        items_per_s = tput[u] * plan.node(u).output_ratio[selection[u]]
        for (xid, tier_x, share_x) in src_shares:
            for (_, tier_y, share_y) in shares[v]:
                try:
                    price = _edge_price(infra, tier_x, tier_y, (u, v), enforce_a2)
                except ForbiddenRouteError:
                    return None
                delta += price * share_x * share_y * items_per_s * r * 3600.0
                if bandwidth_cap is not None and tier_x == 1 and tier_y != 1:
                    outbound[xid] = (
                        outbound.get(xid, 0.0)
                        + share_x * share_y * items_per_s * r
                    )
    if bandwidth_cap is not None and any(
        b > bandwidth_cap + 1e-9 for b in outbound.values()
    ):
        return None

    return AssignmentCandidate(
        assignment=assignment,
        shares=shares,
        used_workers=cand.used_workers | set(chosen),
        accumulated_cost=cand.accumulated_cost + delta,
        outbound=outbound,
    )


def check_physical(
    plan: LogicalPlan,
    physical: PhysicalPlan,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    enforce_a2: bool = True,
    target_throughput: float | None = None,
    percentile: str | None = None,
) -> list[str]:
    """Validate a physical plan: selection legality, worker disjointness,
    per-node capacity, and (optionally) A2 tier monotonicity."""
    out = []
    selection = physical.selection
    for node in plan.nodes:
        if node.kind == "ml" and selection.get(node.id) not in plan.choices.get(
            node.id, ()
        ):
            out.append(f"ml node {node.id} selection not drawn from its choices")

    seen: dict[str, str] = {}
    for v, workers in physical.assignment.items():
        for w in workers:
            if w in seen:
                out.append(f"worker {w} assigned to both {seen[w]} and {v}")
            seen[w] = v

    tput = propagate_throughput(plan, selection)
    for v in plan.assignable_nodes():
        workers = physical.assignment.get(v, frozenset())
        cap = sum(
            effective_capacity(selection[v], w, infra, profiles, percentile)
            for w in workers
        )
        if cap + 1e-9 < tput[v]:
            out.append(
                f"node {v}: capacity {cap:.4g}/s below required {tput[v]:.4g}/s"
            )

    if enforce_a2:
        for (u, v) in plan.edges:
            us = physical.assignment.get(u)
            vs = physical.assignment.get(v)
            max_u = (
                max((infra.tier_of(w) for w in us), default=1) if us else 1
            )
            if plan.node(u).kind == "source":
                max_u = 1
            if vs:
                min_v = min(infra.tier_of(w) for w in vs)
                if min_v < max_u:
                    out.append(
                        f"edge {u}->{v}: A2 violated (tier {min_v} below {max_u})"
                    )

    if target_throughput is not None and tput[plan.sink()] + 1e-9 < target_throughput:
        out.append(
            f"sink throughput {tput[plan.sink()]:.4g}/s below target "
            f"{target_throughput:.4g}/s"
        )
    return out
