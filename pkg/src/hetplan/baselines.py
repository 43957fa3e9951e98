"""Best-Fit and First-Fit baselines plus the exhaustive lower-bound oracle.

The oracle enumerates every (selection, assignment) pair under the
configured placement constraints with branch-and-bound pruning on the
accumulated cost, which is exact because extending an assignment never
reduces it. Subsets are enumerated in full rather than only minimal ones:
with routing-split network pricing, a strict superset of a feasible
subset can be cheaper overall.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

from .errors import EnumerationGuardError, ForbiddenRouteError, HetplanError
from .model import (
    IDENTITY,
    InfrastructureSpec,
    LogicalPlan,
    PhysicalPlan,
    propagate_throughput,
    topological_orderings,
)
from .profiles import ProfileSet, estimate_output_accuracy, unit_compute_cost
from .assignment import (
    _edge_price,
    effective_capacity,
    plan_total_cost,
    serving_shares,
    source_share,
)
from .selection import end_to_end_accuracy


@dataclass(frozen=True)
class OracleConfig:
    enforce_a2: bool = True
    max_enumeration: int = 10_000_000
    selection_mode: str = "joint"  # "joint" or "fixed-selection"

    def __post_init__(self):
        if self.max_enumeration <= 0:
            raise HetplanError("max_enumeration must be positive")
        if self.selection_mode not in ("joint", "fixed-selection"):
            raise HetplanError(f"unknown selection mode {self.selection_mode!r}")


def most_accurate_selection(
    plan: LogicalPlan, profiles: ProfileSet
) -> dict[str, str]:
    """Per-node variant maximizing output accuracy at perfect inputs.

    Ties prefer the lower cost proxy, then the lexicographically smaller id.
    """
    selection: dict[str, str] = {}
    for node in plan.nodes:
        if node.kind != "ml":
            selection[node.id] = IDENTITY
            continue
        best = None
        for variant in plan.choices[node.id]:
            profile = profiles.accuracy.get(variant)
            acc = (
                estimate_output_accuracy(profile, [1.0] * profile.arity)
                if profile is not None
                else None
            )
            acc = -1.0 if acc is None else acc
            key = (-acc, profiles.cost_proxy(variant), variant)
            if best is None or key < best[0]:
                best = (key, variant)
        selection[node.id] = best[1]
    return selection


def best_fit(
    plan: LogicalPlan,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    target_throughput: float,
    charge_mode: str = "full-hour",
    percentile: str | None = None,
) -> PhysicalPlan | None:
    """Most accurate models; cheapest workers on the upstream tier first.

    Each node anchors at the highest tier its parents landed on (sources
    anchor at tier 1) and escalates one tier at a time only when the
    current tier runs out of capacity.
    """
    selection = most_accurate_selection(plan, profiles)
    tput = propagate_throughput(plan, selection)
    if tput[plan.sink()] + 1e-12 < target_throughput:
        return None

    order = topological_orderings(plan, count=1)[0]
    assignment: dict[str, tuple[str, ...]] = {}
    max_tier_used: dict[str, int] = {}
    used: set[str] = set()
    for v in order:
        if plan.node(v).kind not in ("ml", "relational"):
            continue
        anchor = 1
        for u in plan.parents(v):
            anchor = max(anchor, max_tier_used.get(u, 1))
        chosen: list[str] = []
        remaining = tput[v]
        tier = anchor
        while remaining > 1e-12 and tier <= infra.n_tiers:
            pool = sorted(
                (c, w.id)
                for w in infra.workers
                if w.tier == tier
                and w.id not in used
                and (c := unit_compute_cost(selection[v], w.id, infra, profiles, percentile))
                is not None
            )
            for cost, wid in pool:
                chosen.append(wid)
                used.add(wid)
                remaining -= effective_capacity(
                    selection[v], wid, infra, profiles, percentile
                )
                if remaining <= 1e-12:
                    break
            tier += 1
        if remaining > 1e-12:
            return None
        assignment[v] = tuple(sorted(chosen))
        max_tier_used[v] = max(
            (infra.tier_of(w) for w in chosen), default=anchor
        )

    cost = plan_total_cost(
        plan, selection, assignment, infra, profiles, charge_mode,
        enforce_a2=True, percentile=percentile,
    )
    return PhysicalPlan(
        selection=selection,
        assignment={v: frozenset(ws) for v, ws in assignment.items()},
        cost=cost,
    )


def first_fit(
    plan: LogicalPlan,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    target_throughput: float,
    charge_mode: str = "full-hour",
    percentile: str | None = None,
) -> PhysicalPlan | None:
    """Most accurate models; globally cheapest workers by unit compute cost,
    ignoring traffic and the one-way placement constraint."""
    selection = most_accurate_selection(plan, profiles)
    tput = propagate_throughput(plan, selection)
    if tput[plan.sink()] + 1e-12 < target_throughput:
        return None

    order = topological_orderings(plan, count=1)[0]
    assignment: dict[str, tuple[str, ...]] = {}
    used: set[str] = set()
    for v in order:
        if plan.node(v).kind not in ("ml", "relational"):
            continue
        pool = sorted(
            (c, w.id)
            for w in infra.workers
            if w.id not in used
            and (c := unit_compute_cost(selection[v], w.id, infra, profiles, percentile))
            is not None
        )
        chosen: list[str] = []
        remaining = tput[v]
        for cost, wid in pool:
            if remaining <= 1e-12:
                break
            chosen.append(wid)
            used.add(wid)
            remaining -= effective_capacity(
                selection[v], wid, infra, profiles, percentile
            )
        if remaining > 1e-12:
            return None
        assignment[v] = tuple(sorted(chosen))

    cost = plan_total_cost(
        plan, selection, assignment, infra, profiles, charge_mode,
        enforce_a2=False, percentile=percentile,
    )
    return PhysicalPlan(
        selection=selection,
        assignment={v: frozenset(ws) for v, ws in assignment.items()},
        cost=cost,
    )


def brute_force(
    plan: LogicalPlan,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    target_accuracy: float,
    target_throughput: float,
    cfg: OracleConfig = OracleConfig(),
    fixed_selection: Mapping[str, str] | None = None,
    charge_mode: str = "full-hour",
    percentile: str | None = None,
) -> PhysicalPlan | None:
    """Exact minimum-cost plan by exhaustive enumeration.

    Raises EnumerationGuardError when the estimated combination count
    exceeds ``cfg.max_enumeration``. Deterministic lexicographic
    tie-break on (selection, assignment).
    """
    selections = _candidate_selections(
        plan, profiles, target_accuracy, cfg, fixed_selection
    )

    estimate = 0
    usable: list[tuple[dict[str, str], dict[str, float]]] = []
    for selection in selections:
        tput = propagate_throughput(plan, selection)
        if tput[plan.sink()] + 1e-12 < target_throughput:
            continue
        per_sel = 1
        for v in plan.assignable_nodes():
            capable = sum(
                1
                for w in infra.workers
                if profiles.throughput(selection[v], w.type, percentile) > 0
            )
            per_sel *= 2 ** capable
        estimate += per_sel
        usable.append((selection, tput))
    if estimate > cfg.max_enumeration:
        raise EnumerationGuardError(estimate, cfg.max_enumeration)

    order = [
        v
        for v in topological_orderings(plan, count=1)[0]
        if plan.node(v).kind in ("ml", "relational")
    ]
    best: tuple[float, tuple, tuple] | None = None
    best_plan: tuple[dict[str, str], dict[str, tuple[str, ...]]] | None = None

    for selection, tput in usable:
        sel_key = tuple(sorted(selection.items()))
        found = _search_assignments(
            plan, infra, profiles, selection, tput, order, cfg.enforce_a2,
            charge_mode, percentile,
            bound=best[0] if best else float("inf"),
        )
        for total, assignment in found:
            key = (total, sel_key, tuple(sorted(assignment.items())))
            if best is None or key < best:
                best = key
                best_plan = (selection, assignment)

    if best_plan is None:
        return None
    selection, assignment = best_plan
    cost = plan_total_cost(
        plan, selection, assignment, infra, profiles, charge_mode,
        enforce_a2=cfg.enforce_a2, percentile=percentile,
    )
    return PhysicalPlan(
        selection=selection,
        assignment={v: frozenset(ws) for v, ws in assignment.items()},
        cost=cost,
    )


def _candidate_selections(plan, profiles, target_accuracy, cfg, fixed_selection):
    if cfg.selection_mode == "fixed-selection":
        if fixed_selection is None:
            raise HetplanError("fixed-selection mode needs a selection")
        return [dict(fixed_selection)]
    ml_nodes = sorted(n.id for n in plan.nodes if n.kind == "ml")
    out = []
    for combo in itertools.product(
        *(sorted(plan.choices[v]) for v in ml_nodes)
    ):
        selection = {v: variant for v, variant in zip(ml_nodes, combo)}
        for node in plan.nodes:
            if node.kind != "ml":
                selection[node.id] = IDENTITY
        achieved = end_to_end_accuracy(plan, selection, profiles)
        if achieved is not None and achieved >= target_accuracy:
            out.append(selection)
    return out


def _search_assignments(
    plan, infra, profiles, selection, tput, order, enforce_a2,
    charge_mode, percentile, bound,
):
    """DFS over per-node worker subsets with cost-bound pruning.

    Yields (total cost, assignment) for complete candidates cheaper than
    the incoming bound (and keeps tightening it as it goes).
    """
    results: list[tuple[float, dict[str, tuple[str, ...]]]] = []
    best_seen = bound

    def recurse(idx, used, shares, assignment, acc):
        nonlocal best_seen
        if acc > best_seen + 1e-12:
            return
        if idx == len(order):
            results.append((acc, dict(assignment)))
            best_seen = min(best_seen, acc)
            return
        v = order[idx]
        variant = selection[v]
        demand = tput[v]
        if demand <= 0:
            assignment[v] = ()
            shares[v] = ()
            recurse(idx + 1, used, shares, assignment, acc)
            del assignment[v], shares[v]
            return

        anchor = 1
        for u in plan.parents(v):
            if plan.node(u).kind == "source":
                continue
            ws = assignment.get(u, ())
            if ws:
                anchor = max(anchor, max(infra.tier_of(w) for w in ws))
        candidates = sorted(
            w.id
            for w in infra.workers
            if w.id not in used
            and profiles.throughput(variant, w.type, percentile) > 0
            and (not enforce_a2 or w.tier >= anchor)
        )

        options = []
        for size in range(1, len(candidates) + 1):
            for subset in itertools.combinations(candidates, size):
                cap = sum(
                    effective_capacity(variant, w, infra, profiles, percentile)
                    for w in subset
                )
                if cap + 1e-12 < demand:
                    continue
                delta = _extension_cost(
                    plan, infra, profiles, selection, shares, v, subset,
                    tput, charge_mode, enforce_a2, percentile,
                )
                if delta is not None:
                    options.append((delta, subset))
        options.sort()
        for delta, subset in options:
            if acc + delta > best_seen + 1e-12:
                break  # options are sorted; the rest are no cheaper
            assignment[v] = subset
            shares[v] = serving_shares(variant, subset, infra, profiles, percentile)
            recurse(idx + 1, used | set(subset), shares, assignment, acc + delta)
            del assignment[v], shares[v]

    recurse(0, frozenset(), {}, {}, 0.0)
    return results


def _extension_cost(
    plan, infra, profiles, selection, shares, v, chosen, tput,
    charge_mode, enforce_a2, percentile,
):
    delta = 0.0
    node_shares = serving_shares(selection[v], chosen, infra, profiles, percentile)
    for w in chosen:
        price = infra.hourly_price(w)
        if charge_mode == "utilization":
            cap = effective_capacity(selection[v], w, infra, profiles, percentile)
            share = next(s for (wid, _, s) in node_shares if wid == w)
            served = share * tput[v]
            price *= min(1.0, served / cap) if cap > 0 else 0.0
        delta += price
    for u in plan.parents(v):
        kind = plan.node(u).kind
        up = source_share(u) if kind == "source" else shares.get(u, ())
        r = plan.edge_unit_size[(u, v)]
        items_per_s = tput[u] * plan.node(u).output_ratio[selection[u]]
        for (_, tier_x, share_x) in up:
            for (_, tier_y, share_y) in node_shares:
                try:
                    price = _edge_price(infra, tier_x, tier_y, (u, v), enforce_a2)
                except ForbiddenRouteError:
                    return None
                delta += price * share_x * share_y * items_per_s * r * 3600.0
    return delta
