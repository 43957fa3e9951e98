"""Model selection: beam search over variants in reverse topological order.

Candidates walk backwards from the sink carrying the accuracy requirement
each not-yet-selected upstream node must meet. When two downstream nodes
impose different requirements on a shared upstream node, the maximum is
kept (conservative, preserves the feasibility guarantee on DAGs).

Accuracy-profile rows for a node with several inputs are indexed in
sorted-parent-id order; source parents contribute accuracy 1.0 and
relational nodes pass the minimum of their inputs through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import HetplanError
from .model import IDENTITY, LogicalPlan, topological_orderings
from .profiles import (
    ProfileSet,
    estimate_output_accuracy,
    required_input_accuracy,
)


@dataclass
class SelectionCandidate:
    partial_selection: dict[str, str] = field(default_factory=dict)
    pending_requirements: dict[str, float] = field(default_factory=dict)
    proxy_cost: float = 0.0

    def sort_key(self):
        return (self.proxy_cost, tuple(sorted(self.partial_selection.items())))


def end_to_end_accuracy(
    plan: LogicalPlan, selection: Mapping[str, str], profiles: ProfileSet
) -> float | None:
    """Forward-pass accuracy estimate at the sink; None if infeasible.

    Sources emit accuracy 1.0; relational and sink nodes pass the minimum
    of their inputs; ml nodes apply their selected variant's profile.
    """
    order = topological_orderings(plan, count=1)[0]
    acc: dict[str, float] = {}
    for v in order:
        node = plan.node(v)
        if node.kind == "source":
            acc[v] = 1.0
            continue
        inputs = [acc[u] for u in plan.parents(v)]
        if any(a is None for a in inputs):
            return None
        if node.kind == "ml":
            variant = selection.get(v)
            if variant is None:
                raise HetplanError(f"selection has no entry for ml node {v}")
            est = estimate_output_accuracy(profiles.accuracy[variant], inputs)
            if est is None:
                return None
            acc[v] = est
        else:
            acc[v] = min(inputs) if inputs else 1.0
    return acc[plan.sink()]


def select_models(
    plan: LogicalPlan,
    profiles: ProfileSet,
    target_accuracy: float,
    beam_width: int = 8,
    top_k: int = 3,
    proxy_mode: str = "latency",
) -> list[dict[str, str]]:
    """Top-K cheapest complete selections meeting the accuracy target.

    Returns up to ``top_k`` selections ordered by proxy cost (reference
    latency by default), empty if no selection can reach the target.
    """
    if not 1 <= top_k <= beam_width:
        raise HetplanError("need 1 <= top_k <= beam_width")

    order = list(reversed(topological_orderings(plan, count=1)[0]))
    sink = plan.sink()

    beam = [SelectionCandidate(pending_requirements={sink: target_accuracy})]
    for v in order:
        node = plan.node(v)
        expanded: list[SelectionCandidate] = []
        for cand in beam:
            req = cand.pending_requirements.get(v, 0.0)
            remaining = {
                k: r for k, r in cand.pending_requirements.items() if k != v
            }
            if node.kind == "source":
                # Sources emit perfect accuracy; a requirement above 1.0 is
                # unreachable and kills the candidate.
                if req <= 1.0:
                    expanded.append(
                        SelectionCandidate(
                            partial_selection=dict(cand.partial_selection),
                            pending_requirements=remaining,
                            proxy_cost=cand.proxy_cost,
                        )
                    )
                continue
            if node.kind != "ml":
                # Identity operators forward the requirement to every parent.
                pending = dict(remaining)
                for p in plan.parents(v):
                    pending[p] = max(pending.get(p, 0.0), req)
                sel = dict(cand.partial_selection)
                sel[v] = IDENTITY
                expanded.append(
                    SelectionCandidate(
                        partial_selection=sel,
                        pending_requirements=pending,
                        proxy_cost=cand.proxy_cost,
                    )
                )
                continue
            parents = plan.parents(v)
            for variant in plan.choices[v]:
                vectors = required_input_accuracy(profiles.accuracy[variant], req)
                for vec in vectors:
                    pending = dict(remaining)
                    feasible = True
                    for p, component in zip(parents, vec):
                        need = max(pending.get(p, 0.0), component)
                        if plan.node(p).kind == "source" and need > 1.0:
                            feasible = False
                            break
                        pending[p] = need
                    if not feasible:
                        continue
                    sel = dict(cand.partial_selection)
                    sel[v] = variant
                    expanded.append(
                        SelectionCandidate(
                            partial_selection=sel,
                            pending_requirements=pending,
                            proxy_cost=cand.proxy_cost
                            + profiles.cost_proxy(variant, proxy_mode),
                        )
                    )
        beam = _prune(expanded, beam_width)
        if not beam:
            return []

    # Different requirement paths can converge on the same selection.
    unique: dict[tuple, SelectionCandidate] = {}
    for cand in beam:
        key = tuple(sorted(cand.partial_selection.items()))
        if key not in unique:
            unique[key] = cand
    final = sorted(unique.values(), key=SelectionCandidate.sort_key)

    # The backward pass is conservative but verified independently: only
    # selections whose forward-pass accuracy meets the target are returned.
    results = []
    for cand in final:
        selection = _complete(plan, cand.partial_selection)
        achieved = end_to_end_accuracy(plan, selection, profiles)
        if achieved is not None and achieved >= target_accuracy:
            results.append(selection)
        if len(results) >= top_k:
            break
    return results


def _prune(
    candidates: list[SelectionCandidate], beam_width: int
) -> list[SelectionCandidate]:
    """Keep the ``beam_width`` cheapest model configurations.

    The width counts distinct partial selections; alternative requirement
    vectors for the same selection travel together, minus branches whose
    requirements are dominated (componentwise >=) by a sibling's.
    """
    groups: dict[tuple, list[SelectionCandidate]] = {}
    for cand in candidates:
        key = tuple(sorted(cand.partial_selection.items()))
        groups.setdefault(key, []).append(cand)

    pruned_groups = []
    for key, members in groups.items():
        kept: list[SelectionCandidate] = []
        for cand in members:
            if any(_requires_no_more(other, cand) for other in members):
                continue  # a sibling gets by with strictly easier requirements
            if any(_requirements_equal(cand, k) for k in kept):
                continue  # exact duplicate branch
            kept.append(cand)
        if not kept:
            kept = [members[0]]
        pruned_groups.append((members[0].proxy_cost, key, kept))

    pruned_groups.sort(key=lambda g: (g[0], g[1]))
    beam: list[SelectionCandidate] = []
    for _, _, members in pruned_groups[:beam_width]:
        beam.extend(members)
    return beam


def _requires_no_more(a: SelectionCandidate, b: SelectionCandidate) -> bool:
    """True when a's pending requirements are strictly easier than b's."""
    keys = set(a.pending_requirements) | set(b.pending_requirements)
    no_more = all(
        a.pending_requirements.get(k, 0.0) <= b.pending_requirements.get(k, 0.0)
        for k in keys
    )
    strictly = any(
        a.pending_requirements.get(k, 0.0) < b.pending_requirements.get(k, 0.0)
        for k in keys
    )
    return no_more and strictly


def _requirements_equal(a: SelectionCandidate, b: SelectionCandidate) -> bool:
    keys = set(a.pending_requirements) | set(b.pending_requirements)
    return all(
        a.pending_requirements.get(k, 0.0) == b.pending_requirements.get(k, 0.0)
        for k in keys
    )


def _complete(plan: LogicalPlan, partial: Mapping[str, str]) -> dict[str, str]:
    selection = dict(partial)
    for node in plan.nodes:
        selection.setdefault(node.id, IDENTITY if node.kind != "ml" else None)
        if selection[node.id] is None:
            raise HetplanError(f"ml node {node.id} left unselected")
    return selection
