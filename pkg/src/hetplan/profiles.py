"""Model profiles: accuracy responses, per-worker throughput, unit costs.

A :class:`ProfileSet` is immutable after load and shared by the optimizer,
the baselines, and the simulator. Infeasible lookups are returned as
``None`` rather than raised, because "this worker cannot run this model"
is ordinary data (a zero/absent throughput entry), not a failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ProfileError
from .model import IDENTITY, InfrastructureSpec, LogicalPlan

PERCENTILES = ("P50", "P75", "P90")


@dataclass(frozen=True)
class ModelVariant:
    id: str
    operator: str  # node id or operator class this variant implements
    cost_proxy_ms: float  # inference latency on the reference worker
    params_millions: float = 0.0

    def __post_init__(self):
        if self.id != IDENTITY and self.cost_proxy_ms <= 0:
            raise ProfileError(f"variant {self.id}: cost_proxy_ms must be > 0")


@dataclass(frozen=True)
class AccuracyProfile:
    """Input-accuracy to output-accuracy response table for one variant."""

    variant_id: str
    arity: int
    rows: tuple[tuple[tuple[float, ...], float], ...]

    def monotonicity_violations(self) -> list[str]:
        """Row pairs where a dominating input vector yields lower output."""
        out = []
        for (in_a, out_a) in self.rows:
            for (in_b, out_b) in self.rows:
                if in_a == in_b:
                    continue
                if all(a >= b for a, b in zip(in_a, in_b)) and out_a < out_b:
                    out.append(
                        f"variant {self.variant_id}: row {in_a}->{out_a} dominates "
                        f"{in_b}->{out_b} but has lower output accuracy"
                    )
        return out


@dataclass(frozen=True)
class ProfileSet:
    """All profiles for an instance, pinned to one efficiency percentile."""

    variants: Mapping[str, ModelVariant]
    accuracy: Mapping[str, AccuracyProfile]
    # (variant id, worker type) -> items/second, per percentile label
    throughput_tables: Mapping[str, Mapping[tuple[str, str], float]]
    percentile: str = "P75"

    def variant(self, variant_id: str) -> ModelVariant:
        if variant_id == IDENTITY and variant_id not in self.variants:
            return ModelVariant(id=IDENTITY, operator="*", cost_proxy_ms=0.0)
        return self.variants[variant_id]

    def cost_proxy(self, variant_id: str, mode: str = "latency") -> float:
        """Worker-independent stand-in cost for a variant.

        ``latency`` uses the reference-worker inference time; ``params``
        uses the parameter count.
        """
        if variant_id == IDENTITY:
            return 0.0
        v = self.variant(variant_id)
        if mode == "latency":
            return v.cost_proxy_ms
        if mode == "params":
            return v.params_millions
        raise ProfileError(f"unknown cost proxy mode {mode!r}")

    def throughput(
        self, variant_id: str, worker_type: str, percentile: str | None = None
    ) -> float:
        """Items/second for a variant on a worker type; 0 means incapable."""
        pct = percentile or self.percentile
        table = self.throughput_tables.get(pct)
        if table is None:
            raise ProfileError(f"no throughput table for percentile {pct}")
        return table.get((variant_id, worker_type), 0.0)


def estimate_output_accuracy(
    profile: AccuracyProfile, input_acc: Sequence[float]
) -> float | None:
    """Conservative output accuracy for the given input accuracies.

    Among rows whose input vector is componentwise <= the query, return
    the maximum output accuracy; ``None`` (infeasible) if no row is
    dominated by the query.
    """
    if len(input_acc) != profile.arity:
        raise ProfileError(
            f"variant {profile.variant_id}: expected {profile.arity} input "
            f"accuracies, got {len(input_acc)}"
        )
    best = None
    for row_in, row_out in profile.rows:
        if all(r <= q for r, q in zip(row_in, input_acc)):
            if best is None or row_out > best:
                best = row_out
    return best


def required_input_accuracy(
    profile: AccuracyProfile, min_output: float
) -> list[tuple[float, ...]]:
    """Pareto-minimal input-accuracy vectors achieving at least min_output.

    Empty list means the variant cannot meet the requirement.
    """
    qualifying = sorted(
        {row_in for row_in, row_out in profile.rows if row_out >= min_output}
    )
    minimal = []
    for vec in qualifying:
        dominated = any(
            other != vec and all(o <= v for o, v in zip(other, vec))
            for other in qualifying
        )
        if not dominated:
            minimal.append(vec)
    return minimal


def unit_compute_cost(
    variant_id: str,
    worker_id: str,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    percentile: str | None = None,
) -> float | None:
    """$/item for running a variant on a worker; None when incapable."""
    worker = infra.worker(worker_id)
    t = profiles.throughput(variant_id, worker.type, percentile)
    if t <= 0:
        return None
    return infra.worker_types[worker.type] / (3600.0 * t)


def throughput_coefficient(worker_id: str, infra: InfrastructureSpec) -> int:
    """Partition-wide throughput multiplier for a worker's tier.

    Product of the per-parent location counts from the worker's tier up
    to, and excluding, the root tier; 1 for root-tier workers.
    """
    tier = infra.tier_of(worker_id)
    coeff = 1
    for j in range(tier, infra.n_tiers):
        coeff *= infra.locations_per_parent.get(j, 1)
    return coeff


def validate_profiles(
    plan: LogicalPlan,
    profiles: ProfileSet,
    allow_non_monotone: bool = False,
) -> list[str]:
    """Cross-check profiles against the workflow they will optimize."""
    out = []
    for node in plan.nodes:
        if node.kind != "ml":
            continue
        n_parents = len(plan.parents(node.id))
        for variant_id in plan.choices.get(node.id, ()):
            if variant_id not in profiles.variants:
                out.append(f"node {node.id}: variant {variant_id} has no profile")
                continue
            acc = profiles.accuracy.get(variant_id)
            if acc is None:
                out.append(f"variant {variant_id} has no accuracy profile")
            elif acc.arity != n_parents:
                out.append(
                    f"variant {variant_id}: accuracy profile arity {acc.arity} "
                    f"does not match the {n_parents} inputs of node {node.id}"
                )
    if not allow_non_monotone:
        for acc in profiles.accuracy.values():
            out.extend(acc.monotonicity_violations())
    for pct, table in profiles.throughput_tables.items():
        for (variant_id, worker_type), rate in table.items():
            if rate < 0:
                out.append(
                    f"throughput {pct} for ({variant_id}, {worker_type}) is negative"
                )
    return out
