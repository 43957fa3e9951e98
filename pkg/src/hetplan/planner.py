"""End-to-end optimization and sensitivity sweeps.

``optimize`` runs model selection, then worker assignment for each of the
K candidate selections, and keeps the cheapest complete plan. ``sweep``
re-optimizes an instance along one axis (input throughput, accuracy
target, traffic price scale, per-device bandwidth cap, or the worker
split across tiers) for a set of strategies and returns plot-ready rows.
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .assignment import assign_workers, tier1_outbound
from .baselines import OracleConfig, best_fit, brute_force, first_fit
from .errors import InstanceError
from .instance import Instance
from .model import FORBIDDEN, PhysicalPlan
from .selection import select_models

SWEEP_AXES = (
    "input_throughput",
    "target_accuracy",
    "traffic_price_scale",
    "bandwidth_cap",
    "tier_split",
)
STRATEGIES = ("jb", "bf", "ff", "lb")

# Fixed sweep CSV column order (documented in the README).
SWEEP_COLUMNS = (
    "axis",
    "value",
    "strategy",
    "feasible",
    "cost_compute",
    "cost_network",
    "cost_total",
    "qo_time_ms",
)


@dataclass(frozen=True)
class OptimizeResult:
    physical: PhysicalPlan | None
    status: str  # "ok" or "infeasible"
    binding_constraint: str | None  # "accuracy" or "throughput" when infeasible
    qo_time_ms: float
    selections_considered: int

    @property
    def feasible(self) -> bool:
        return self.physical is not None


def optimize(
    inst: Instance,
    beam_ms: int = 8,
    top_k: int = 3,
    beam_wa: int = 6,
    orderings: int = 4,
    seed: int = 0,
    charge_mode: str = "full-hour",
    enforce_a2: bool = True,
    bandwidth_cap: float | None = None,
) -> OptimizeResult:
    t0 = time.perf_counter()
    obj = inst.objectives
    selections = select_models(
        inst.plan, inst.profiles, obj.target_accuracy,
        beam_width=beam_ms, top_k=top_k,
    )
    if not selections:
        return OptimizeResult(
            physical=None,
            status="infeasible",
            binding_constraint="accuracy",
            qo_time_ms=(time.perf_counter() - t0) * 1e3,
            selections_considered=0,
        )

    best: PhysicalPlan | None = None
    for selection in selections:
        phys = assign_workers(
            inst.plan, selection, inst.infra, inst.profiles,
            obj.target_throughput,
            beam_width=beam_wa, orderings=orderings, seed=seed,
            charge_mode=charge_mode, enforce_a2=enforce_a2,
            bandwidth_cap=bandwidth_cap, percentile=obj.percentile,
        )
        if phys is None:
            continue
        if best is None or _plan_key(phys) < _plan_key(best):
            best = phys

    return OptimizeResult(
        physical=best,
        status="ok" if best is not None else "infeasible",
        binding_constraint=None if best is not None else "throughput",
        qo_time_ms=(time.perf_counter() - t0) * 1e3,
        selections_considered=len(selections),
    )


def _plan_key(phys: PhysicalPlan):
    return (
        phys.cost.total,
        tuple(sorted(phys.selection.items())),
        tuple(sorted((v, tuple(sorted(ws))) for v, ws in phys.assignment.items())),
    )


# -- sweeps ------------------------------------------------------------------


def sweep(
    inst: Instance,
    axis: str,
    values: Sequence,
    strategies: Sequence[str] = ("jb",),
    seed: int = 0,
    jobs: int = 1,
    charge_mode: str = "full-hour",
    max_enumeration: int = 10_000_000,
) -> list[dict]:
    """One row per (value, strategy); deterministic for a fixed seed."""
    if axis not in SWEEP_AXES:
        raise InstanceError(f"unknown sweep axis {axis!r}; want one of {SWEEP_AXES}")
    if not values:
        raise InstanceError("sweep values must be nonempty")
    if not strategies:
        raise InstanceError("sweep strategies must be nonempty")
    for s in strategies:
        if s not in STRATEGIES:
            raise InstanceError(f"unknown strategy {s!r}; want subset of {STRATEGIES}")

    cells = [(value, strategy) for value in values for strategy in strategies]

    def run_cell(cell):
        value, strategy = cell
        varied, cap = _apply_axis(inst, axis, value)
        return _evaluate(
            varied, strategy, cap, seed, charge_mode, max_enumeration, axis, value
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    return rows


def _apply_axis(inst: Instance, axis: str, value):
    """Return (modified instance, bandwidth cap) for one sweep cell."""
    if axis == "bandwidth_cap":
        return inst, float(value)
    if axis == "target_accuracy":
        obj = dataclasses.replace(inst.objectives, target_accuracy=float(value))
        return dataclasses.replace(inst, objectives=obj), None
    if axis == "input_throughput":
        base = inst.objectives.target_throughput
        factor = float(value) / base if base > 0 else 1.0
        plan = dataclasses.replace(
            inst.plan,
            source_throughput={
                s: r * factor for s, r in inst.plan.source_throughput.items()
            },
        )
        obj = dataclasses.replace(inst.objectives, target_throughput=float(value))
        return dataclasses.replace(inst, plan=plan, objectives=obj), None
    if axis == "traffic_price_scale":
        scale = float(value)
        prices = {
            pair: (p if p == FORBIDDEN or pair[0] == pair[1] else p * scale)
            for pair, p in inst.infra.traffic_price.items()
        }
        infra = dataclasses.replace(inst.infra, traffic_price=prices)
        return dataclasses.replace(inst, infra=infra), None
    # tier_split: "a:b:..." counts per tier; cheapest workers go lowest.
    counts = [int(x) for x in str(value).split(":")]
    if len(counts) != inst.infra.n_tiers:
        raise InstanceError(
            f"tier_split {value!r}: want {inst.infra.n_tiers} counts"
        )
    if sum(counts) != len(inst.infra.workers):
        raise InstanceError(
            f"tier_split {value!r}: counts must sum to {len(inst.infra.workers)}"
        )
    ranked = sorted(
        inst.infra.workers, key=lambda w: (inst.infra.worker_types[w.type], w.id)
    )
    new_workers = []
    idx = 0
    for tier, n in enumerate(counts, start=1):
        for _ in range(n):
            new_workers.append(dataclasses.replace(ranked[idx], tier=tier))
            idx += 1
    infra = dataclasses.replace(inst.infra, workers=tuple(new_workers))
    return dataclasses.replace(inst, infra=infra), None


def _evaluate(
    inst, strategy, bandwidth_cap, seed, charge_mode, max_enumeration, axis, value
):
    obj = inst.objectives
    t0 = time.perf_counter()
    phys = None
    if strategy == "jb":
        result = optimize(
            inst, seed=seed, charge_mode=charge_mode, bandwidth_cap=bandwidth_cap
        )
        phys, elapsed = result.physical, result.qo_time_ms
    else:
        if strategy == "bf":
            phys = best_fit(
                inst.plan, inst.infra, inst.profiles, obj.target_throughput,
                charge_mode, obj.percentile,
            )
        elif strategy == "ff":
            phys = first_fit(
                inst.plan, inst.infra, inst.profiles, obj.target_throughput,
                charge_mode, obj.percentile,
            )
        else:  # lb
            phys = brute_force(
                inst.plan, inst.infra, inst.profiles,
                obj.target_accuracy, obj.target_throughput,
                cfg=OracleConfig(max_enumeration=max_enumeration),
                charge_mode=charge_mode, percentile=obj.percentile,
            )
        elapsed = (time.perf_counter() - t0) * 1e3
        # Baselines and the oracle don't search under the cap; reject their
        # plan after the fact if it ships too much off any edge device.
        if phys is not None and bandwidth_cap is not None:
            outbound = tier1_outbound(
                inst.plan, phys.selection, phys.assignment, inst.infra,
                inst.profiles, obj.percentile,
            )
            if any(b > bandwidth_cap + 1e-9 for b in outbound.values()):
                phys = None

    row = {"axis": axis, "value": value, "strategy": strategy}
    if phys is None:
        row.update(
            feasible=False, cost_compute="", cost_network="", cost_total="",
        )
    else:
        row.update(
            feasible=True,
            cost_compute=phys.cost.compute,
            cost_network=phys.cost.network,
            cost_total=phys.cost.total,
        )
    row["qo_time_ms"] = elapsed
    return row
