"""HTTP facade over the planner.

Every endpoint takes the instance document inline, so a server never
needs to share a filesystem with its clients. Responses carry a
``status`` field: ``ok``, ``invalid``, ``infeasible`` or
``guard-exceeded``; malformed input is a 400.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .baselines import OracleConfig, best_fit, brute_force, first_fit
from .errors import EnumerationGuardError, HetplanError, InstanceError
from .instance import Instance, load_instance, load_plan, plan_to_dict
from .planner import SWEEP_COLUMNS, optimize, sweep
from .sim import RelayCostModel, SimConfig, measure_overhead, run_simulation

app = FastAPI(title="hetplan", version=__version__)


class OptimizeOptions(BaseModel):
    beam_ms: int = 8
    top_k: int = 3
    beam_wa: int = 6
    orderings: int = 4
    seed: int = 0
    charge_mode: Literal["full-hour", "utilization"] = "full-hour"
    enforce_a2: bool = True
    bandwidth_cap: Optional[float] = None
    # Overrides applied after the instance is loaded (so a CLI can probe
    # targets outside the schema's [0, 1] accuracy range and get a clean
    # "infeasible" instead of a validation error).
    target_accuracy: Optional[float] = None
    target_throughput: Optional[float] = None


class InstanceRequest(BaseModel):
    instance: dict[str, Any]


class OptimizeRequest(InstanceRequest):
    options: OptimizeOptions = OptimizeOptions()


class BaselineRequest(InstanceRequest):
    strategy: Literal["bf", "ff"]
    charge_mode: Literal["full-hour", "utilization"] = "full-hour"


class LowerBoundRequest(InstanceRequest):
    relax_a2: bool = False
    max_enumeration: int = 10_000_000
    charge_mode: Literal["full-hour", "utilization"] = "full-hour"


class SimulateOptions(BaseModel):
    duration: float = 300.0
    percentile: Optional[Literal["P50", "P75", "P90"]] = None
    latency_jitter: float = Field(0.0, ge=0.0)
    mode: Literal["virtual-time", "wall-clock"] = "virtual-time"
    seed: int = 0
    queue_capacity: int = 1024
    relay_per_message_s: Optional[float] = None
    relay_per_byte_s: Optional[float] = None
    allow_underprovisioned: bool = False


class SimulateRequest(InstanceRequest):
    plan: dict[str, Any]
    config: SimulateOptions = SimulateOptions()


class SweepSpecModel(BaseModel):
    axis: str
    values: list[Any]
    strategies: list[str] = ["jb"]


class SweepRequest(InstanceRequest):
    sweep: SweepSpecModel
    seed: int = 0
    jobs: int = 1
    charge_mode: Literal["full-hour", "utilization"] = "full-hour"


def _load(doc: dict) -> Instance:
    try:
        return load_instance(doc)
    except InstanceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _apply_overrides(inst: Instance, opts: OptimizeOptions) -> Instance:
    import dataclasses

    obj = inst.objectives
    if opts.target_accuracy is not None:
        obj = dataclasses.replace(obj, target_accuracy=opts.target_accuracy)
    if opts.target_throughput is not None:
        obj = dataclasses.replace(obj, target_throughput=opts.target_throughput)
    return dataclasses.replace(inst, objectives=obj) if obj is not inst.objectives else inst


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/validate")
def validate_endpoint(req: InstanceRequest):
    try:
        inst = load_instance(req.instance)
    except InstanceError as exc:
        return {"status": "invalid", "errors": str(exc).split("; ")}
    return {
        "status": "ok",
        "nodes": len(inst.plan.nodes),
        "workers": len(inst.infra.workers),
    }


@app.post("/optimize")
def optimize_endpoint(req: OptimizeRequest):
    inst = _apply_overrides(_load(req.instance), req.options)
    result = optimize(
        inst,
        beam_ms=req.options.beam_ms,
        top_k=req.options.top_k,
        beam_wa=req.options.beam_wa,
        orderings=req.options.orderings,
        seed=req.options.seed,
        charge_mode=req.options.charge_mode,
        enforce_a2=req.options.enforce_a2,
        bandwidth_cap=req.options.bandwidth_cap,
    )
    out = {
        "status": result.status,
        "qo_time_ms": result.qo_time_ms,
        "selections_considered": result.selections_considered,
    }
    if result.physical is None:
        out["binding_constraint"] = result.binding_constraint
        out["message"] = (
            "target accuracy unreachable"
            if result.binding_constraint == "accuracy"
            else "throughput target unreachable with available workers"
        )
    else:
        out["plan"] = plan_to_dict(
            result.physical, meta={"seed": req.options.seed}
        )
    return out


@app.post("/baseline")
def baseline_endpoint(req: BaselineRequest):
    inst = _load(req.instance)
    fn = best_fit if req.strategy == "bf" else first_fit
    phys = fn(
        inst.plan, inst.infra, inst.profiles,
        inst.objectives.target_throughput,
        req.charge_mode, inst.objectives.percentile,
    )
    if phys is None:
        return {"status": "infeasible", "strategy": req.strategy}
    return {"status": "ok", "strategy": req.strategy, "plan": plan_to_dict(phys)}


@app.post("/lower-bound")
def lower_bound_endpoint(req: LowerBoundRequest):
    inst = _load(req.instance)
    cfg = OracleConfig(
        enforce_a2=not req.relax_a2, max_enumeration=req.max_enumeration
    )
    try:
        phys = brute_force(
            inst.plan, inst.infra, inst.profiles,
            inst.objectives.target_accuracy, inst.objectives.target_throughput,
            cfg=cfg, charge_mode=req.charge_mode,
            percentile=inst.objectives.percentile,
        )
    except EnumerationGuardError as exc:
        return {
            "status": "guard-exceeded",
            "estimate": exc.estimate,
            "limit": exc.limit,
        }
    if phys is None:
        return {"status": "infeasible"}
    return {"status": "ok", "plan": plan_to_dict(phys)}


@app.post("/simulate")
def simulate_endpoint(req: SimulateRequest):
    inst = _load(req.instance)
    try:
        physical = load_plan(req.plan)
    except InstanceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    c = req.config
    relay = RelayCostModel()
    if c.relay_per_message_s is not None or c.relay_per_byte_s is not None:
        relay = RelayCostModel(
            per_message_s=c.relay_per_message_s or 0.0,
            per_byte_s=c.relay_per_byte_s or 0.0,
        )
    cfg = SimConfig(
        duration=c.duration,
        latency_percentile=c.percentile,
        latency_jitter=c.latency_jitter,
        mode=c.mode,
        seed=c.seed,
        queue_capacity=c.queue_capacity,
        relay=relay,
        allow_underprovisioned=c.allow_underprovisioned,
    )
    try:
        report = run_simulation(inst.plan, physical, inst.infra, inst.profiles, cfg)
    except HetplanError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc

    per_second = _per_second(report.sink_arrival_times, cfg.duration)
    return {
        "status": "ok",
        "achieved_throughput": report.achieved_throughput,
        "accrued_cost": {
            "compute": report.accrued_cost.compute,
            "network": report.accrued_cost.network,
            "total": report.accrued_cost.total,
        },
        "relay_overhead_fraction": report.relay_overhead_fraction,
        "overhead": measure_overhead(report),
        "queue_high_watermarks": report.queue_high_watermarks,
        "conservation": {
            "items_emitted": report.items_emitted,
            "items_at_sink": report.items_at_sink,
            "items_dropped": report.items_dropped,
            "items_in_flight": report.items_in_flight,
        },
        "fifo_violations": report.fifo_violations,
        "duration": report.duration,
        "mode": report.mode,
        "sink_items_per_second": per_second,
    }


def _per_second(arrivals, duration):
    counts = [0] * int(duration + 1)
    for t in arrivals:
        counts[min(int(t), len(counts) - 1)] += 1
    return counts


@app.post("/sweep")
def sweep_endpoint(req: SweepRequest):
    inst = _load(req.instance)
    try:
        rows = sweep(
            inst,
            axis=req.sweep.axis,
            values=req.sweep.values,
            strategies=req.sweep.strategies,
            seed=req.seed,
            jobs=req.jobs,
            charge_mode=req.charge_mode,
        )
    except InstanceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except EnumerationGuardError as exc:
        return {
            "status": "guard-exceeded",
            "estimate": exc.estimate,
            "limit": exc.limit,
        }
    return {"status": "ok", "columns": list(SWEEP_COLUMNS), "rows": rows}
