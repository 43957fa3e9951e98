"""Instance and plan files.

An instance is a single UTF-8 JSON document with top-level keys
``workflow``, ``infrastructure``, ``objectives`` and (usually)
``profiles``; unknown keys are rejected everywhere, loudly. Traffic
prices are written per GB in the file and converted to per-byte
internally; the string ``"forbidden"`` marks a tier pair traffic must
never take. See the README for a worked schema.

Plan files serialize a PhysicalPlan with a ``schema_version`` and are
written with sorted keys so identical plans are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import InstanceError
from .model import (
    FORBIDDEN,
    IDENTITY,
    CostBreakdown,
    InfrastructureSpec,
    LogicalPlan,
    OperatorNode,
    PhysicalPlan,
    Worker,
    validate,
)
from .profiles import (
    PERCENTILES,
    AccuracyProfile,
    ModelVariant,
    ProfileSet,
    validate_profiles,
)

SCHEMA_VERSION = 1
GB = 1e9

_TOP_KEYS = {"schema_version", "workflow", "infrastructure", "objectives", "profiles"}


@dataclass(frozen=True)
class Objectives:
    target_accuracy: float
    target_throughput: float
    percentile: str = "P75"


@dataclass(frozen=True)
class Instance:
    plan: LogicalPlan
    infra: InfrastructureSpec
    profiles: ProfileSet
    objectives: Objectives


def _reject_unknown(obj: Mapping, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise InstanceError(
            f"{where}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise InstanceError(f"{where}: missing required key {key!r}")
    return obj[key]


def load_instance(source: str | Mapping[str, Any]) -> Instance:
    """Load and fully validate an instance from a path or a parsed dict."""
    if isinstance(source, (str, bytes)):
        try:
            with open(source, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise InstanceError(f"cannot read instance file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InstanceError(f"instance file is not valid JSON: {exc}") from exc
    else:
        raw = source
    if not isinstance(raw, Mapping):
        raise InstanceError("instance must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "instance")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise InstanceError(f"unsupported schema_version {version!r}")

    plan = _load_workflow(_require(raw, "workflow", "instance"))
    infra = _load_infrastructure(_require(raw, "infrastructure", "instance"))
    objectives = _load_objectives(_require(raw, "objectives", "instance"))
    profiles = load_profiles(
        raw.get("profiles", {"variants": {}}), percentile=objectives.percentile
    )

    issues = validate(plan, infra)
    issues += validate_profiles(plan, profiles)
    if issues:
        raise InstanceError("; ".join(issues))
    return Instance(plan=plan, infra=infra, profiles=profiles, objectives=objectives)


def _load_workflow(wf: Mapping) -> LogicalPlan:
    _reject_unknown(wf, {"nodes", "edges"}, "workflow")
    nodes = []
    choices = {}
    source_rates = {}
    for entry in _require(wf, "nodes", "workflow"):
        _reject_unknown(
            entry,
            {"id", "kind", "choices", "output_ratio", "throughput"},
            "workflow node",
        )
        nid = _require(entry, "id", "workflow node")
        kind = _require(entry, "kind", f"node {nid}")
        if kind == "ml":
            ch = tuple(_require(entry, "choices", f"node {nid}"))
        else:
            ch = (IDENTITY,)
            if "choices" in entry:
                raise InstanceError(f"node {nid}: only ml nodes take choices")
        ratios = entry.get("output_ratio", {v: 1.0 for v in ch})
        if kind == "source":
            source_rates[nid] = float(_require(entry, "throughput", f"node {nid}"))
        elif "throughput" in entry:
            raise InstanceError(f"node {nid}: only sources take a throughput")
        choices[nid] = ch
        nodes.append(
            OperatorNode(id=nid, kind=kind, output_ratio={k: float(v) for k, v in ratios.items()})
        )

    edges = []
    unit_sizes = {}
    for entry in _require(wf, "edges", "workflow"):
        _reject_unknown(entry, {"from", "to", "unit_size_bytes"}, "workflow edge")
        e = (_require(entry, "from", "edge"), _require(entry, "to", "edge"))
        edges.append(e)
        unit_sizes[e] = float(entry.get("unit_size_bytes", 0.0))

    return LogicalPlan(
        nodes=tuple(nodes),
        edges=tuple(edges),
        choices=choices,
        edge_unit_size=unit_sizes,
        source_throughput=source_rates,
    )


def _load_infrastructure(inf: Mapping) -> InfrastructureSpec:
    _reject_unknown(
        inf,
        {"tiers", "locations_per_parent", "worker_types", "workers",
         "traffic_price_per_gb"},
        "infrastructure",
    )
    tiers = tuple(_require(inf, "tiers", "infrastructure"))
    tier_index = {name: i + 1 for i, name in enumerate(tiers)}
    if len(tier_index) != len(tiers):
        raise InstanceError("infrastructure: duplicate tier names")

    raw_locs = inf.get("locations_per_parent", {})
    locations = {i: 1 for i in range(1, len(tiers) + 1)}
    for name, count in raw_locs.items():
        if name not in tier_index:
            raise InstanceError(f"locations_per_parent: unknown tier {name!r}")
        locations[tier_index[name]] = int(count)

    worker_types = {}
    for tname, spec in _require(inf, "worker_types", "infrastructure").items():
        if isinstance(spec, Mapping):
            _reject_unknown(spec, {"hourly_price"}, f"worker type {tname}")
            worker_types[tname] = float(_require(spec, "hourly_price", tname))
        else:
            worker_types[tname] = float(spec)

    workers = []
    for entry in _require(inf, "workers", "infrastructure"):
        _reject_unknown(entry, {"id", "type", "tier", "location"}, "worker")
        tier_name = _require(entry, "tier", "worker")
        if tier_name not in tier_index:
            raise InstanceError(f"worker {entry.get('id')}: unknown tier {tier_name!r}")
        workers.append(
            Worker(
                id=_require(entry, "id", "worker"),
                type=_require(entry, "type", "worker"),
                tier=tier_index[tier_name],
                location=int(entry.get("location", 0)),
            )
        )

    prices = {(i, i): 0.0 for i in range(1, len(tiers) + 1)}
    for key, value in inf.get("traffic_price_per_gb", {}).items():
        try:
            a, b = key.split("->")
            pair = (tier_index[a], tier_index[b])
        except (ValueError, KeyError):
            raise InstanceError(
                f"traffic_price_per_gb: bad key {key!r}; want '<tier>-><tier>'"
            ) from None
        if value == "forbidden":
            prices[pair] = FORBIDDEN
        else:
            prices[pair] = float(value) / GB

    return InfrastructureSpec(
        tiers=tiers,
        locations_per_parent=locations,
        worker_types=worker_types,
        workers=tuple(workers),
        traffic_price=prices,
    )


def _load_objectives(obj: Mapping) -> Objectives:
    _reject_unknown(
        obj, {"target_accuracy", "target_throughput", "percentile"}, "objectives"
    )
    acc = float(_require(obj, "target_accuracy", "objectives"))
    if not 0.0 <= acc <= 1.0:
        raise InstanceError(f"objectives: target_accuracy {acc} outside [0, 1]")
    tput = float(_require(obj, "target_throughput", "objectives"))
    if tput < 0:
        raise InstanceError("objectives: target_throughput must be >= 0")
    pct = obj.get("percentile", "P75")
    if pct not in PERCENTILES:
        raise InstanceError(f"objectives: unknown percentile {pct!r}")
    return Objectives(target_accuracy=acc, target_throughput=tput, percentile=pct)


def load_profiles(
    raw: Mapping, percentile: str = "P75", allow_non_monotone: bool = False
) -> ProfileSet:
    _reject_unknown(raw, {"variants"}, "profiles")
    variants = {}
    accuracy = {}
    tables: dict[str, dict[tuple[str, str], float]] = {p: {} for p in PERCENTILES}
    for vid, spec in raw.get("variants", {}).items():
        _reject_unknown(
            spec,
            {"operator", "cost_proxy_ms", "params_millions", "accuracy_rows",
             "throughput"},
            f"variant {vid}",
        )
        variants[vid] = ModelVariant(
            id=vid,
            operator=spec.get("operator", "*"),
            cost_proxy_ms=float(spec.get("cost_proxy_ms", 1.0)),
            params_millions=float(spec.get("params_millions", 0.0)),
        )
        rows = spec.get("accuracy_rows")
        if rows:
            parsed = tuple(
                (tuple(float(x) for x in vec), float(out)) for vec, out in rows
            )
            profile = AccuracyProfile(
                variant_id=vid, arity=len(parsed[0][0]), rows=parsed
            )
            if not allow_non_monotone and profile.monotonicity_violations():
                raise InstanceError(
                    f"variant {vid}: accuracy rows are not monotone "
                    "(pass allow_non_monotone to admit them)"
                )
            accuracy[vid] = profile
        for pct, table in spec.get("throughput", {}).items():
            if pct not in PERCENTILES:
                raise InstanceError(f"variant {vid}: unknown percentile {pct!r}")
            for wtype, rate in table.items():
                tables[pct][(vid, wtype)] = float(rate)
    return ProfileSet(
        variants=variants,
        accuracy=accuracy,
        throughput_tables=tables,
        percentile=percentile,
    )


# -- plan files --------------------------------------------------------------


def dumps_canonical(payload: Mapping) -> str:
    """Stable JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def plan_to_dict(physical: PhysicalPlan, meta: Mapping | None = None) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "selection": dict(sorted(physical.selection.items())),
        "assignment": {
            v: sorted(ws) for v, ws in sorted(physical.assignment.items())
        },
        "cost": {
            "compute": physical.cost.compute,
            "network": physical.cost.network,
            "total": physical.cost.total,
        },
    }
    if meta:
        out["meta"] = dict(meta)
    return out


def save_plan(physical: PhysicalPlan, path: str, meta: Mapping | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(plan_to_dict(physical, meta)))


def load_plan(source: str | Mapping) -> PhysicalPlan:
    if isinstance(source, (str, bytes)):
        try:
            with open(source, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InstanceError(f"cannot load plan file: {exc}") from exc
    else:
        raw = source
    _reject_unknown(raw, {"schema_version", "selection", "assignment", "cost", "meta"},
                    "plan")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InstanceError("unsupported plan schema_version")
    cost_raw = raw.get("cost", {})
    cost = CostBreakdown.make(
        float(cost_raw.get("compute", 0.0)), float(cost_raw.get("network", 0.0))
    )
    return PhysicalPlan(
        selection=dict(_require(raw, "selection", "plan")),
        assignment={
            v: frozenset(ws)
            for v, ws in _require(raw, "assignment", "plan").items()
        },
        cost=cost,
    )
