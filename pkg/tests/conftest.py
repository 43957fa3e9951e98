import json
import pathlib

import pytest

from hetplan.model import (
    IDENTITY,
    InfrastructureSpec,
    LogicalPlan,
    OperatorNode,
    Worker,
)
from hetplan.profiles import AccuracyProfile, ModelVariant, ProfileSet


def make_plan(nodes, edges, choices=None, unit_sizes=None, source_rates=None):
    """Build a LogicalPlan from shorthand.

    nodes: list of (id, kind) or (id, kind, output_ratio).
    """
    ops = []
    built_choices = {}
    for spec in nodes:
        node_id, kind = spec[0], spec[1]
        ratios = spec[2] if len(spec) > 2 else None
        if kind == "ml":
            ch = tuple(choices[node_id]) if choices else ()
        else:
            ch = (IDENTITY,)
        if ratios is None:
            ratios = {v: 1.0 for v in ch}
        built_choices[node_id] = ch
        ops.append(OperatorNode(id=node_id, kind=kind, output_ratio=ratios))
    unit_sizes = unit_sizes or {}
    return LogicalPlan(
        nodes=tuple(ops),
        edges=tuple(edges),
        choices=built_choices,
        edge_unit_size={e: unit_sizes.get(e, 0.0) for e in edges},
        source_throughput=source_rates or {},
    )


def make_infra(tiers, workers, traffic=None, locations=None, types=None):
    """Build an InfrastructureSpec from shorthand.

    workers: list of (id, type, tier) or (id, type, tier, location).
    traffic: {(i, j): $/byte} for j > i; intra-tier is free, downward is
    forbidden unless overridden.
    """
    types = types or {}
    ws = tuple(
        Worker(id=w[0], type=w[1], tier=w[2], location=w[3] if len(w) > 3 else 0)
        for w in workers
    )
    n = len(tiers)
    prices = {}
    for i in range(1, n + 1):
        prices[(i, i)] = 0.0
    prices.update(traffic or {})
    return InfrastructureSpec(
        tiers=tuple(tiers),
        locations_per_parent=locations or {i: 1 for i in range(1, n + 1)},
        worker_types=types,
        workers=ws,
        traffic_price=prices,
    )


def make_profiles(variants, percentile="P75"):
    """Build a ProfileSet.

    variants: {id: {"operator": ..., "cost": ms, "rows": [(inputs, out)],
                    "tput": {worker_type: items/s}}}
    The same throughput table is used for all three percentiles unless a
    dict of per-percentile tables is given under "tput_pct".
    """
    models = {}
    accuracy = {}
    tables = {"P50": {}, "P75": {}, "P90": {}}
    for vid, spec in variants.items():
        if vid != IDENTITY:
            models[vid] = ModelVariant(
                id=vid,
                operator=spec.get("operator", "*"),
                cost_proxy_ms=spec.get("cost", 1.0),
                params_millions=spec.get("params", 0.0),
            )
        if "rows" in spec:
            rows = tuple(
                (tuple(float(x) for x in row_in), float(row_out))
                for row_in, row_out in spec["rows"]
            )
            accuracy[vid] = AccuracyProfile(
                variant_id=vid, arity=len(rows[0][0]), rows=rows
            )
        if "tput_pct" in spec:
            for pct, table in spec["tput_pct"].items():
                for wtype, rate in table.items():
                    tables[pct][(vid, wtype)] = rate
        else:
            for wtype, rate in spec.get("tput", {}).items():
                for pct in tables:
                    tables[pct][(vid, wtype)] = rate
    return ProfileSet(
        variants=models,
        accuracy=accuracy,
        throughput_tables=tables,
        percentile=percentile,
    )


INSTANCE_DIR = pathlib.Path(__file__).resolve().parent.parent / "instances"


@pytest.fixture
def tiny_path():
    return str(INSTANCE_DIR / "tiny.json")


@pytest.fixture
def tiny_doc(tiny_path):
    with open(tiny_path, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def small_path():
    return str(INSTANCE_DIR / "small.json")


@pytest.fixture
def medium_path():
    return str(INSTANCE_DIR / "medium.json")


@pytest.fixture
def paper_join_profile():
    """Two-input accuracy response table from the worked lookup example."""
    return AccuracyProfile(
        variant_id="join",
        arity=2,
        rows=(
            ((0.60, 0.50), 0.55),
            ((0.50, 0.60), 0.60),
            ((0.70, 0.90), 0.65),
        ),
    )


@pytest.fixture
def three_tier_infra():
    """cloud / 2 hubs per cloud / 5 edge locations per hub."""
    return make_infra(
        tiers=["edge", "hub", "cloud"],
        workers=[
            ("e1", "cpu", 1),
            ("h1", "cpu", 2),
            ("c1", "gpu", 3),
        ],
        types={"cpu": 1.0, "gpu": 3.0},
        locations={1: 5, 2: 2, 3: 1},
        traffic={(1, 2): 1e-10, (2, 3): 1e-10, (1, 3): 3e-10},
    )


@pytest.fixture
def chain_instance():
    """src(10/s) -> det (ml) -> sink on a 2-tier infra."""
    plan = make_plan(
        nodes=[
            ("src", "source", {IDENTITY: 1.0}),
            ("det", "ml"),
            ("out", "sink", {IDENTITY: 1.0}),
        ],
        edges=[("src", "det"), ("det", "out")],
        choices={"det": ["det_s", "det_l"]},
        unit_sizes={("src", "det"): 1e6, ("det", "out"): 1e3},
        source_rates={"src": 10.0},
    )
    infra = make_infra(
        tiers=["edge", "cloud"],
        workers=[("e1", "cpu", 1), ("e2", "cpu", 1), ("c1", "gpu", 2)],
        types={"cpu": 1.0, "gpu": 3.0},
        traffic={(1, 2): 1e-10},
    )
    profiles = make_profiles(
        {
            "det_s": {
                "operator": "det",
                "cost": 10.0,
                "rows": [((0.0,), 0.60)],
                "tput": {"cpu": 20.0, "gpu": 50.0},
            },
            "det_l": {
                "operator": "det",
                "cost": 40.0,
                "rows": [((0.0,), 0.80)],
                "tput": {"cpu": 5.0, "gpu": 40.0},
            },
        }
    )
    return plan, infra, profiles
