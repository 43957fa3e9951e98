import copy
import json

import pytest

from hetplan.errors import InstanceError
from hetplan.instance import (
    dumps_canonical,
    load_instance,
    load_plan,
    load_profiles,
    plan_to_dict,
    save_plan,
)
from hetplan.model import FORBIDDEN, PhysicalPlan
from hetplan.model import CostBreakdown


class TestLoadInstance:
    def test_tiny_loads(self, tiny_path):
        inst = load_instance(tiny_path)
        assert inst.plan.sink() == "results"
        assert inst.objectives.target_throughput == 10.0
        assert inst.profiles.percentile == "P75"

    def test_unknown_top_level_key(self, tiny_doc):
        doc = copy.deepcopy(tiny_doc)
        doc["extra"] = {}
        with pytest.raises(InstanceError, match="extra"):
            load_instance(doc)

    def test_unknown_node_key(self, tiny_doc):
        doc = copy.deepcopy(tiny_doc)
        doc["workflow"]["nodes"][0]["gpu"] = True
        with pytest.raises(InstanceError, match="gpu"):
            load_instance(doc)

    def test_unknown_objective_key(self, tiny_doc):
        doc = copy.deepcopy(tiny_doc)
        doc["objectives"]["latency"] = 5
        with pytest.raises(InstanceError, match="latency"):
            load_instance(doc)

    def test_price_per_gb_converted(self, tiny_doc):
        inst = load_instance(tiny_doc)
        assert inst.infra.traffic(1, 2) == pytest.approx(0.1 / 1e9)

    def test_forbidden_sentinel(self, tiny_doc):
        doc = copy.deepcopy(tiny_doc)
        doc["infrastructure"]["traffic_price_per_gb"]["edge->cloud"] = "forbidden"
        inst = load_instance(doc)
        assert inst.infra.traffic(1, 2) == FORBIDDEN

    def test_downward_default_forbidden(self, tiny_doc):
        inst = load_instance(tiny_doc)
        assert inst.infra.traffic(2, 1) == FORBIDDEN

    def test_accuracy_out_of_range(self, tiny_doc):
        doc = copy.deepcopy(tiny_doc)
        doc["objectives"]["target_accuracy"] = 1.5
        with pytest.raises(InstanceError, match="target_accuracy"):
            load_instance(doc)

    def test_unknown_tier_in_worker(self, tiny_doc):
        doc = copy.deepcopy(tiny_doc)
        doc["infrastructure"]["workers"][0]["tier"] = "fog"
        with pytest.raises(InstanceError, match="fog"):
            load_instance(doc)

    def test_choices_on_non_ml_rejected(self, tiny_doc):
        doc = copy.deepcopy(tiny_doc)
        doc["workflow"]["nodes"][2]["choices"] = ["x"]
        with pytest.raises(InstanceError, match="only ml nodes"):
            load_instance(doc)

    def test_not_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("not json {")
        with pytest.raises(InstanceError, match="JSON"):
            load_instance(str(p))


class TestProfilesFile:
    def test_non_monotone_rejected_by_default(self):
        raw = {
            "variants": {
                "reid": {
                    "cost_proxy_ms": 5.0,
                    "accuracy_rows": [[[0.5], 0.7], [[0.9], 0.6]],
                    "throughput": {"P75": {"cpu": 10.0}},
                }
            }
        }
        with pytest.raises(InstanceError, match="monotone"):
            load_profiles(raw)
        profiles = load_profiles(raw, allow_non_monotone=True)
        assert "reid" in profiles.accuracy

    def test_unknown_percentile(self):
        raw = {"variants": {"m": {"throughput": {"P99": {"cpu": 1.0}}}}}
        with pytest.raises(InstanceError, match="P99"):
            load_profiles(raw)


class TestPlanFiles:
    def _plan(self):
        return PhysicalPlan(
            selection={"detect": "det_s", "camera": "identity"},
            assignment={"detect": frozenset({"e1", "e2"})},
            cost=CostBreakdown.make(2.0, 0.5),
        )

    def test_roundtrip(self, tmp_path):
        path = str(tmp_path / "plan.json")
        save_plan(self._plan(), path, meta={"seed": 3})
        loaded = load_plan(path)
        assert loaded.selection == self._plan().selection
        assert loaded.assignment == self._plan().assignment
        assert loaded.cost.total == pytest.approx(2.5)

    def test_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        save_plan(self._plan(), a, meta={"seed": 3})
        save_plan(self._plan(), b, meta={"seed": 3})
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_worker_sets_serialized_sorted(self):
        doc = plan_to_dict(self._plan())
        assert doc["assignment"]["detect"] == ["e1", "e2"]

    def test_unknown_plan_key_rejected(self):
        doc = plan_to_dict(self._plan())
        doc["notes"] = "hi"
        with pytest.raises(InstanceError, match="notes"):
            load_plan(doc)

    def test_canonical_dump_is_stable(self):
        doc = plan_to_dict(self._plan())
        assert dumps_canonical(doc) == dumps_canonical(json.loads(json.dumps(doc)))
