"""Scenario file handling: strict parsing with field paths, canonical
serialization round trips, and the reference checks between sections."""

import copy
import json

import pytest

from shopfloor import synth
from shopfloor.scenario import (
    DEFAULT_HORIZON,
    FORMAT_VERSION,
    Scenario,
    ScenarioError,
    dumps,
    load_scenario,
    loads,
    parse_document,
    save_scenario,
    to_document,
)


def base_doc() -> dict:
    """A small valid document the error tests mutate one field at a time."""
    return {
        "version": FORMAT_VERSION,
        "name": "base",
        "areas": [
            {"id": "shop", "level": 1, "machines": ["m1", "m2"]},
        ],
        "machines": [
            {"id": "m1", "area": "shop",
             "capability": {"processes": ["milling"]},
             "calendar": [[0, 10080]]},
            {"id": "m2", "area": "shop",
             "capability": {"processes": ["turning"]},
             "calendar": [[480, 960]]},
        ],
        "orders": [
            {"id": "a", "due": 2000, "operations": [
                {"id": "a1", "process": "milling", "duration": 60, "seq": 0},
                {"id": "a2", "process": "turning", "duration": 30, "seq": 1},
            ]},
        ],
        "stock": {"shop": {"tool": {"vise": 2}}},
        "disturbances": [
            {"kind": "machine-down", "at": 100, "machine": "m2", "until": 200},
        ],
        "config": {"horizon": 5000, "seed": 7},
    }


def parse(doc) -> Scenario:
    return parse_document(copy.deepcopy(doc))


def expect_error(doc, fragment: str) -> str:
    with pytest.raises(ScenarioError) as err:
        parse(doc)
    assert fragment in str(err.value), str(err.value)
    return str(err.value)


class TestParsing:
    def test_base_document_parses(self):
        sc = parse(base_doc())
        assert sc.name == "base"
        assert [m.id for m in sc.machines] == ["m1", "m2"]
        assert sc.config.horizon == 5000
        assert sc.order_specs[0].strategy == "Force"

    def test_defaults_materialize(self):
        doc = base_doc()
        del doc["config"]
        del doc["stock"]
        del doc["disturbances"]
        sc = parse(doc)
        assert sc.config.horizon == DEFAULT_HORIZON
        assert sc.config.overdraft_limit == 30
        assert sc.config.long_split_x == 1200
        assert sc.config.long_split_y == 300
        assert sc.config.escalation_interval == 480
        assert sc.config.auto_accept_optimizations is False
        assert sc.stock == {}
        assert sc.disturbances == ()

    def test_unknown_top_level_field(self):
        doc = base_doc()
        doc["frobnicate"] = 1
        expect_error(doc, "unknown field 'frobnicate'")

    def test_unknown_nested_field_names_the_path(self):
        doc = base_doc()
        doc["orders"][0]["operations"][1]["color"] = "red"
        msg = expect_error(doc, "unknown field 'color'")
        assert "orders[0].operations[1]" in msg

    def test_missing_required_field(self):
        doc = base_doc()
        del doc["orders"][0]["due"]
        msg = expect_error(doc, "missing required field 'due'")
        assert "orders[0]" in msg

    def test_bool_is_not_an_integer(self):
        doc = base_doc()
        doc["orders"][0]["operations"][0]["duration"] = True
        expect_error(doc, "orders[0].operations[0].duration")

    def test_version_mismatch(self):
        doc = base_doc()
        doc["version"] = FORMAT_VERSION + 1
        expect_error(doc, "unsupported format version")

    def test_json_syntax_error_reports_position(self):
        with pytest.raises(ScenarioError) as err:
            loads('{"version": 1,,}')
        assert "line 1" in str(err.value)

    def test_unknown_strategy(self):
        doc = base_doc()
        doc["orders"][0]["strategy"] = "Fastest"
        expect_error(doc, "unknown strategy 'Fastest'")

    def test_x_threshold_without_x_competition(self):
        doc = base_doc()
        doc["orders"][0]["x_threshold"] = 4
        expect_error(doc, "only X-Competition takes a threshold")

    def test_x_competition_needs_threshold(self):
        doc = base_doc()
        doc["orders"][0]["strategy"] = "X-Competition"
        expect_error(doc, "X-Competition needs a threshold")

    def test_arrival_before_release(self):
        doc = base_doc()
        doc["orders"][0]["release"] = 500
        doc["orders"][0]["arrival"] = 100
        expect_error(doc, "arrival before release")

    def test_order_without_operations(self):
        doc = base_doc()
        doc["orders"][0]["operations"] = []
        expect_error(doc, "at least one operation")

    def test_calendar_pair_shape(self):
        doc = base_doc()
        doc["machines"][1]["calendar"] = [[480]]
        expect_error(doc, "expected a [start, end] pair")

    def test_resource_pair_kind_checked(self):
        doc = base_doc()
        doc["orders"][0]["operations"][0]["resources"] = [["gadget", "vise"]]
        expect_error(doc, "unknown resource kind 'gadget'")


class TestCrossChecks:
    def test_machine_in_unknown_area(self):
        doc = base_doc()
        doc["machines"][0]["area"] = "basement"
        expect_error(doc, "machines[0].area")

    def test_area_lists_unknown_machine(self):
        doc = base_doc()
        doc["areas"][0]["machines"] = ["m1", "m2", "m9"]
        expect_error(doc, "unknown machine 'm9'")

    def test_machine_missing_from_every_area(self):
        doc = base_doc()
        doc["areas"][0]["machines"] = ["m1"]
        expect_error(doc, "not placed in any area")

    def test_duplicate_order_id(self):
        doc = base_doc()
        doc["orders"].append(copy.deepcopy(doc["orders"][0]))
        doc["orders"][1]["operations"][0]["id"] = "b1"
        doc["orders"][1]["operations"][1]["id"] = "b2"
        expect_error(doc, "duplicate order id 'a'")

    def test_duplicate_operation_id_across_orders(self):
        doc = base_doc()
        doc["orders"].append({
            "id": "b", "due": 2000,
            "operations": [{"id": "a1", "process": "milling", "duration": 10, "seq": 0}],
        })
        expect_error(doc, "duplicate operation id 'a1'")

    def test_rush_order_id_collides_with_plain_order(self):
        doc = base_doc()
        doc["disturbances"].append({
            "kind": "rush-order", "at": 50,
            "order": {"id": "a", "due": 900, "operations": [
                {"id": "r1", "process": "milling", "duration": 10, "seq": 0}]},
        })
        expect_error(doc, "duplicate order id 'a'")

    def test_excluded_area_must_exist(self):
        doc = base_doc()
        doc["orders"][0]["excluded_areas"] = ["attic"]
        expect_error(doc, "unknown area 'attic'")

    def test_arrival_past_horizon(self):
        doc = base_doc()
        doc["orders"][0]["arrival"] = 6000
        doc["orders"][0]["release"] = 6000
        doc["orders"][0]["due"] = 7000
        expect_error(doc, "arrives past the horizon")

    def test_disturbance_unknown_machine(self):
        doc = base_doc()
        doc["disturbances"][0]["machine"] = "m9"
        expect_error(doc, "unknown machine 'm9'")

    def test_tool_damage_must_target_stocked_item(self):
        doc = base_doc()
        doc["disturbances"] = [{"kind": "tool-damage", "at": 100,
                                "area": "shop", "item": "hammer"}]
        expect_error(doc, "no 'hammer' ever stocked")

    def test_back_order_for_unknown_order(self):
        doc = base_doc()
        doc["disturbances"] = [
            {"kind": "back-order", "at": 10, "order": "ghost", "extend_due": 100},
        ]
        expect_error(doc, "unknown order 'ghost'")

    def test_repair_before_failure(self):
        doc = base_doc()
        doc["disturbances"][0]["until"] = 50
        expect_error(doc, "repair time must be after the failure")

    def test_unknown_disturbance_kind(self):
        doc = base_doc()
        doc["disturbances"][0] = {"kind": "flood", "at": 10}
        expect_error(doc, "unknown disturbance 'flood'")

    def test_stock_unknown_area(self):
        doc = base_doc()
        doc["stock"] = {"cellar": {"tool": {"vise": 1}}}
        expect_error(doc, "unknown area")

    def test_stock_unknown_kind(self):
        doc = base_doc()
        doc["stock"] = {"shop": {"gizmo": {"vise": 1}}}
        expect_error(doc, "unknown resource kind")


class TestRoundTrip:
    def test_dumps_loads_is_identity_on_canonical_text(self):
        sc = parse(base_doc())
        text = dumps(sc)
        assert dumps(loads(text)) == text

    def test_synthetic_scenarios_round_trip(self):
        for seed in range(6):
            sc = synth.generate(seed, machines=4, orders=6)
            text = dumps(sc)
            again = loads(text)
            assert dumps(again) == text

    def test_dumps_normalizes_section_order(self):
        doc = base_doc()
        doc["orders"].append({
            "id": "early", "due": 500, "arrival": 0,
            "operations": [{"id": "e1", "process": "milling", "duration": 5, "seq": 0}],
        })
        doc["orders"][0]["arrival"] = 10
        sc = parse(doc)
        out = to_document(sc)
        assert [o["id"] for o in out["orders"]] == ["early", "a"]

    def test_canonical_text_shape(self):
        text = dumps(parse(base_doc()))
        assert text.endswith("\n")
        doc = json.loads(text)
        assert list(doc) == sorted(doc)

    def test_file_round_trip(self, tmp_path):
        sc = parse(base_doc())
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        again = load_scenario(path)
        assert dumps(again) == dumps(sc)

    def test_load_scenario_reports_bad_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{]")
        with pytest.raises(ScenarioError):
            load_scenario(path)


class TestBuildShop:
    def test_two_shops_do_not_share_state(self):
        sc = parse(base_doc())
        one = sc.build_shop()
        two = sc.build_shop()
        order = sc.order_specs[0].fresh()
        one.mma_create_job(order)
        one.dispatch(order.id, sc.order_specs[0].request(sc.config))
        assert len(one.plan) > 0
        assert len(two.plan) == 0
        assert order.id not in two.orders

    def test_stock_is_copied_per_shop(self):
        sc = parse(base_doc())
        one = sc.build_shop()
        two = sc.build_shop()
        one.ledgers[("shop", "tool")].stock["vise"] = 0
        assert two.ledgers[("shop", "tool")].stock["vise"] == 2
        assert sc.stock["shop"]["tool"]["vise"] == 2

    def test_machine_templates_stay_pristine(self):
        sc = parse(base_doc())
        shop = sc.build_shop()
        shop.machines["m1"].apt = 0.1
        assert sc.machines[0].apt != 0.1

    def test_spec_for_finds_rush_orders(self):
        doc = base_doc()
        doc["disturbances"].append({
            "kind": "rush-order", "at": 50,
            "order": {"id": "r", "due": 900, "priority": 5, "operations": [
                {"id": "r1", "process": "milling", "duration": 10, "seq": 0}]},
        })
        sc = parse(doc)
        spec = sc.spec_for("r")
        assert spec is not None
        assert spec.strategy == "X-Competition"
        assert spec.x_threshold == 5
        assert sc.spec_for("nope") is None
