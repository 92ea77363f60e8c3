import json
import math

import pytest

import worldline.catalog as cat
import worldline.expr as ex
import worldline.geometry as geo


def test_builtin_listing():
    names = cat.list_builtins()
    assert names == ("clifton-pohl", "flat-lorentz-torus", "null-plane-cubic",
                     "riemann-flat-torus", "riemann-superlinear", "t3-magnetic")
    with pytest.raises(geo.ValidationError):
        cat.builtin("no-such-scenario")


def test_builtins_validate_and_carry_expectations():
    for name in cat.list_builtins():
        s = cat.builtin(name)
        assert s.name == name
        assert s.expected_classification in ("BlowupAt", "CompleteToHorizon")
        assert s.expected_prediction in ("Complete", "NoPrediction")
        assert s.note


def test_round_trip_is_byte_identical(tmp_path):
    for name in cat.list_builtins():
        p1 = tmp_path / f"{name}.json"
        p2 = tmp_path / f"{name}_again.json"
        s = cat.builtin(name)
        cat.save(s, p1)
        s2 = cat.load(p1)
        cat.save(s2, p2)
        assert p1.read_bytes() == p2.read_bytes(), name
        assert s2.manifold == s.manifold
        assert s2.fields == s.fields
        assert s2.initial == s.initial
        assert s2.config == s.config


def test_normative_keys_present(tmp_path):
    p = tmp_path / "s.json"
    cat.save(cat.builtin("t3-magnetic"), p)
    doc = json.loads(p.read_text())
    assert set(doc) == {"name", "dimension", "coordinates", "metric",
                       "quotient", "domain", "fields", "initial", "config"}
    assert set(doc["fields"]) == {"F", "X", "V", "K"}
    assert set(doc["initial"]) == {"q", "v"}
    assert "g_0_0" in doc["metric"]
    assert doc["quotient"] == {"lattice": [1.0, 1.0, 1.0]}
    # unbounded chart bounds serialize as nulls
    assert doc["domain"]["lower"] == [None, None, None]


def test_t3_parameters_are_injected():
    s = cat.builtin("t3-magnetic", b=2.0, potential_amplitude=0.0)
    F = s.fields.force_operator
    assert ex.to_text(F[1][2]) == "2"
    assert ex.to_text(F[2][1]) == "-2"
    assert ex.to_text(s.fields.potential).startswith("0*")


def scenario_doc(**overrides):
    doc = {
        "name": "demo",
        "dimension": 2,
        "coordinates": ["x", "y"],
        "metric": {"g_0_0": "1", "g_1_1": "1"},
        "quotient": None,
        "domain": {"lower": [None, None], "upper": [None, None],
                   "exclude_origin_radius": None},
        "fields": {"F": None, "X": None, "V": None, "K": None},
        "initial": {"q": [0.0, 0.0], "v": [1.0, 0.0]},
        "config": {"signature": "riemannian"},
    }
    doc.update(overrides)
    return doc


def test_from_dict_validation_errors():
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(dimension=3))
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(
            metric={"g_0_1": "x", "g_1_0": "y"}))  # unequal mirror entries
    with pytest.raises(ex.UnknownIdentifierError):
        cat.scenario_from_dict(scenario_doc(
            metric={"g_0_0": "1 + z^2", "g_1_1": "1"}))
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(
            fields={"F": None, "X": ["x"], "V": None, "K": None}))
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(quotient={"mystery": 1}))
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(
            quotient={"lattice": [1.0], "scaling": 2.0}))
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(
            initial={"q": [0.0], "v": [0.0, 0.0]}))
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(metric={}))
    with pytest.raises(geo.ValidationError):
        doc = scenario_doc()
        del doc["coordinates"]
        cat.scenario_from_dict(doc)
    with pytest.raises(geo.ValidationError):
        cat.scenario_from_dict(scenario_doc(
            metric={"g_5_0": "1", "g_1_1": "1"}))


def test_mirrored_metric_keys_accept_equal_entries():
    s = cat.scenario_from_dict(scenario_doc(
        metric={"g_0_1": "x * y", "g_1_0": "x * y",
                "g_0_0": "1", "g_1_1": "1"}))
    assert ex.to_text(s.manifold.metric[0][1]) == "x*y"


def test_load_rejects_malformed_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(geo.ValidationError):
        cat.load(p)
    with pytest.raises(geo.ValidationError):
        # initial point far outside a bounded chart
        doc = scenario_doc(domain={"lower": [-1, -1], "upper": [1, 1],
                                   "exclude_origin_radius": None},
                           initial={"q": [5.0, 0.0], "v": [0.0, 0.0]})
        good = tmp_path / "bad_initial.json"
        good.write_text(json.dumps(doc))
        cat.load(good)


def test_integration_config_merging():
    s = cat.builtin("clifton-pohl")
    cfg = s.integration_config()
    assert cfg.t_max == 2.0  # scenario default
    cfg2 = s.integration_config(t_max=7.0, rtol=1e-8)
    assert cfg2.t_max == 7.0
    assert cfg2.rtol == 1e-8
    # None overrides fall through to the scenario values
    cfg3 = s.integration_config(t_max=None)
    assert cfg3.t_max == 2.0


def test_resolve_name_path_and_error(tmp_path):
    assert cat.resolve("t3-magnetic").name == "t3-magnetic"
    p = tmp_path / "file.json"
    cat.save(cat.builtin("riemann-superlinear"), p)
    assert cat.resolve(str(p)).name == "riemann-superlinear"
    with pytest.raises(geo.ValidationError):
        cat.resolve("missing.json")


def test_clifton_pohl_scenario_structure():
    s = cat.builtin("clifton-pohl")
    m = s.manifold
    assert m.signature == geo.LORENTZIAN
    assert isinstance(m.quotient, geo.ScalingQuotient)
    assert m.quotient.factor == 2.0
    assert m.domain.exclude_origin_radius == 1e-8
    g = m.metric_value((1.0, 1.0))
    assert g[0][1] == pytest.approx(0.5)  # 1/(u^2+v^2) off-diagonal
    assert g[0][0] == 0.0
    assert s.fields.reference_field is not None


def test_infinite_bounds_round_trip(tmp_path):
    doc = scenario_doc(domain={"lower": [0.0, None], "upper": [None, 2.5],
                               "exclude_origin_radius": 0.125},
                       initial={"q": [1.0, 1.0], "v": [1.0, 0.0]})
    s = cat.scenario_from_dict(doc)
    assert s.manifold.domain.lower == (0.0, -math.inf)
    assert s.manifold.domain.upper == (math.inf, 2.5)
    p = tmp_path / "dom.json"
    cat.save(s, p)
    out = json.loads(p.read_text())
    assert out["domain"]["lower"] == [0.0, None]
    assert out["domain"]["upper"] == [None, 2.5]
    assert out["domain"]["exclude_origin_radius"] == 0.125
