"""Built-in scenarios and the scenario file format.

A scenario bundles a manifold, a field pack, default initial data and the
expected outcomes used by the regression tests.  Files are canonical JSON:
expressions are stored in the printer's canonical text, keys are sorted, so
save -> load -> save reproduces the bytes exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from . import dynamics as dy
from . import expr as ex
from . import fields as fl
from . import geometry as geo

_INTEGRATION_KEYS = ("t_max", "rtol", "atol", "v_max", "h_min", "stride")


@dataclass(frozen=True)
class Scenario:
    name: str
    manifold: geo.ManifoldSpec
    fields: fl.FieldPack
    initial: geo.TrajectoryState
    config: tuple = ()  # sorted (key, value) pairs; see config_dict()
    expected_classification: str | None = None
    expected_prediction: str | None = None
    note: str = ""

    def config_dict(self) -> dict:
        return dict(self.config)

    def integration_config(self, **overrides) -> dy.IntegrationConfig:
        """Scenario defaults merged with explicit overrides."""
        kw = {k: v for k, v in self.config if k in _INTEGRATION_KEYS}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return dy.IntegrationConfig(**kw)

    def validate(self):
        geo.validate_manifold(self.manifold)
        fl.validate_fields(self.manifold, self.fields)
        if len(self.initial.q) != self.manifold.dim or len(self.initial.v) != self.manifold.dim:
            raise geo.ValidationError("initial data arity does not match the dimension")
        if not self.manifold.domain.contains(self.initial.q):
            q, _, _ = geo.normalize_qv(self.manifold, self.initial.q, self.initial.v)
            if not self.manifold.domain.contains(q):
                raise geo.ValidationError(
                    f"initial point {self.initial.q} is outside the chart domain")


# --- serialization ---------------------------------------------------------

def _bound_to_json(x: float):
    return None if math.isinf(x) else x


def _bound_from_json(x, sign: float) -> float:
    return sign * math.inf if x is None else float(x)


def scenario_to_dict(s: Scenario) -> dict:
    m = s.manifold
    n = m.dim
    metric = {}
    for i in range(n):
        for j in range(i, n):
            e = m.metric[i][j]
            if e != ex.ZERO:
                metric[f"g_{i}_{j}"] = ex.to_text(e)
    quot = None
    if isinstance(m.quotient, geo.LatticeQuotient):
        quot = {"lattice": list(m.quotient.periods)}
    elif isinstance(m.quotient, geo.ScalingQuotient):
        quot = {"scaling": m.quotient.factor}
    fp = s.fields
    fields_doc = {
        "F": None if fp.force_operator is None else
             [[ex.to_text(e) for e in row] for row in fp.force_operator],
        "X": None if fp.force_vector is None else
             [ex.to_text(e) for e in fp.force_vector],
        "V": None if fp.potential is None else ex.to_text(fp.potential),
        "K": None if fp.reference_field is None else
             [ex.to_text(e) for e in fp.reference_field],
    }
    config = dict(s.config)
    config["signature"] = m.signature
    if m.declared_complete:
        config["declared_complete"] = True
    if s.expected_classification is not None:
        config["expected_classification"] = s.expected_classification
    if s.expected_prediction is not None:
        config["expected_prediction"] = s.expected_prediction
    if s.note:
        config["note"] = s.note
    return {
        "name": s.name,
        "dimension": n,
        "coordinates": list(m.frame.names),
        "metric": metric,
        "quotient": quot,
        "domain": {
            "lower": [_bound_to_json(b) for b in m.domain.lower],
            "upper": [_bound_to_json(b) for b in m.domain.upper],
            "exclude_origin_radius": m.domain.exclude_origin_radius,
        },
        "fields": fields_doc,
        "initial": {"q": list(s.initial.q), "v": list(s.initial.v)},
        "config": config,
    }


def _require(cond, msg):
    if not cond:
        raise geo.ValidationError(msg)


def scenario_from_dict(doc: dict) -> Scenario:
    _require(isinstance(doc, dict), "scenario document must be an object")
    for key in ("name", "dimension", "coordinates", "metric", "initial"):
        _require(key in doc, f"scenario is missing the {key!r} key")
    coords = doc["coordinates"]
    n = doc["dimension"]
    _require(isinstance(coords, list) and len(coords) == n,
             "dimension does not match the coordinate list")
    frame = ex.CoordinateFrame(tuple(coords),
                               time_dependent=ex.TIME_NAME not in coords)
    config = dict(doc.get("config") or {})
    signature = config.pop("signature", geo.RIEMANNIAN)
    declared_complete = bool(config.pop("declared_complete", False))
    expected_cls = config.pop("expected_classification", None)
    expected_pred = config.pop("expected_prediction", None)
    note = config.pop("note", "")

    components = {}
    for key, text in (doc["metric"] or {}).items():
        parts = key.split("_")
        _require(len(parts) == 3 and parts[0] == "g" and parts[1].isdigit()
                 and parts[2].isdigit(), f"bad metric key {key!r}")
        i, j = int(parts[1]), int(parts[2])
        _require(0 <= i < n and 0 <= j < n, f"metric key {key!r} out of range")
        e = ex.parse(text, frame)
        lo, hi = min(i, j), max(i, j)
        if (lo, hi) in components and components[(lo, hi)] != e:
            raise geo.ValidationError(
                f"metric entries g_{lo}_{hi} and g_{hi}_{lo} disagree")
        components[(lo, hi)] = e
    _require(bool(components), "metric has no entries")

    quot_doc = doc.get("quotient")
    quotient = None
    if quot_doc is not None:
        _require(isinstance(quot_doc, dict) and len(quot_doc) == 1,
                 'quotient must be {"lattice": [periods]} or {"scaling": factor}')
        if "lattice" in quot_doc:
            periods = quot_doc["lattice"]
            _require(isinstance(periods, list) and len(periods) == n,
                     "lattice periods must match the dimension")
            quotient = geo.LatticeQuotient(
                tuple(None if p is None else float(p) for p in periods))
        elif "scaling" in quot_doc:
            quotient = geo.ScalingQuotient(float(quot_doc["scaling"]))
        else:
            raise geo.ValidationError(
                f"unknown quotient kind {sorted(quot_doc)!r}")

    dom_doc = doc.get("domain") or {}
    lower = dom_doc.get("lower") or [None] * n
    upper = dom_doc.get("upper") or [None] * n
    _require(len(lower) == n and len(upper) == n,
             "domain bounds must match the dimension")
    radius = dom_doc.get("exclude_origin_radius")
    domain = geo.ChartDomain(
        tuple(_bound_from_json(b, -1.0) for b in lower),
        tuple(_bound_from_json(b, +1.0) for b in upper),
        None if radius is None else float(radius))

    manifold = geo.manifold_from_components(frame, components, domain,
                                            signature, quotient, declared_complete)

    f_doc = doc.get("fields") or {}
    F = f_doc.get("F")
    if F is not None:
        _require(isinstance(F, list) and len(F) == n
                 and all(isinstance(r, list) and len(r) == n for r in F),
                 f"force operator must be a {n}x{n} matrix of expressions")
        F = tuple(tuple(ex.parse(e, frame) for e in row) for row in F)
    X = f_doc.get("X")
    if X is not None:
        _require(isinstance(X, list) and len(X) == n,
                 f"force vector must have {n} components")
        X = tuple(ex.parse(e, frame) for e in X)
    V = f_doc.get("V")
    if V is not None:
        V = ex.parse(V, frame)
    K = f_doc.get("K")
    if K is not None:
        _require(isinstance(K, list) and len(K) == n,
                 f"reference field must have {n} components")
        K = tuple(ex.parse(e, frame) for e in K)
    pack = fl.FieldPack(frame, force_operator=F, force_vector=X,
                        potential=V, reference_field=K)

    init = doc["initial"]
    q = init.get("q")
    v = init.get("v")
    _require(isinstance(q, list) and len(q) == n
             and isinstance(v, list) and len(v) == n,
             "initial q and v must match the dimension")
    state = geo.TrajectoryState(0.0, tuple(float(c) for c in q),
                                tuple(float(c) for c in v))
    return Scenario(doc["name"], manifold, pack, state,
                    tuple(sorted(config.items())), expected_cls, expected_pred, note)


def save(s: Scenario, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path) -> Scenario:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise geo.ValidationError(f"{path}: {err}") from err
    s = scenario_from_dict(doc)
    s.validate()
    return s


# --- built-ins -------------------------------------------------------------

def _doc_clifton_pohl():
    return {
        "name": "clifton-pohl",
        "dimension": 2,
        "coordinates": ["u", "v"],
        "metric": {"g_0_1": "1 / (u^2 + v^2)"},
        "quotient": {"scaling": 2.0},
        "domain": {"lower": [None, None], "upper": [None, None],
                   "exclude_origin_radius": 1e-8},
        "fields": {"F": None, "X": None, "V": None, "K": ["u", "v"]},
        "initial": {"q": [1.0, 0.0], "v": [1.0, 0.0]},
        "config": {
            "signature": "lorentzian",
            "t_max": 2.0,
            "expected_classification": "BlowupAt",
            "expected_prediction": "NoPrediction",
            "note": "compact quotient surface whose geodesic u(t) = 1/(1-t) "
                    "leaves every compact set of the tangent bundle in finite time",
        },
    }


def _doc_null_plane_cubic():
    return {
        "name": "null-plane-cubic",
        "dimension": 2,
        "coordinates": ["x", "y"],
        "metric": {"g_0_1": "1"},
        "quotient": None,
        "domain": {"lower": [None, None], "upper": [None, None],
                   "exclude_origin_radius": None},
        "fields": {"F": None, "X": ["2 * x^3", "0"], "V": None, "K": None},
        "initial": {"q": [1.0, 0.0], "v": [1.0, 0.0]},
        "config": {
            "signature": "lorentzian",
            "declared_complete": True,
            "t_max": 2.0,
            "expected_classification": "BlowupAt",
            "expected_prediction": "NoPrediction",
            "note": "flat null-plane metric, cubic force with vanishing metric "
                    "norm; x(t) = 1/(1-t) escapes in finite time",
        },
    }


def _doc_flat_lorentz_torus():
    return {
        "name": "flat-lorentz-torus",
        "dimension": 2,
        "coordinates": ["t", "x"],
        "metric": {"g_0_0": "-1", "g_1_1": "1"},
        "quotient": {"lattice": [1.0, 1.0]},
        "domain": {"lower": [None, None], "upper": [None, None],
                   "exclude_origin_radius": None},
        "fields": {"F": None, "X": None, "V": None, "K": ["1", "0"]},
        "initial": {"q": [0.0, 0.0], "v": [1.0, 0.3]},
        "config": {
            "signature": "lorentzian",
            "t_max": 100.0,
            "expected_classification": "CompleteToHorizon",
            "expected_prediction": "Complete",
            "note": "flat geodesics on a compact quotient; every hypothesis "
                    "holds trivially",
        },
    }


def _doc_t3_magnetic(b: float = 1.0, potential_amplitude: float = 0.1):
    b = float(b)
    amp = float(potential_amplitude)
    return {
        "name": "t3-magnetic",
        "dimension": 3,
        "coordinates": ["t", "x", "y"],
        "metric": {"g_0_0": "-1", "g_1_1": "1", "g_2_2": "1"},
        "quotient": {"lattice": [1.0, 1.0, 1.0]},
        "domain": {"lower": [None, None, None], "upper": [None, None, None],
                   "exclude_origin_radius": None},
        "fields": {
            "F": [["0", "0", "0"], ["0", "0", repr(b)], ["0", repr(-b), "0"]],
            "X": None,
            "V": f"{amp!r} * (cos(2 * pi * x) + cos(2 * pi * y))",
            "K": ["1", "0", "0"],
        },
        "initial": {"q": [0.0, 0.25, 0.0], "v": [1.0, 0.4, -0.3]},
        "config": {
            "signature": "lorentzian",
            "t_max": 100.0,
            "expected_classification": "CompleteToHorizon",
            "expected_prediction": "Complete",
            "note": "constant magnetic-type rotation in the spatial torus "
                    "directions plus a periodic potential; the stationary "
                    "reference field is annihilated by the force operator",
        },
    }


def _doc_riemann_flat_torus():
    return {
        "name": "riemann-flat-torus",
        "dimension": 2,
        "coordinates": ["x", "y"],
        "metric": {"g_0_0": "1", "g_1_1": "1"},
        "quotient": {"lattice": [1.0, 1.0]},
        "domain": {"lower": [None, None], "upper": [None, None],
                   "exclude_origin_radius": None},
        "fields": {
            "F": [["0", "sin(2 * pi * x)"], ["0", "0"]],
            "X": None,
            "V": "0.2 * cos(2 * pi * y)",
            "K": None,
        },
        "initial": {"q": [0.0, 0.0], "v": [0.7, 0.2]},
        "config": {
            "signature": "riemannian",
            "t_max": 100.0,
            "expected_classification": "CompleteToHorizon",
            "expected_prediction": "Complete",
            "note": "compact positive-definite base: completeness holds for "
                    "any bounded smooth forcing",
        },
    }


def _doc_riemann_superlinear():
    return {
        "name": "riemann-superlinear",
        "dimension": 1,
        "coordinates": ["x"],
        "metric": {"g_0_0": "1"},
        "quotient": None,
        "domain": {"lower": [None], "upper": [None],
                   "exclude_origin_radius": None},
        "fields": {"F": None, "X": ["x^2"], "V": None, "K": None},
        "initial": {"q": [1.0], "v": [1.0]},
        "config": {
            "signature": "riemannian",
            "declared_complete": True,
            "t_max": 10.0,
            "expected_classification": "BlowupAt",
            "expected_prediction": "NoPrediction",
            "note": "superlinear force on the line: the growth hypothesis is "
                    "sharp, and trajectories with x(0) > 0 escape",
        },
    }


_BUILTINS = {
    "clifton-pohl": _doc_clifton_pohl,
    "null-plane-cubic": _doc_null_plane_cubic,
    "flat-lorentz-torus": _doc_flat_lorentz_torus,
    "t3-magnetic": _doc_t3_magnetic,
    "riemann-flat-torus": _doc_riemann_flat_torus,
    "riemann-superlinear": _doc_riemann_superlinear,
}


def list_builtins() -> tuple:
    return tuple(sorted(_BUILTINS))


def builtin(name: str, **params) -> Scenario:
    """A catalog scenario by name; t3-magnetic accepts b and potential_amplitude."""
    try:
        maker = _BUILTINS[name]
    except KeyError:
        raise geo.ValidationError(
            f"unknown scenario {name!r}; choose from {', '.join(list_builtins())}") from None
    s = scenario_from_dict(maker(**params))
    s.validate()
    return s


def resolve(source: str) -> Scenario:
    """Interpret a CLI scenario argument as a builtin name or a file path."""
    if source in _BUILTINS:
        return builtin(source)
    import os
    if os.path.exists(source):
        return load(source)
    raise geo.ValidationError(
        f"{source!r} is neither a built-in scenario nor an existing file")
