"""Scenario files: schema validation, presets, seeded draws and gain certification."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import stability
from .adaptation import SCHEMES
from .agents import AgentParams, RegressorSpec, ScenarioSpec
from .graph import build_transform, has_spanning_tree, laplacian, load_network

PRESETS = ("paper_fig2", "example1_undirected", "example2_leader", "two_agent_minimal")

_positive = {"type": "number", "exclusiveMinimum": 0}
_vector = {"type": "array", "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["network", "agents"],
    "properties": {
        "name": {"type": "string"},
        "order": {"enum": [1, 2]},
        "network": {
            "oneOf": [
                {"type": "string"},
                {
                    "type": "object",
                    "required": ["n", "edges"],
                    "properties": {
                        "n": {"type": "integer", "minimum": 2},
                        "edges": {
                            "type": "array",
                            "items": {"type": "array", "minItems": 3, "maxItems": 3,
                                      "items": {"type": "number"}},
                        },
                    },
                },
            ]
        },
        "alpha1": {"type": "number"},
        "alpha2": {"type": "number"},
        "agents": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["terms", "lambda"],
                "properties": {
                    "terms": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "lambda": _positive,
                    "w_true": _vector,
                    "alpha1": {"type": "number"},
                    "alpha2": {"type": "number"},
                },
                "additionalProperties": False,
            },
        },
        "gains": {
            "oneOf": [
                {"const": "auto"},
                {
                    "type": "object",
                    "required": ["gamma1"],
                    "properties": {"gamma1": _positive, "gamma2": {"type": "number", "minimum": 0}},
                    "additionalProperties": False,
                },
            ]
        },
        "scheme": {"enum": list(SCHEMES)},
        "step": _positive,
        "horizon": _positive,
        "sample_every": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "ic_range": _positive,
        "w_range": _positive,
        "initial": {
            "type": "object",
            "properties": {
                "p": _vector,
                "v": _vector,
                "w_hat": _vector,
                "on_manifold": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "k": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "kappa": _positive,
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "order": 2,
    "alpha1": 0.0,
    "alpha2": 0.0,
    "gains": "auto",
    "scheme": "distributed",
    "step": 1e-3,
    "horizon": 30.0,
    "sample_every": 10,
    "seed": 0,
    "ic_range": 5.0,
    "w_range": 1.0,
    "k": 0.5,
    "kappa": 1.0,
}


class ScenarioError(ValueError):
    """Malformed or schema-violating scenario document (CLI exit code 2)."""


class AssumptionError(ValueError):
    """A structural assumption fails: no spanning tree, gains not Hurwitz, ... (exit code 1)."""


def preset_path(name: str) -> Path:
    return Path(str(resources.files("adaptive_consensus") / "presets" / f"{name}.json"))


def read_document(source) -> tuple[dict, Path | None]:
    """Load a scenario document from a dict, a preset name or a JSON path."""
    if isinstance(source, dict):
        return copy.deepcopy(source), None
    path = Path(source)
    if not path.exists() and str(source) in PRESETS:
        path = preset_path(str(source))
    try:
        return json.loads(path.read_text()), path.parent
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {source}: {exc}") from exc


def validate_document(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {where}: {exc.message}") from exc


def resolve(doc: dict, base: Path | None = None, overrides: dict | None = None) -> dict:
    """Apply overrides and defaults; inline the network. Returns a new document."""
    doc = copy.deepcopy(doc)
    for key, val in (overrides or {}).items():
        if val is not None:
            doc[key] = val
    validate_document(doc)
    net = doc["network"]
    if isinstance(net, str):
        cand = [Path(net)] if Path(net).is_absolute() else []
        if base is not None:
            cand.append(base / net)
        cand.append(preset_path(Path(net).stem))
        for c in cand:
            if c.exists():
                try:
                    doc["network"] = json.loads(c.read_text())
                except json.JSONDecodeError as exc:
                    raise ScenarioError(f"cannot parse graph file {c}: {exc}") from exc
                break
        else:
            raise ScenarioError(f"graph file {net!r} not found")
        validate_document(doc)
    for key, val in DEFAULTS.items():
        doc.setdefault(key, val)
    return doc


def document_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def build_scenario(doc: dict) -> ScenarioSpec:
    """Turn a resolved document into a validated, certified :class:`ScenarioSpec`."""
    try:
        net = load_network(doc["network"])
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    n, order = net.n, doc["order"]
    if len(doc["agents"]) != n:
        raise ScenarioError(f"{len(doc['agents'])} agents for an {n}-node network")
    a1, a2 = float(doc["alpha1"]), float(doc["alpha2"])
    for i, ag in enumerate(doc["agents"]):
        if ag.get("alpha1", a1) != a1 or ag.get("alpha2", a2) != a2:
            raise ScenarioError(f"agent {i + 1}: heterogeneous alpha1/alpha2 are not supported")
    lap = laplacian(net)
    ok, _ = has_spanning_tree(lap)
    if not ok:
        raise AssumptionError("no directed spanning tree")
    transform = build_transform(lap, order=order)

    rng = np.random.default_rng(doc["seed"])
    agents = []
    for i, ag in enumerate(doc["agents"]):
        reg = RegressorSpec(tuple(ag["terms"]), float(ag["lambda"]))
        w = ag.get("w_true")
        if w is None:
            w = rng.uniform(-doc["w_range"], doc["w_range"], reg.m)
        elif len(w) != reg.m:
            raise ScenarioError(f"agent {i + 1}: w_true has {len(w)} entries for {reg.m} terms")
        agents.append(AgentParams(a1, a2, reg, np.asarray(w, float)))

    init = doc.get("initial", {})
    ic = doc["ic_range"]
    p0 = np.asarray(init["p"], float) if "p" in init else rng.uniform(-ic, ic, n)
    v0 = None
    if order == 2:
        v0 = np.asarray(init["v"], float) if "v" in init else rng.uniform(-ic, ic, n)
    m = sum(a.regressor.m for a in agents)
    if init.get("on_manifold"):
        # simulation-side setup: start on z = 0, i.e. w_hat = w + rho(q0)
        q0 = p0 if order == 1 else v0
        w_hat0 = np.concatenate(
            [a.w_true - a.regressor.lam * q0[i] ** (np.array(a.regressor.exponents) + 1.0)
             / (np.array(a.regressor.exponents) + 1.0) for i, a in enumerate(agents)]
        ) if m else np.zeros(0)
    else:
        w_hat0 = np.asarray(init.get("w_hat", np.zeros(m)), float)
    if p0.shape != (n,) or (v0 is not None and v0.shape != (n,)) or w_hat0.shape != (m,):
        raise ScenarioError("initial state has the wrong dimension")

    try:
        if doc["gains"] == "auto":
            if order == 2:
                gains, _ = stability.select_gains(transform.J, a1, a2, r=transform.R)
            else:
                gains = stability.select_gains_first_order(transform.J, a1, r=transform.R)
        else:
            g = doc["gains"]
            gains = stability.certify_gains(
                transform.J, a1, a2, g["gamma1"], g.get("gamma2", 0.0), r=transform.R, order=order
            )
    except stability.StabilityError as exc:
        raise AssumptionError(str(exc)) from exc

    source = dict(doc)
    source["_hash"] = document_hash(doc)
    return ScenarioSpec(
        name=doc.get("name", "scenario"),
        order=order,
        network=net,
        transform=transform,
        agents=tuple(agents),
        gains=gains,
        p0=p0,
        v0=v0,
        w_hat0=w_hat0,
        scheme=doc["scheme"],
        step=float(doc["step"]),
        horizon=float(doc["horizon"]),
        sample_every=int(doc["sample_every"]),
        seed=int(doc["seed"]),
        k=float(doc["k"]),
        kappa=float(doc["kappa"]),
        source=source,
    )


def load_scenario(source, **overrides) -> ScenarioSpec:
    """Read, validate and build a scenario; ``overrides`` replace top-level keys."""
    doc, base = read_document(source)
    return build_scenario(resolve(doc, base, overrides))
