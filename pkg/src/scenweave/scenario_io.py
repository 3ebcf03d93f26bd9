"""Scenario persistence: canonical JSON with lossless float round-trips.

The writer always emits the same bytes for equal scenarios (fixed key order,
two-space indent, ``repr`` floats), so re-serializing a loaded file is
byte-identical and suitable for content hashing.
"""
from __future__ import annotations

import json
from typing import Union

import numpy as np

from .scenario import (AdvScenario, AgentSpec, Lane, MetaScenario, Perturbation,
                       SceneContext, StopLine)
from .trajectory import Trajectory

SCHEMA_VERSION = "scenweave-scenario/1"


class ScenarioFormatError(ValueError):
    """Raised when a scenario document is missing fields or malformed."""


def _agent_dict(spec: AgentSpec, furniture: bool = False) -> dict:
    d = {
        "id": spec.id,
        "kind": spec.kind,
        "agent_class": spec.agent_class,
        "footprint": list(spec.footprint),
        "initial_pose": list(spec.initial_pose),
        "behavior": spec.behavior,
    }
    if furniture:
        d["furniture"] = True
    return d


def _agent_from(d: dict) -> AgentSpec:
    return AgentSpec(id=d["id"], kind=d["kind"], agent_class=d["agent_class"],
                     footprint=tuple(d["footprint"]),
                     initial_pose=tuple(d["initial_pose"]),
                     behavior=d["behavior"])


def _points(arr: np.ndarray) -> list:
    return [[float(x), float(y)] for x, y in np.asarray(arr, dtype=float)]


def scenario_to_dict(scenario: Union[MetaScenario, AdvScenario]) -> dict:
    if isinstance(scenario, MetaScenario):
        scenario = AdvScenario(meta=scenario, backgrounds=())
    if not isinstance(scenario, AdvScenario):
        raise TypeError(f"cannot serialize {type(scenario).__name__}")
    meta = scenario.meta
    ctx = meta.context
    agents = [_agent_dict(meta.ego), _agent_dict(meta.adversary)]
    trajectories = {meta.adversary.id: _points(meta.adversary_trajectory.points)}
    for spec, traj in meta.furniture:
        agents.append(_agent_dict(spec, furniture=True))
        trajectories[spec.id] = _points(traj.points)
    for spec, traj in scenario.backgrounds:
        agents.append(_agent_dict(spec))
        trajectories[spec.id] = _points(traj.points)
    return {
        "version": SCHEMA_VERSION,
        "dt": float(meta.dt),
        "context": {
            "road_type": ctx.road_type,
            "light_state": ctx.light_state,
            "lanes": [{"id": lane.id, "width": float(lane.width),
                       "centerline": _points(lane.centerline)} for lane in ctx.lanes],
            "stop_lines": [{"p1": [float(s.p1[0]), float(s.p1[1])],
                            "p2": [float(s.p2[0]), float(s.p2[1])],
                            "kind": s.kind, "on_route": bool(s.on_route)}
                           for s in ctx.stop_lines],
            "route": _points(ctx.route),
        },
        "agents": agents,
        "trajectories": trajectories,
        "perturbations": [{
            "agent_index": rec.agent_index,
            "keyframe": rec.keyframe,
            "window": list(rec.window),
            "original": _points(rec.original),
            "optimized": _points(rec.optimized),
        } for rec in scenario.perturbations],
    }


def dumps_scenario(scenario: Union[MetaScenario, AdvScenario]) -> str:
    doc = scenario_to_dict(scenario)
    try:
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise ScenarioFormatError(f"scenario contains non-finite values: {exc}") from exc


def save_scenario(scenario: Union[MetaScenario, AdvScenario], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(scenario))


def _require(doc: dict, key: str, where: str = "document"):
    if key not in doc:
        raise ScenarioFormatError(f"missing field {key!r} in scenario {where}")
    return doc[key]


def scenario_from_dict(doc: dict) -> Union[MetaScenario, AdvScenario]:
    version = _require(doc, "version")
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError(
            f"unsupported scenario version {version!r}; this build reads {SCHEMA_VERSION!r}")
    dt = float(_require(doc, "dt"))
    ctx_doc = _require(doc, "context")
    for key in ("road_type", "light_state", "lanes", "stop_lines", "route"):
        _require(ctx_doc, key, where="context")
    context = SceneContext(
        road_type=ctx_doc["road_type"],
        light_state=ctx_doc["light_state"],
        lanes=tuple(Lane(id=l["id"], width=l["width"], centerline=np.array(l["centerline"]))
                    for l in ctx_doc["lanes"]),
        stop_lines=tuple(StopLine(p1=tuple(s["p1"]), p2=tuple(s["p2"]), kind=s["kind"],
                                  on_route=s["on_route"]) for s in ctx_doc["stop_lines"]),
        route=np.array(ctx_doc["route"]),
    )
    agent_docs = _require(doc, "agents")
    if len(agent_docs) < 2:
        raise ScenarioFormatError("scenario document needs at least ego and adversary agents")
    trajectories = _require(doc, "trajectories")
    perturb_docs = _require(doc, "perturbations")

    def scripted(spec: AgentSpec) -> Trajectory:
        if spec.id not in trajectories:
            raise ScenarioFormatError(f"missing trajectory for agent {spec.id!r}")
        return Trajectory(dt=dt, points=np.array(trajectories[spec.id]))

    ego, adversary = _agent_from(agent_docs[0]), _agent_from(agent_docs[1])
    furniture, backgrounds = [], []
    for d in agent_docs[2:]:
        spec = _agent_from(d)
        (furniture if d.get("furniture") else backgrounds).append((spec, scripted(spec)))
    meta = MetaScenario(ego=ego, adversary=adversary, context=context,
                        adversary_trajectory=scripted(adversary),
                        furniture=tuple(furniture))
    perturbations = tuple(Perturbation(
        agent_index=p["agent_index"], keyframe=p["keyframe"],
        window=tuple(p["window"]),
        original=np.array(p["original"]), optimized=np.array(p["optimized"]))
        for p in perturb_docs)
    if not backgrounds and not perturbations:
        return meta
    return AdvScenario(meta=meta, backgrounds=tuple(backgrounds), perturbations=perturbations)


def loads_scenario(text: str) -> Union[MetaScenario, AdvScenario]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    return scenario_from_dict(doc)


def load_scenario(path) -> Union[MetaScenario, AdvScenario]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_scenario(fh.read())
