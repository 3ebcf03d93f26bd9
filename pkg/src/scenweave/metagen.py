"""Meta-scenario generation: semantic tuples, parsing, instantiation, emission.

The pipeline is: retrieve knowledge entries for a base prompt, produce a
five-slot semantic tuple (agent class, position, behavior, road type, light
state) either from a remote chat endpoint or from the deterministic template
backend, parse the free-text slots into closed vocabularies, instantiate a
MetaScenario on a road template, and emit a Scenic-syntax script.
"""
from __future__ import annotations

import difflib
import math
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .behaviors import (DEFAULT_OFFSET, DEFAULT_TRIGGER, InstantiationError,
                        resolve_placement, synthesize_adversary)
from .knowledge import KnowledgeEntry, load_knowledge_base, retrieve
from .roads import RoadTemplate, builtin_road_library
from .scenario import (CLASS_FOOTPRINT, CLASS_MAX_SPEED, AgentSpec, MetaScenario)
from .trajectory import DEFAULT_DT, Trajectory

AUTH_ENV_VAR = "SCENWEAVE_API_TOKEN"

INSTRUCTION_PROMPT = (
    "You design safety-critical driving scenarios. Given the request and the "
    "numbered context entries, answer with exactly five lines and nothing else:\n"
    "C: <agent class>\nP: <agent position relative to the ego>\n"
    "B: <agent behavior>\nR: <road type>\nL: <traffic light state>")


class BackendError(RuntimeError):
    """Remote generation failed after retry; carries the transport cause."""


class ParseError(ValueError):
    """A free-text slot could not be mapped to the closed vocabulary."""

    def __init__(self, message: str, suggestions: Sequence[str] = ()):
        super().__init__(message)
        self.suggestions = tuple(suggestions)


@dataclass(frozen=True)
class SemanticTuple:
    """Five free-text slots describing one adversarial scenario."""

    phi_c: str
    phi_p: str
    phi_b: str
    phi_r: str
    phi_l: str

    def __post_init__(self):
        for name in ("phi_c", "phi_p", "phi_b", "phi_r", "phi_l"):
            if not getattr(self, name).strip():
                raise ValueError(f"semantic slot {name} must be non-empty")


@dataclass(frozen=True)
class ParsedSemantics:
    """Closed-vocabulary scenario description ready for instantiation."""

    agent_class: str
    placement: str
    offset: float
    behavior: str
    road_type: str
    light_state: str
    trigger: float = DEFAULT_TRIGGER


@dataclass(frozen=True)
class GeneratorBackend:
    """Where semantic tuples come from: a template expander or an endpoint."""

    mode: str = "template"
    seed: int = 0
    endpoint: str = ""
    model: str = ""
    timeout: float = 30.0

    def __post_init__(self):
        if self.mode not in ("template", "remote"):
            raise ValueError(f"backend mode must be 'template' or 'remote', got {self.mode!r}")
        if self.mode == "remote" and not self.endpoint:
            raise ValueError("remote backend requires an endpoint URL")


# --- phrase banks for the template backend -------------------------------

_CLASS_PHRASES = {
    "pedestrian": ("a pedestrian", "a person on foot", "a jaywalker"),
    "car": ("a car", "a sedan", "a passenger vehicle"),
    "truck": ("a truck", "a lorry", "a heavy goods vehicle"),
    "cyclist": ("a cyclist", "a bicycle rider"),
    "scooter": ("a scooter rider", "an e-scooter rider"),
}

_PLACEMENT_PHRASES = {
    "ahead-same-lane": "in the ego lane {d} m ahead",
    "ahead-adjacent-lane": "in the adjacent lane {d} m ahead",
    "occluded-roadside": "behind a parked truck on the right shoulder {d} m ahead",
    "oncoming": "in the oncoming lane {d} m ahead",
    "crossing-left": "approaching from the left side {d} m ahead",
    "crossing-right": "approaching from the right side {d} m ahead",
}

_BEHAVIOR_PHRASES = {
    "sudden-emergence": "steps out into the lane when the ego closes to {g} m",
    "crossing": "crosses the road at a steady pace",
    "red-light-run": "runs the red light without slowing",
    "cut-in": "cuts into the ego lane when the gap falls to {g} m",
    "hard-brake": "brakes hard when the ego closes to {g} m",
    "oncoming-drift": "drifts across the center line toward the ego",
    "left-turn-across": "turns left across the ego path at the junction",
    "stationary": "remains stationary, blocking the lane",
}

_ROAD_PHRASES = {
    "straight": "a straight two-way road",
    "curve": "a gentle left bend",
    "intersection": "a four-way signalized intersection",
    "t-junction": "a T-junction on a two-way road",
    "roundabout": "a single-lane roundabout",
}

_LIGHT_PHRASES = {
    "red": "the signal is red",
    "yellow": "the signal is amber",
    "green": "the signal is green",
    "none": "no traffic signal present",
}

# --- synonym tables for parsing -------------------------------------------

CLASS_SYNONYMS = {
    "pedestrian": "pedestrian", "person": "pedestrian", "jaywalker": "pedestrian",
    "walker": "pedestrian", "child": "pedestrian",
    "car": "car", "sedan": "car", "vehicle": "car", "taxi": "car", "van": "car",
    "truck": "truck", "lorry": "truck", "trailer": "truck", "bus": "truck",
    "cyclist": "cyclist", "bicycle": "cyclist", "bike": "cyclist",
    "scooter": "scooter", "moped": "scooter",
}

ROAD_SYNONYMS = {
    "roundabout": "roundabout", "rotary": "roundabout", "circle": "roundabout",
    "t-junction": "t-junction", "t junction": "t-junction", "tee": "t-junction",
    "intersection": "intersection", "crossroads": "intersection",
    "four-way": "intersection", "junction": "intersection", "crossing": "intersection",
    "curve": "curve", "bend": "curve", "curved": "curve",
    "straight": "straight", "highway": "straight", "two-way road": "straight",
    "road": "straight", "street": "straight",
}

# Ordered: earlier rules win, so occlusion phrases beat the left/right words
# they contain.
_PLACEMENT_RULES = (
    (("behind a parked", "behind parked", "occluded", "hidden", "shoulder", "behind the parked"),
     "occluded-roadside"),
    (("adjacent lane", "next lane", "neighboring lane"), "ahead-adjacent-lane"),
    (("oncoming", "opposite direction", "opposing lane", "head-on"), "oncoming"),
    (("left",), "crossing-left"),
    (("right",), "crossing-right"),
    (("same lane", "ego lane", "ahead", "in front"), "ahead-same-lane"),
)

_BEHAVIOR_RULES = (
    (("steps out", "steps into", "darts", "emerges", "sudden"), "sudden-emergence"),
    (("runs the red", "red light", "running the light"), "red-light-run"),
    (("cuts in", "cut in", "cuts into", "merges"), "cut-in"),
    (("brakes", "brake hard", "slams"), "hard-brake"),
    (("drifts", "drift"), "oncoming-drift"),
    (("turns left", "left turn"), "left-turn-across"),
    (("crosses", "crossing", "walks across"), "crossing"),
    (("stationary", "remains still", "blocking", "stopped"), "stationary"),
)

_LIGHT_RULES = (
    (("no signal", "no traffic signal", "none", "unsignalized"), "none"),
    (("red",), "red"),
    (("amber", "yellow"), "yellow"),
    (("green",), "green"),
)

_NUMBER_RE = re.compile(r"(\d+(?:\.\d+)?)\s*(?:m\b|meter|metre)")


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


def _first_number(text: str) -> Optional[float]:
    m = _NUMBER_RE.search(text)
    return float(m.group(1)) if m else None


def _match_rules(text: str, rules) -> Optional[str]:
    for keywords, value in rules:
        if any(kw in text for kw in keywords):
            return value
    return None


def _match_synonyms(text: str, table: dict) -> Optional[str]:
    # Longest keys first so "t junction" wins over "junction".
    for key in sorted(table, key=len, reverse=True):
        if re.search(rf"\b{re.escape(key)}\b", text):
            return table[key]
    return None


def parse_semantics(t: SemanticTuple) -> ParsedSemantics:
    """Map the five free-text slots onto closed vocabularies.

    Unmappable agent class or road type raises ParseError with the nearest
    vocabulary entries; position and behavior fall back to documented
    defaults (ahead-same-lane, crossing) when nothing matches.
    """
    c_text = _normalize(t.phi_c)
    agent_class = _match_synonyms(c_text, CLASS_SYNONYMS)
    if agent_class is None:
        near = difflib.get_close_matches(c_text, CLASS_SYNONYMS.keys(), n=3, cutoff=0.0)
        raise ParseError(f"cannot map agent class {t.phi_c!r}; nearest: {', '.join(near)}",
                         suggestions=near)

    r_text = _normalize(t.phi_r)
    road_type = _match_synonyms(r_text, ROAD_SYNONYMS)
    if road_type is None:
        near = difflib.get_close_matches(r_text, ROAD_SYNONYMS.keys(), n=3, cutoff=0.0)
        raise ParseError(f"cannot map road type {t.phi_r!r}; nearest: {', '.join(near)}",
                         suggestions=near)

    p_text = _normalize(t.phi_p)
    placement = _match_rules(p_text, _PLACEMENT_RULES) or "ahead-same-lane"
    offset = _first_number(p_text)
    if offset is None:
        offset = DEFAULT_OFFSET

    b_text = _normalize(t.phi_b)
    behavior = _match_rules(b_text, _BEHAVIOR_RULES) or "crossing"
    trigger = _first_number(b_text)
    if trigger is None:
        trigger = DEFAULT_TRIGGER

    light = _match_rules(_normalize(t.phi_l), _LIGHT_RULES) or "none"
    return ParsedSemantics(agent_class=agent_class, placement=placement, offset=offset,
                           behavior=behavior, road_type=road_type, light_state=light,
                           trigger=trigger)


def _template_semantics(retrieved: Sequence[KnowledgeEntry], seed: int) -> SemanticTuple:
    typology = next((e for e in retrieved if e.source == "precrash"), None)
    if typology is None:
        raise BackendError("template backend needs a pre-crash typology among retrieved entries")
    rng = np.random.default_rng(seed)

    def pick(values, fallback):
        vals = tuple(values) or (fallback,)
        return vals[int(rng.integers(len(vals)))]

    agent_class = pick(typology.tag("classes"), "car")
    placement = pick(typology.tag("placements"), "ahead-same-lane")
    behavior = pick(typology.tag("behaviors"), "crossing")
    road = pick(typology.tag("road_types"), "straight")
    light = pick(typology.tag("lights"), "none")
    offset = int(rng.integers(18, 33))
    trigger = int(rng.integers(9, 18))
    phi_c = pick(_CLASS_PHRASES[agent_class], agent_class)
    return SemanticTuple(
        phi_c=phi_c,
        phi_p=_PLACEMENT_PHRASES[placement].format(d=offset),
        phi_b=_BEHAVIOR_PHRASES[behavior].format(g=trigger),
        phi_r=_ROAD_PHRASES[road],
        phi_l=_LIGHT_PHRASES[light],
    )


_SLOT_RE = {
    "C": re.compile(r"^\s*C\s*:\s*(.+)$", re.MULTILINE),
    "P": re.compile(r"^\s*P\s*:\s*(.+)$", re.MULTILINE),
    "B": re.compile(r"^\s*B\s*:\s*(.+)$", re.MULTILINE),
    "R": re.compile(r"^\s*R\s*:\s*(.+)$", re.MULTILINE),
    "L": re.compile(r"^\s*L\s*:\s*(.+)$", re.MULTILINE),
}


def _extract_slots(reply: str) -> SemanticTuple:
    values = {}
    for name, pattern in _SLOT_RE.items():
        m = pattern.search(reply)
        if m is None:
            raise ParseError(f"backend reply is missing slot {name}:")
        values[name] = m.group(1).strip()
    return SemanticTuple(phi_c=values["C"], phi_p=values["P"], phi_b=values["B"],
                         phi_r=values["R"], phi_l=values["L"])


def _remote_semantics(base_prompt: str, retrieved: Sequence[KnowledgeEntry],
                      backend: GeneratorBackend) -> SemanticTuple:
    import requests

    context = "\n".join(f"{i + 1}. [{e.source}/{e.id}] {e.text}"
                        for i, e in enumerate(retrieved))
    body = {
        "model": backend.model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": INSTRUCTION_PROMPT},
            {"role": "user", "content": f"{base_prompt}\n\nContext:\n{context}"},
        ],
    }
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(AUTH_ENV_VAR)
    if token:
        headers["Authorization"] = f"Bearer {token}"

    last_error: Exception | None = None
    for _ in range(2):  # one retry
        try:
            resp = requests.post(backend.endpoint, json=body, headers=headers,
                                 timeout=backend.timeout)
            resp.raise_for_status()
            payload = resp.json()
            if "choices" in payload:
                reply = payload["choices"][0]["message"]["content"]
            else:
                reply = payload["content"]
            return _extract_slots(reply)
        except (ParseError, KeyError, IndexError, ValueError, OSError) as exc:
            last_error = exc
    if isinstance(last_error, ParseError):
        raise last_error
    raise BackendError(f"remote generation failed after retry: {last_error}") from last_error


def generate_semantics(base_prompt: str, retrieved: Sequence[KnowledgeEntry],
                       backend: GeneratorBackend) -> SemanticTuple:
    """Produce the five-slot tuple from retrieved knowledge."""
    if backend.mode == "template":
        if not retrieved:
            raise ValueError("template backend requires non-empty retrieved entries")
        return _template_semantics(retrieved, backend.seed)
    return _remote_semantics(base_prompt, retrieved, backend)


def instantiate_meta(parsed: ParsedSemantics, road_library: dict,
                     n_frames: int = 200, dt: float = DEFAULT_DT,
                     cruise_speed: float = 10.0,
                     max_speeds: Optional[dict] = None) -> MetaScenario:
    """Realize a parsed tuple as a concrete scenario on a road template."""
    template: Optional[RoadTemplate] = road_library.get(parsed.road_type)
    if template is None:
        raise InstantiationError(
            f"road library has no template for {parsed.road_type!r}; "
            f"available: {sorted(road_library)}")
    setup = resolve_placement(template, parsed.placement, parsed.behavior,
                              parsed.agent_class, parsed.offset)
    traj = synthesize_adversary(parsed.behavior, template, setup, parsed.agent_class,
                                n_frames=n_frames, dt=dt, cruise_speed=cruise_speed,
                                trigger_distance=parsed.trigger, max_speeds=max_speeds)
    context = template.build_context(parsed.light_state)
    route = context.route
    ego_heading = math.atan2(route[1][1] - route[0][1], route[1][0] - route[0][0])
    ego = AgentSpec(id="ego", kind="ego", agent_class="car",
                    footprint=CLASS_FOOTPRINT["car"],
                    initial_pose=(float(route[0][0]), float(route[0][1]), ego_heading),
                    behavior="lane-follow")
    p0 = traj.points[0]
    adversary = AgentSpec(id="adversary", kind="adversary", agent_class=parsed.agent_class,
                          footprint=CLASS_FOOTPRINT[parsed.agent_class],
                          initial_pose=(float(p0[0]), float(p0[1]), setup.heading),
                          behavior=parsed.behavior)
    furniture = tuple(
        (spec, Trajectory(dt=dt, points=np.tile([spec.initial_pose[0], spec.initial_pose[1]],
                                                (n_frames, 1))))
        for spec in setup.furniture)
    return MetaScenario(ego=ego, adversary=adversary, context=context,
                        adversary_trajectory=traj, furniture=furniture)


_SCENIC_CLASS = {"pedestrian": "Pedestrian", "car": "Car", "truck": "Truck",
                 "cyclist": "Bicycle", "scooter": "Motorcycle"}
_SCENIC_TOWN = {"straight": "Town01", "curve": "Town02", "intersection": "Town03",
                "t-junction": "Town04", "roundabout": "Town05"}


@lru_cache(maxsize=1)
def _scenic_template() -> str:
    return resources.files("scenweave.data").joinpath("meta_template.scenic").read_text(
        encoding="utf-8")


def emit_scenic(m: MetaScenario) -> str:
    """Fill the fixed Scenic-syntax template; the output is never executed."""
    speeds = m.adversary_trajectory.speeds()
    steps = np.linalg.norm(np.diff(m.adversary_trajectory.points, axis=0), axis=1)
    moving = np.nonzero(steps > 1e-9)[0]
    start_frame = int(moving[0]) if len(moving) else 0
    route = m.context.route
    ego_heading = math.degrees(m.ego.initial_pose[2])
    slots = {
        "town": _SCENIC_TOWN[m.context.road_type],
        "road_type": m.context.road_type,
        "light_state": m.context.light_state,
        "n_frames": m.n_frames,
        "dt": f"{m.dt:.2f}",
        "ego_x": f"{m.ego.initial_pose[0]:.2f}",
        "ego_y": f"{m.ego.initial_pose[1]:.2f}",
        "ego_heading": f"{ego_heading:.1f}",
        "goal_x": f"{route[-1][0]:.2f}",
        "goal_y": f"{route[-1][1]:.2f}",
        "adv_class": _SCENIC_CLASS[m.adversary.agent_class],
        "adv_x": f"{m.adversary.initial_pose[0]:.2f}",
        "adv_y": f"{m.adversary.initial_pose[1]:.2f}",
        "adv_heading": f"{math.degrees(m.adversary.initial_pose[2]):.1f}",
        "behavior": m.adversary.behavior,
        "adv_speed": f"{float(speeds.max()):.2f}",
        "start_frame": start_frame,
        "n_props": len(m.furniture),
    }
    return _scenic_template().format(**slots)


def meta_from_prompt(prompt: str, backend: GeneratorBackend,
                     kb: Optional[Sequence[KnowledgeEntry]] = None,
                     road_library: Optional[dict] = None,
                     n_frames: int = 200, dt: float = DEFAULT_DT,
                     retrieve_k: int = 5) -> tuple[MetaScenario, SemanticTuple]:
    """Prompt to MetaScenario: retrieve, synthesize, parse, instantiate.

    Retrieval always includes at least one pre-crash typology entry so the
    template backend has a grounded scenario skeleton to draw from.
    """
    if kb is None:
        kb = load_knowledge_base()
    if road_library is None:
        road_library = builtin_road_library()
    retrieved = [entry for entry, _ in retrieve(kb, prompt, k=retrieve_k)]
    if not any(e.source == "precrash" for e in retrieved):
        retrieved += [entry for entry, _ in retrieve(kb, prompt, k=1, source="precrash")]
    semantics = generate_semantics(prompt, retrieved, backend)
    parsed = parse_semantics(semantics)
    meta = instantiate_meta(parsed, road_library, n_frames=n_frames, dt=dt)
    return meta, semantics
