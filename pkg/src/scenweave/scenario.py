"""Scenario data model: agents, scene context, meta and adversarial scenarios.

All types are immutable after construction. ``validate_scenario`` collects
invariant violations into a report instead of raising, so malformed data can
be inspected wholesale.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .trajectory import Trajectory

AGENT_KINDS = ("ego", "adversary", "background")
AGENT_CLASSES = ("car", "truck", "pedestrian", "cyclist", "scooter")
ROAD_TYPES = ("straight", "intersection", "t-junction", "roundabout", "curve")
LIGHT_STATES = ("red", "yellow", "green", "none")
BEHAVIORS = (
    "crossing",
    "sudden-emergence",
    "red-light-run",
    "cut-in",
    "hard-brake",
    "oncoming-drift",
    "left-turn-across",
    "stationary",
    "lane-follow",
)

# Engine defaults; override per call where a function accepts `max_speeds`.
CLASS_MAX_SPEED = {
    "car": 20.0,
    "truck": 15.0,
    "pedestrian": 3.0,
    "cyclist": 8.0,
    "scooter": 8.0,
}

CLASS_FOOTPRINT = {
    "car": (4.6, 1.8),
    "truck": (8.5, 2.5),
    "pedestrian": (0.6, 0.6),
    "cyclist": (1.8, 0.6),
    "scooter": (1.8, 0.7),
}


@dataclass(frozen=True)
class AgentSpec:
    """One agent: identity, class, footprint, initial pose and behavior tag."""

    id: str
    kind: str
    agent_class: str
    footprint: tuple[float, float]
    initial_pose: tuple[float, float, float]
    behavior: str

    @property
    def length(self) -> float:
        return self.footprint[0]

    @property
    def width(self) -> float:
        return self.footprint[1]


def make_agent(id: str, kind: str, agent_class: str, pose: tuple[float, float, float],
               behavior: str = "lane-follow",
               footprint: Optional[tuple[float, float]] = None) -> AgentSpec:
    """AgentSpec with the class-default footprint unless one is given."""
    fp = footprint if footprint is not None else CLASS_FOOTPRINT[agent_class]
    return AgentSpec(id=id, kind=kind, agent_class=agent_class, footprint=fp,
                     initial_pose=pose, behavior=behavior)


def _readonly(points) -> np.ndarray:
    arr = np.array(points, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Lane:
    """Lane centerline polyline plus width; direction follows vertex order."""

    centerline: np.ndarray = field(repr=False)
    width: float = 3.5
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "centerline", _readonly(self.centerline))

    def __eq__(self, other):
        if not isinstance(other, Lane):
            return NotImplemented
        return (self.id == other.id and self.width == other.width
                and np.array_equal(self.centerline, other.centerline))


@dataclass(frozen=True)
class StopLine:
    """Stop line segment. ``on_route`` marks lines the ego route crosses."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    kind: str = "signal"  # "signal" or "sign"
    on_route: bool = False


@dataclass(frozen=True)
class SceneContext:
    """Static scene: road type, light state, lanes, stop lines and the ego route."""

    road_type: str
    light_state: str
    lanes: tuple[Lane, ...]
    stop_lines: tuple[StopLine, ...]
    route: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "route", _readonly(self.route))
        object.__setattr__(self, "lanes", tuple(self.lanes))
        object.__setattr__(self, "stop_lines", tuple(self.stop_lines))

    @property
    def goal(self) -> np.ndarray:
        return self.route[-1]

    def bounding_box(self, margin: float = 10.0) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) over all lane centerlines plus margin."""
        pts = np.vstack([lane.centerline for lane in self.lanes] + [self.route])
        return (float(pts[:, 0].min() - margin), float(pts[:, 1].min() - margin),
                float(pts[:, 0].max() + margin), float(pts[:, 1].max() + margin))

    def __eq__(self, other):
        if not isinstance(other, SceneContext):
            return NotImplemented
        return (self.road_type == other.road_type
                and self.light_state == other.light_state
                and self.lanes == other.lanes
                and self.stop_lines == other.stop_lines
                and np.array_equal(self.route, other.route))


@dataclass(frozen=True)
class MetaScenario:
    """Base scene plus exactly one scripted adversarial agent.

    ``furniture`` holds static scripted props (e.g. a parked truck that
    blocks the sight line to the adversary); they occlude and collide like
    any agent but are never candidates for trajectory perturbation.
    """

    ego: AgentSpec
    adversary: AgentSpec
    context: SceneContext
    adversary_trajectory: Trajectory
    furniture: tuple[tuple[AgentSpec, Trajectory], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "furniture", tuple(self.furniture))

    @property
    def dt(self) -> float:
        return self.adversary_trajectory.dt

    @property
    def n_frames(self) -> int:
        return len(self.adversary_trajectory)

    def with_light(self, light_state: str) -> "MetaScenario":
        return replace(self, context=replace(self.context, light_state=light_state))


@dataclass(frozen=True)
class Perturbation:
    """Record of one optimized trajectory window of a background agent."""

    agent_index: int
    keyframe: int
    window: tuple[int, int]  # half-open [a, b)
    original: np.ndarray = field(repr=False)
    optimized: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "original", _readonly(self.original))
        object.__setattr__(self, "optimized", _readonly(self.optimized))

    def __eq__(self, other):
        if not isinstance(other, Perturbation):
            return NotImplemented
        return (self.agent_index == other.agent_index
                and self.keyframe == other.keyframe
                and self.window == other.window
                and np.array_equal(self.original, other.original)
                and np.array_equal(self.optimized, other.optimized))


@dataclass(frozen=True)
class AdvScenario:
    """Meta-scenario augmented with N background agents, some perturbed."""

    meta: MetaScenario
    backgrounds: tuple[tuple[AgentSpec, Trajectory], ...]
    perturbations: tuple[Perturbation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "backgrounds", tuple(self.backgrounds))
        object.__setattr__(self, "perturbations", tuple(self.perturbations))

    @property
    def dt(self) -> float:
        return self.meta.dt

    @property
    def n_frames(self) -> int:
        return self.meta.n_frames

    def baseline_backgrounds(self) -> tuple[tuple[AgentSpec, Trajectory], ...]:
        """Backgrounds with every recorded perturbation window restored."""
        restored = []
        for i, (spec, traj) in enumerate(self.backgrounds):
            pts = np.array(traj.points)
            for rec in self.perturbations:
                if rec.agent_index == i:
                    a, b = rec.window
                    pts[a:b] = rec.original
            restored.append((spec, Trajectory(dt=traj.dt, points=pts)))
        return tuple(restored)


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate_scenario."""

    code: str
    message: str
    agent_id: Optional[str] = None
    frame: Optional[int] = None

    def __str__(self):
        loc = ""
        if self.agent_id is not None:
            loc += f" agent={self.agent_id}"
        if self.frame is not None:
            loc += f" frame={self.frame}"
        return f"[{self.code}]{loc}: {self.message}"


def _check_trajectory_values(report: list[Violation], traj: Trajectory, agent_id: str):
    bad = ~np.isfinite(traj.points)
    if bad.any():
        frame = int(np.argwhere(bad.any(axis=1))[0][0])
        report.append(Violation("finite-coordinates", "non-finite coordinate",
                                agent_id=agent_id, frame=frame))
    if len(traj) < 2:
        report.append(Violation("min-length", f"trajectory length {len(traj)} < 2",
                                agent_id=agent_id))
    if traj.dt <= 0:
        report.append(Violation("positive-dt", f"dt={traj.dt} must be > 0", agent_id=agent_id))


def _check_agent(report: list[Violation], spec: AgentSpec):
    if spec.kind not in AGENT_KINDS:
        report.append(Violation("agent-kind", f"unknown kind {spec.kind!r}", agent_id=spec.id))
    if spec.agent_class not in AGENT_CLASSES:
        report.append(Violation("agent-class", f"unknown class {spec.agent_class!r}",
                                agent_id=spec.id))
    if spec.footprint[0] <= 0 or spec.footprint[1] <= 0:
        report.append(Violation("footprint-positive", f"footprint {spec.footprint} must be > 0",
                                agent_id=spec.id))
    if spec.agent_class == "pedestrian" and (spec.footprint[0] > 1.0 or spec.footprint[1] > 1.0):
        report.append(Violation("pedestrian-footprint",
                                f"pedestrian footprint {spec.footprint} exceeds 1 m x 1 m",
                                agent_id=spec.id))


def _check_context(report: list[Violation], ctx: SceneContext):
    if ctx.road_type not in ROAD_TYPES:
        report.append(Violation("road-type", f"unknown road type {ctx.road_type!r}"))
    if ctx.light_state not in LIGHT_STATES:
        report.append(Violation("light-state", f"unknown light state {ctx.light_state!r}"))
    for lane in ctx.lanes:
        if lane.width <= 2.5:
            report.append(Violation("lane-width", f"lane {lane.id!r} width {lane.width} <= 2.5 m"))
    if ctx.light_state != "none" and not ctx.stop_lines:
        report.append(Violation("stop-lines-required",
                                f"light state {ctx.light_state!r} requires stop lines"))
    # Route must stay inside the lane corridor.
    from .geometry import project_points_to_polyline

    route = np.asarray(ctx.route, dtype=float)
    if len(route) >= 2 and ctx.lanes:
        covered = np.zeros(len(route), dtype=bool)
        for lane in ctx.lanes:
            if len(lane.centerline) >= 2:
                _, _, d = project_points_to_polyline(route, lane.centerline)
                covered |= d <= lane.width / 2 + 1e-6
        if not covered.all():
            i = int(np.argwhere(~covered)[0][0])
            report.append(Violation("route-in-corridor",
                                    f"route vertex {i} lies outside every lane corridor"))


def validate_scenario(scenario, max_speeds: Optional[dict] = None) -> list[Violation]:
    """Collect invariant violations for a MetaScenario or AdvScenario.

    Returns an empty list iff the scenario is well formed. Never raises.
    """
    max_speeds = dict(CLASS_MAX_SPEED, **(max_speeds or {}))
    report: list[Violation] = []
    if isinstance(scenario, AdvScenario):
        meta = scenario.meta
        backgrounds: Sequence[tuple[AgentSpec, Trajectory]] = scenario.backgrounds
        perturbations: Sequence[Perturbation] = scenario.perturbations
    elif isinstance(scenario, MetaScenario):
        meta, backgrounds, perturbations = scenario, (), ()
    else:
        return [Violation("scenario-type", f"cannot validate {type(scenario).__name__}")]

    agents = ([meta.ego, meta.adversary] + [spec for spec, _ in meta.furniture]
              + [spec for spec, _ in backgrounds])
    n_ego = sum(1 for a in agents if a.kind == "ego")
    n_adv = sum(1 for a in agents if a.kind == "adversary")
    if n_ego != 1:
        report.append(Violation("exactly-one-ego", f"exactly one ego required, found {n_ego}"))
    if n_adv > 1:
        report.append(Violation("at-most-one-adversary",
                                f"at most one adversary allowed, found {n_adv}"))
    seen = set()
    for spec in agents:
        if spec.id in seen:
            report.append(Violation("unique-agent-id", f"duplicate agent id {spec.id!r}",
                                    agent_id=spec.id))
        seen.add(spec.id)
        _check_agent(report, spec)
    _check_context(report, meta.context)

    trajectories = [(meta.adversary.id, meta.adversary_trajectory)]
    trajectories += [(spec.id, traj) for spec, traj in meta.furniture]
    trajectories += [(spec.id, traj) for spec, traj in backgrounds]
    dts = {traj.dt for _, traj in trajectories}
    if len(dts) > 1:
        report.append(Violation("uniform-dt", f"mixed timesteps {sorted(dts)}"))
    lengths = {len(traj) for _, traj in trajectories}
    if len(lengths) > 1:
        report.append(Violation("uniform-length", f"mixed frame counts {sorted(lengths)}"))
    for agent_id, traj in trajectories:
        _check_trajectory_values(report, traj, agent_id)

    # Adversary placement and speed limits.
    xmin, ymin, xmax, ymax = meta.context.bounding_box()
    ax, ay, _ = meta.adversary.initial_pose
    if not (xmin <= ax <= xmax and ymin <= ay <= ymax):
        report.append(Violation("adversary-in-scene",
                                f"adversary initial pose ({ax:.1f}, {ay:.1f}) outside scene bbox",
                                agent_id=meta.adversary.id))
    v_max = max_speeds.get(meta.adversary.agent_class)
    if v_max is not None and meta.adversary_trajectory.is_finite():
        speeds = meta.adversary_trajectory.speeds()
        if (speeds > v_max + 1e-6).any():
            frame = int(np.argmax(speeds > v_max + 1e-6))
            report.append(Violation("class-max-speed",
                                    f"speed {speeds[frame]:.2f} m/s exceeds {v_max} m/s for "
                                    f"{meta.adversary.agent_class}",
                                    agent_id=meta.adversary.id, frame=frame))

    # Perturbation records.
    n_frames = meta.n_frames
    for rec in perturbations:
        a, b = rec.window
        if not (0 <= a < b <= n_frames):
            report.append(Violation("window-bounds",
                                    f"window [{a}, {b}) outside [0, {n_frames})",
                                    agent_id=f"background[{rec.agent_index}]"))
            continue
        if len(rec.original) != b - a or len(rec.optimized) != b - a:
            report.append(Violation("window-length",
                                    f"segment lengths {len(rec.original)}/{len(rec.optimized)} "
                                    f"do not match window length {b - a}",
                                    agent_id=f"background[{rec.agent_index}]"))
        if not (0 <= rec.agent_index < len(backgrounds)):
            report.append(Violation("agent-index", f"background index {rec.agent_index} out of range"))
            continue
        _, traj = backgrounds[rec.agent_index]
        if len(rec.optimized) == b - a and not np.array_equal(traj.points[a:b], rec.optimized):
            report.append(Violation("window-content",
                                    "trajectory window does not match the recorded optimized segment",
                                    agent_id=f"background[{rec.agent_index}]"))
    return report
