"""Adversary placement resolution and scripted behavior synthesis.

Placement tags are resolved against a road template into a start pose, a
route-frame anchor, an optional guide polyline (for agents that follow a
lane or a turn path), and any occluding scene furniture. Behavior
synthesizers then script the adversary trajectory frame by frame against the
nominal ego schedule (cruise speed along the route from frame 0), so that
trigger-based maneuvers fire when the unimpeded ego would be a given
distance away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (heading_at_arclength, point_at_arclength, polyline_arclength,
                       project_point_to_polyline)
from .roads import LANE_W, RoadTemplate
from .scenario import CLASS_FOOTPRINT, CLASS_MAX_SPEED, AgentSpec
from .trajectory import Trajectory

DEFAULT_OFFSET = 25.0
DEFAULT_TRIGGER = 15.0

# how many seconds after the nominal ego's arrival a guided crosser
# reaches the conflict point
_GUIDED_CROSS_LAG = 1.6
# Behaviors that stage their conflict at the junction rather than mid-block.
JUNCTION_BEHAVIORS = ("red-light-run", "left-turn-across")


class InstantiationError(ValueError):
    """Raised when a placement tag cannot be realized on the chosen road."""


@dataclass(frozen=True)
class BehaviorSetup:
    """Resolved placement: where the adversary starts and what it references."""

    start: tuple[float, float]
    heading: float
    s_anchor: float          # route arclength of the conflict point
    lat0: float              # signed lateral offset from the route (left > 0)
    end_lat: float = 0.0     # lateral target for crossing motions
    guide: Optional[np.ndarray] = field(default=None, repr=False)
    guide_s0: float = 0.0
    guide_conflict_s: float = 0.0
    furniture: tuple = ()    # static AgentSpec props (e.g. an occluding truck)


def _route_frame(route: np.ndarray, s: float, lat: float) -> np.ndarray:
    """Route-frame (arclength, lateral) to scene xy, extending past the ends."""
    cum = polyline_arclength(route)
    total = float(cum[-1])
    sc = min(max(s, 0.0), total)
    base = point_at_arclength(route, sc)
    heading = heading_at_arclength(route, sc)
    direction = np.array([math.cos(heading), math.sin(heading)])
    left = np.array([-direction[1], direction[0]])
    return base + (s - sc) * direction + lat * left


def _advance_along(poly: np.ndarray, s: float) -> np.ndarray:
    """Point at arclength s on poly, extended straight beyond either end."""
    cum = polyline_arclength(poly)
    total = float(cum[-1])
    sc = min(max(s, 0.0), total)
    base = point_at_arclength(poly, sc)
    heading = heading_at_arclength(poly, sc)
    direction = np.array([math.cos(heading), math.sin(heading)])
    return base + (s - sc) * direction


def _lane_lateral(template: RoadTemplate, lane, s_anchor: float) -> float:
    """Signed lateral offset of a lane centerline at a route anchor point."""
    p = point_at_arclength(template.route, s_anchor)
    heading = heading_at_arclength(template.route, s_anchor)
    left = np.array([-math.sin(heading), math.cos(heading)])
    foot, _, _ = project_point_to_polyline(p, lane.centerline)
    return float(np.dot(foot - p, left))


def _parked_truck(template: RoadTemplate, s_anchor: float, adversary_id: str):
    """A truck parked curbside upstream of the anchor.

    Parked one lane over when the road is wide enough, hugging the verge
    otherwise. The stand-off between the truck's downstream end and the
    anchor leaves a sight gap that closes only on approach: from far back
    the truck shadows the anchor, near in the gap exposes it.
    """
    p = point_at_arclength(template.route, s_anchor)
    heading = heading_at_arclength(template.route, s_anchor)
    _, right = template.road_extent(p, heading)
    lat_truck = max(right - 1.45, -LANE_W)
    pos = _route_frame(template.route, s_anchor - 9.0, lat_truck)
    spec = AgentSpec(id=f"occluder-{adversary_id}", kind="background", agent_class="truck",
                     footprint=CLASS_FOOTPRINT["truck"],
                     initial_pose=(float(pos[0]), float(pos[1]), heading),
                     behavior="stationary")
    return spec, lat_truck


def resolve_placement(template: RoadTemplate, placement: str, behavior: str,
                      agent_class: str, offset: float,
                      adversary_id: str = "adversary") -> BehaviorSetup:
    """Resolve a placement tag to a concrete start pose on the template.

    Raises InstantiationError when the template does not support the tag.
    """
    if placement not in template.supported_placements:
        raise InstantiationError(
            f"placement {placement!r} is not supported on road {template.name!r}; "
            f"supported: {sorted(template.supported_placements)}")
    route = template.route
    cum = polyline_arclength(route)
    s_anchor = float(min(offset, cum[-1] - 1.0))
    heading_route = heading_at_arclength(route, s_anchor)

    junction_s = None
    if template.junction_center is not None:
        _, junction_s, _ = project_point_to_polyline(
            np.asarray(template.junction_center, float), route)

    if placement == "ahead-same-lane":
        start = _route_frame(route, s_anchor, 0.0)
        return BehaviorSetup(start=(float(start[0]), float(start[1])), heading=heading_route,
                             s_anchor=s_anchor, lat0=0.0)

    if placement == "ahead-adjacent-lane":
        lane = template.lane_by_role("adjacent")
        if lane is None:
            raise InstantiationError(
                f"road {template.name!r} has no adjacent lane for {placement!r}")
        lat = _lane_lateral(template, lane, s_anchor)
        start = _route_frame(route, s_anchor, lat)
        return BehaviorSetup(start=(float(start[0]), float(start[1])), heading=heading_route,
                             s_anchor=s_anchor, lat0=lat)

    if placement == "occluded-roadside":
        truck_spec, lat_truck = _parked_truck(template, s_anchor, adversary_id)
        start = _route_frame(route, s_anchor, lat_truck)
        heading = heading_route + math.pi / 2  # crossing toward the road
        return BehaviorSetup(start=(float(start[0]), float(start[1])), heading=heading,
                             s_anchor=s_anchor, lat0=lat_truck, end_lat=2.0,
                             furniture=(truck_spec,))

    if placement == "oncoming":
        lane = template.lane_by_role("oncoming")
        if lane is None:
            raise InstantiationError(f"road {template.name!r} has no oncoming lane")
        if behavior in JUNCTION_BEHAVIORS and junction_s is not None:
            s_start = junction_s + offset
            s_conflict = junction_s
        else:
            s_start, s_conflict = s_anchor, s_anchor
        lat = _lane_lateral(template, lane, min(s_start, float(cum[-1])))
        start = _route_frame(route, s_start, lat)
        g0 = project_point_to_polyline(start, lane.centerline)[1]
        junction = (np.asarray(template.junction_center, float)
                    if template.junction_center is not None
                    else point_at_arclength(route, s_conflict))
        g_conflict = project_point_to_polyline(junction, lane.centerline)[1]
        return BehaviorSetup(start=(float(start[0]), float(start[1])),
                             heading=heading_at_arclength(lane.centerline, g0),
                             s_anchor=s_conflict, lat0=lat,
                             guide=np.asarray(lane.centerline, float),
                             guide_s0=g0, guide_conflict_s=g_conflict)

    if placement in ("crossing-left", "crossing-right"):
        role = "cross-from-left" if placement == "crossing-left" else "cross-from-right"
        lane = template.lane_by_role(role)
        rides_lane = agent_class in ("car", "truck", "cyclist", "scooter")
        if lane is not None and rides_lane and junction_s is not None:
            junction = np.asarray(template.junction_center, float)
            g_conflict = project_point_to_polyline(junction, lane.centerline)[1]
            g0 = max(0.0, g_conflict - offset)
            start = point_at_arclength(lane.centerline, g0)
            return BehaviorSetup(start=(float(start[0]), float(start[1])),
                                 heading=heading_at_arclength(lane.centerline, g0),
                                 s_anchor=junction_s, lat0=_lane_lateral(template, lane, junction_s),
                                 guide=np.asarray(lane.centerline, float),
                                 guide_s0=g0, guide_conflict_s=g_conflict)
        # No usable cross lane: enter from the roadside (driveway/kerb).
        p = point_at_arclength(route, s_anchor)
        left_ext, right_ext = template.road_extent(p, heading_route)
        if placement == "crossing-left":
            lat0, end_lat, heading = left_ext + 1.0, -2.0, heading_route - math.pi / 2
        else:
            lat0, end_lat, heading = right_ext - 1.0, 2.0, heading_route + math.pi / 2
        start = _route_frame(route, s_anchor, lat0)
        return BehaviorSetup(start=(float(start[0]), float(start[1])), heading=heading,
                             s_anchor=s_anchor, lat0=lat0, end_lat=end_lat)

    raise InstantiationError(f"unknown placement tag {placement!r}")


def _left_turn_guide(template: RoadTemplate, setup: BehaviorSetup) -> np.ndarray:
    """Turn path: oncoming approach, quadratic blend across the route, exit."""
    out_lane = (template.lane_by_role("stem-out") or template.lane_by_role("cross-from-left"))
    if setup.guide is None or out_lane is None or template.junction_center is None:
        return setup.guide if setup.guide is not None else np.array([setup.start, setup.start])
    cx, cy = template.junction_center
    approach_end = _advance_along(setup.guide, setup.guide_conflict_s - 8.0)
    exit_lat = float(out_lane.centerline[0][0])
    p0 = approach_end
    p1 = np.array([exit_lat, approach_end[1]])
    p2 = np.array([exit_lat, cy - 8.0])
    t = np.linspace(0.0, 1.0, 12)[:, None]
    bend = (1 - t) ** 2 * p0 + 2 * t * (1 - t) * p1 + t ** 2 * p2
    tail = np.array([[exit_lat, cy - 40.0]])
    head = np.array([_advance_along(setup.guide, setup.guide_s0)])
    return np.vstack([head, bend, tail])


def synthesize_adversary(behavior: str, template: RoadTemplate, setup: BehaviorSetup,
                         agent_class: str, n_frames: int, dt: float,
                         cruise_speed: float = 10.0,
                         trigger_distance: float = DEFAULT_TRIGGER,
                         max_speeds: Optional[dict] = None) -> Trajectory:
    """Script the adversary trajectory for one behavior tag."""
    max_speeds = dict(CLASS_MAX_SPEED, **(max_speeds or {}))
    v_max = max_speeds[agent_class]
    route = template.route
    t_grid = np.arange(n_frames) * dt
    t_conflict = max(setup.s_anchor / cruise_speed, 1e-6)

    if behavior == "stationary":
        pts = np.tile(np.asarray(setup.start, float), (n_frames, 1))
        return Trajectory(dt=dt, points=pts)

    if behavior in ("crossing", "sudden-emergence") and setup.guide is None:
        # Emergence darts to the route centerline and freezes there;
        # plain crossing walks through to the far side.
        target_lat = 0.0 if behavior == "sudden-emergence" else setup.end_lat
        span = target_lat - setup.lat0
        if behavior == "sudden-emergence":
            v = v_max
            t_start = max(0.0, (setup.s_anchor - trigger_distance) / cruise_speed)
        else:
            v = min(max(abs(setup.lat0) / t_conflict, 0.8), v_max)
            t_start = 0.0
        moved = np.clip((t_grid - t_start) * v, 0.0, abs(span))
        lat = setup.lat0 + np.sign(span) * moved
        pts = np.array([_route_frame(route, setup.s_anchor, la) for la in lat])
        return Trajectory(dt=dt, points=pts)

    if behavior in ("crossing", "red-light-run", "sudden-emergence") and setup.guide is not None:
        dist = setup.guide_conflict_s - setup.guide_s0
        if behavior == "sudden-emergence":
            v = v_max
            t_start = max(0.0, (setup.s_anchor - trigger_distance) / cruise_speed)
        else:
            # A plain crosser enters the box a beat after the nominal ego
            # would clear it, so only a delayed ego meets it; a runner aims
            # straight for the nominal arrival.
            lag = _GUIDED_CROSS_LAG if behavior == "crossing" else 0.0
            v = min(max(dist / (t_conflict + lag), 2.0), v_max)
            t_start = 0.0
        s = setup.guide_s0 + v * np.maximum(t_grid - t_start, 0.0)
        pts = np.array([_advance_along(setup.guide, si) for si in s])
        return Trajectory(dt=dt, points=pts)

    if behavior == "left-turn-across":
        guide = _left_turn_guide(template, setup)
        cum = polyline_arclength(guide)
        # Arrive at the route crossing when the nominal ego does. The
        # crossing is the guide vertex nearest the route.
        anchor = point_at_arclength(route, setup.s_anchor)
        i = int(np.argmin(np.linalg.norm(guide - anchor[None, :], axis=1)))
        dist_conflict = max(float(cum[i]), 1.0)
        v = min(max(dist_conflict / t_conflict, 2.0), v_max)
        s = v * t_grid
        pts = np.array([_advance_along(guide, si) for si in s])
        return Trajectory(dt=dt, points=pts)

    if behavior == "cut-in":
        v0 = min(0.8 * cruise_speed, v_max)
        v_end, decel, blend_t = 0.5 * cruise_speed, 3.0, 1.5
        s = setup.s_anchor
        v = v0
        t_cut = None
        rows = []
        for t in t_grid:
            if t_cut is None and s - cruise_speed * t <= trigger_distance:
                t_cut = t
            if t_cut is not None:
                v = max(v_end, v - decel * dt)
                frac = min((t - t_cut) / blend_t, 1.0)
                lat = setup.lat0 * (1.0 - (3 * frac ** 2 - 2 * frac ** 3))
            else:
                lat = setup.lat0
            rows.append(_route_frame(route, s, lat))
            s += v * dt
        return Trajectory(dt=dt, points=np.array(rows))

    if behavior == "hard-brake":
        v0 = min(cruise_speed, v_max)
        t_brake = max(0.0, (setup.s_anchor - trigger_distance) / cruise_speed)
        s, v, rows = setup.s_anchor, v0, []
        for t in t_grid:
            rows.append(_route_frame(route, s, 0.0))
            if t >= t_brake:
                v = max(0.0, v - 7.0 * dt)
            s += v * dt
        return Trajectory(dt=dt, points=np.array(rows))

    if behavior == "oncoming-drift":
        v = min(0.8 * cruise_speed, v_max)
        drift_t, drift_range = 2.0, 40.0
        s, t_drift, rows = setup.s_anchor, None, []
        for t in t_grid:
            if t_drift is None and s - cruise_speed * t < drift_range:
                t_drift = t
            if t_drift is not None:
                frac = min((t - t_drift) / drift_t, 1.0)
                lat = setup.lat0 * (1.0 - frac)
            else:
                lat = setup.lat0
            rows.append(_route_frame(route, s, lat))
            s -= v * dt
        return Trajectory(dt=dt, points=np.array(rows))

    raise InstantiationError(f"unknown behavior tag {behavior!r}")
