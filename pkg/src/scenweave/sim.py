"""Closed-loop 2D kinematic replay: scripted agents, baseline traffic flow,
an occlusion-aware scripted ego policy, collision and rule-event logging.

The ego is a transparent stand-in policy, not a learned agent: it tracks the
route by pure pursuit at cruise speed and brakes hard when a perceived agent
is predicted (constant velocity) to enter its corridor within the TTC
horizon. Perception is range + field-of-view + line-of-sight; detection is
acted on only after a fixed reaction delay. This makes occlusion-induced
failures analyzable with a plain stopping-distance model.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (OrientedRect, heading_at_arclength, point_at_arclength,
                       polyline_arclength, project_point_to_polyline,
                       project_points_to_polyline, rects_overlap,
                       segment_crossing_frame, segments_intersect_rects)
from .scenario import CLASS_FOOTPRINT, AdvScenario, AgentSpec, SceneContext, make_agent
from .trajectory import DEFAULT_DT, Trajectory

T_MAX = 600
STAGES = ("benign", "meta", "adversarial")

# car-following constants for the baseline flow
_CAR_LEN, _CAR_WID = CLASS_FOOTPRINT["car"]
_MIN_GAP = 5.0     # spawn spacing (bumper to bumper)
_HEADWAY = 1.5
_FLOW_ACC = 2.0
_FLOW_BRK = 3.0
_END_MARGIN = 8.0
_ROUTE_CLEARANCE = 1.9  # lanes closer than this to the route carry no flow


@dataclass(frozen=True)
class EgoPolicyConfig:
    cruise_speed: float = 10.0
    max_brake: float = 6.0
    reaction_delay: float = 0.3
    detection_range: float = 50.0
    fov: float = math.pi
    lookahead: float = 6.0
    accel: float = 2.0
    max_yaw_rate: float = 1.2
    ttc_horizon: float = 2.5
    corridor_halfwidth: float = 1.6

    def __post_init__(self):
        for name in ("cruise_speed", "max_brake", "reaction_delay", "detection_range",
                     "fov", "lookahead", "accel", "max_yaw_rate", "ttc_horizon",
                     "corridor_halfwidth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CollisionEvent:
    frame: int
    agent_id: str
    point: tuple[float, float]


@dataclass(frozen=True)
class RuleEvent:
    frame: int
    kind: str  # red-light | stop-sign | lane-invasion | off-road


@dataclass(frozen=True)
class RolloutLog:
    """Per-frame ego states (x, y, heading, speed, accel, yaw_rate) plus events."""

    dt: float
    states: np.ndarray
    adversary_visible: np.ndarray
    collisions: tuple[CollisionEvent, ...]
    rule_events: tuple[RuleEvent, ...]
    termination: str  # goal | collision | timeout

    @property
    def n_frames(self) -> int:
        return len(self.states)


def line_of_sight_occluded(eye, target, obstacles) -> bool:
    """True iff the open segment from eye to target crosses any obstacle."""
    eye = np.asarray(eye, dtype=float)
    target = np.asarray(target, dtype=float)
    if np.allclose(eye, target):
        raise ValueError("eye and target coincide")
    if not obstacles:
        return False
    return bool(segments_intersect_rects(eye, target[None, :], list(obstacles))[0])


def _stop_line_arclength(centerline: np.ndarray, p1, p2) -> float | None:
    """Arc length where the centerline crosses the segment p1-p2, else None."""
    idx = segment_crossing_frame(centerline, np.asarray(p1, float), np.asarray(p2, float))
    if idx is None:
        return None
    cum = polyline_arclength(centerline)
    # refine within the crossing segment
    a, b = centerline[idx], centerline[idx + 1]
    d = np.asarray(p2, float) - np.asarray(p1, float)
    e = b - a
    denom = d[0] * e[1] - d[1] * e[0]
    if abs(denom) < 1e-15:
        return float(cum[idx])
    r = a - np.asarray(p1, float)
    v = (r[0] * d[1] - r[1] * d[0]) / denom
    return float(cum[idx] + np.clip(v, 0.0, 1.0) * np.linalg.norm(e))


def _flow_lane_caps(context: SceneContext, obstacles=()):
    """(lane, max center arc length) pairs eligible to host open-loop flow.

    Flow queues behind anything blocking its lane: scripted agents whose
    spawn box intrudes on the centerline path, stop signs, and signals
    showing red for that lane. The light state models the ego's protected
    phase: lanes crossed by the route's own stop line move with the ego,
    every other signalled approach (cross streets and the opposing
    left-turn-yielding direction) holds while it is green. A lane
    qualifies only if the span reachable below its cap keeps clear of the
    ego route, so queued cross traffic is eligible while anything free to
    enter the route corridor is not.
    """
    light = context.light_state
    out = []
    for lane in context.lanes:
        length = float(polyline_arclength(lane.centerline)[-1])
        cap = length - _END_MARGIN
        for sl in context.stop_lines:
            s_cross = _stop_line_arclength(lane.centerline, sl.p1, sl.p2)
            if s_cross is None:
                continue
            if sl.kind == "sign":
                halted = True
            elif sl.on_route:
                halted = light == "red"
            else:
                halted = light == "green"
            if halted:
                cap = min(cap, s_cross - 1.0 - _CAR_LEN / 2.0)
        for spec, traj in obstacles:
            center = np.asarray(traj.points[0], dtype=float)
            _, s_obs, dist = project_point_to_polyline(center, lane.centerline)
            lateral_free = float(dist) - spec.footprint[1] / 2.0
            if lateral_free < _CAR_WID / 2.0 + 0.4 and s_obs > 0.0:
                cap = min(cap, float(s_obs) - spec.footprint[0] / 2.0
                          - _MIN_GAP - _CAR_LEN / 2.0)
        if cap - _CAR_LEN / 2.0 <= _END_MARGIN:
            continue
        reach = np.linspace(0.0, cap + _CAR_LEN / 2.0, 64)
        swept = np.array([point_at_arclength(lane.centerline, s) for s in reach])
        _, _, dist = project_points_to_polyline(swept, context.route)
        if float(dist.min()) <= _ROUTE_CLEARANCE:
            continue
        out.append((lane, cap))
    return out


def generate_background_flow(context: SceneContext, n: int, seed: int,
                             n_frames: int = 200, dt: float = DEFAULT_DT,
                             obstacles=(),
                             ) -> list[tuple[AgentSpec, Trajectory]]:
    """Seeded car-following flow recorded open loop.

    Vehicles hold a 5 m minimum bumper gap with a 1.5 s time headway and
    brake smoothly toward their lane's cap: the lane end, a red-facing stop
    line, or clear of anything in ``obstacles`` (scripted (spec, trajectory)
    pairs, e.g. parked furniture or the adversary spawn) blocking the lane.
    Same seed, same trajectories.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    lane_caps = _flow_lane_caps(context, obstacles)
    lanes = [lane for lane, _ in lane_caps]
    caps = {lane.id: cap for lane, cap in lane_caps}
    slot = _CAR_LEN + _MIN_GAP
    capacity = 0
    usable = {}
    for lane in lanes:
        usable[lane.id] = max(caps[lane.id] - _CAR_LEN / 2.0 - _END_MARGIN, 0.0)
        capacity += int((usable[lane.id] + _MIN_GAP) // slot)
    if n > capacity:
        raise ValueError(
            f"cannot spawn {n} flow vehicles: lane capacity at minimum gap is {capacity}")

    rng = np.random.default_rng(seed)
    counts = {lane.id: 0 for lane in lanes}
    order = []
    for i in range(n):
        lane = lanes[i % len(lanes)]
        # skip over lanes already at capacity
        probed = 0
        while counts[lane.id] + 1 > int((usable[lane.id] + _MIN_GAP) // slot):
            probed += 1
            lane = lanes[(i + probed) % len(lanes)]
        counts[lane.id] += 1
        order.append(lane)

    out = []
    vehicle_idx = 0
    for lane in lanes:
        m = counts[lane.id]
        if m == 0:
            continue
        slack = usable[lane.id] - m * _CAR_LEN - (m - 1) * _MIN_GAP
        shares = rng.random(m + 1)
        shares = shares / shares.sum() * slack
        desired = rng.uniform(6.0, 12.0, size=m)
        # rear-to-front center positions along the lane
        s = np.empty(m)
        cursor = _END_MARGIN
        for j in range(m):
            cursor += shares[j]
            s[j] = cursor + _CAR_LEN / 2.0
            cursor += _CAR_LEN + _MIN_GAP
        v = np.empty(m)
        stop_at = caps[lane.id]
        for j in range(m):
            v[j] = min(desired[j], _speed_cap(s[j], stop_at))
            if j < m - 1:
                gap = s[j + 1] - s[j] - _CAR_LEN
                v[j] = min(v[j], max(gap - _MIN_GAP, 0.0) / _HEADWAY)
        s0 = s.copy()

        points = np.empty((m, n_frames, 2))
        for t in range(n_frames):
            for j in range(m):
                points[j, t] = point_at_arclength(lane.centerline, s[j])
            cmd = np.empty(m)
            for j in range(m):
                c = min(desired[j], _speed_cap(s[j], stop_at))
                if j < m - 1:
                    gap = s[j + 1] - s[j] - _CAR_LEN
                    c = min(c, max(gap - _MIN_GAP, 0.0) / _HEADWAY)
                cmd[j] = c
            accel = np.clip((cmd - v) / dt, -_FLOW_BRK, _FLOW_ACC)
            v = np.maximum(v + accel * dt, 0.0)
            s = s + v * dt

        for j in range(m):
            start_heading = heading_at_arclength(lane.centerline, float(s0[j]))
            heading = _headings_for(points[j], fallback=start_heading)
            spec = make_agent(id=f"flow-{vehicle_idx}", kind="background",
                              agent_class="car",
                              pose=(points[j, 0, 0], points[j, 0, 1], heading[0]))
            out.append((spec, Trajectory(dt=dt, points=points[j])))
            vehicle_idx += 1
    return out


def _speed_cap(s: float, stop_at: float) -> float:
    """Comfortable-stop speed bound approaching the lane end."""
    remaining = max(stop_at - s, 0.0)
    return math.sqrt(2.0 * 2.5 * remaining)


def _headings_for(points: np.ndarray, fallback: float) -> np.ndarray:
    """Per-frame headings from motion; stationary frames hold the last value."""
    d = np.diff(points, axis=0)
    h = np.empty(len(points))
    prev = fallback
    for t in range(len(points) - 1):
        if np.hypot(d[t, 0], d[t, 1]) > 1e-6:
            prev = math.atan2(d[t, 1], d[t, 0])
        h[t] = prev
    h[-1] = prev
    return h


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


class _Scripted:
    """Precomputed pose track for one scripted agent."""

    def __init__(self, spec: AgentSpec, traj: Trajectory):
        self.spec = spec
        self.points = np.asarray(traj.points, dtype=float)
        self.headings = _headings_for(self.points, fallback=spec.initial_pose[2])
        self.n = len(self.points)
        self.length, self.width = spec.footprint
        self.dt = traj.dt

    def pose(self, frame: int):
        i = min(frame, self.n - 1)
        return self.points[i], self.headings[i]

    def velocity(self, frame: int) -> np.ndarray:
        if frame >= self.n:
            return np.zeros(2)  # frozen after the scripted horizon
        i = max(min(frame, self.n - 1), 1)
        return (self.points[i] - self.points[i - 1]) / self.dt

    def rect(self, frame: int) -> OrientedRect:
        p, h = self.pose(frame)
        return OrientedRect(cx=float(p[0]), cy=float(p[1]), heading=float(h),
                            length=self.length, width=self.width)


def _stage_agents(s: AdvScenario, stage: str) -> list[_Scripted]:
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    meta = s.meta
    agents = [_Scripted(spec, traj) for spec, traj in meta.furniture]
    backgrounds = s.backgrounds if stage == "adversarial" else s.baseline_backgrounds()
    agents += [_Scripted(spec, traj) for spec, traj in backgrounds]
    if stage != "benign":
        agents.append(_Scripted(meta.adversary, meta.adversary_trajectory))
    return agents


def simulate_closed_loop(s: AdvScenario, p: EgoPolicyConfig = EgoPolicyConfig(),
                         stage: str = "adversarial", t_max: int = T_MAX) -> RolloutLog:
    """Replay the scenario frame by frame against the scripted ego policy."""
    meta = s.meta
    dt = meta.dt
    delay_frames = p.reaction_delay / dt
    if abs(delay_frames - round(delay_frames)) > 1e-9:
        raise ValueError(f"reaction_delay {p.reaction_delay} is not a multiple of dt {dt}")
    delay_frames = int(round(delay_frames))

    agents = _stage_agents(s, stage)
    adversary_idx = None
    for i, a in enumerate(agents):
        if a.spec.kind == "adversary":
            adversary_idx = i

    route = meta.context.route
    route_len = float(polyline_arclength(route)[-1])
    ego_len, ego_wid = meta.ego.footprint
    x, y, heading = meta.ego.initial_pose
    speed = p.cruise_speed

    states = []
    visible_flags = []
    first_seen: dict[int, int] = {}
    collisions: list[CollisionEvent] = []
    termination = "timeout"
    accel_applied = 0.0
    yaw_applied = 0.0

    for frame in range(t_max):
        pos = np.array([x, y])
        states.append((x, y, heading, speed, accel_applied, yaw_applied))

        rects = [a.rect(frame) for a in agents]
        eye = pos + np.array([math.cos(heading), math.sin(heading)]) * (ego_len / 2.0)

        perceived = []
        adversary_seen = False
        for i, a in enumerate(agents):
            center, _ = a.pose(frame)
            off = center - eye
            dist = float(np.hypot(off[0], off[1]))
            if dist > p.detection_range:
                continue
            if dist > 1e-9 and abs(_wrap_angle(math.atan2(off[1], off[0]) - heading)) > p.fov / 2.0:
                continue
            others = [rects[j] for j in range(len(rects)) if j != i]
            corners = rects[i].corners()
            seen = False
            for corner in corners:
                if not line_of_sight_occluded(eye, corner, others):
                    seen = True
                    break
            if not seen:
                continue
            if i not in first_seen:
                first_seen[i] = frame
            perceived.append(i)
            if i == adversary_idx:
                adversary_seen = True
        visible_flags.append(adversary_seen)

        hit = None
        ego_rect = OrientedRect(cx=x, cy=y, heading=heading, length=ego_len, width=ego_wid)
        for i, a in enumerate(agents):
            center, _ = a.pose(frame)
            if np.hypot(center[0] - x, center[1] - y) > 12.0:
                continue
            if rects_overlap(ego_rect, rects[i]):
                hit = i
                break
        if hit is not None:
            center, _ = agents[hit].pose(frame)
            point = ((x + float(center[0])) / 2.0, (y + float(center[1])) / 2.0)
            collisions.append(CollisionEvent(frame=frame, agent_id=agents[hit].spec.id,
                                             point=point))
            termination = "collision"
            break

        _, s_proj, _ = project_point_to_polyline(pos, route)
        if s_proj >= route_len - 1e-6:
            termination = "goal"
            break

        brake = False
        ego_vel = speed * np.array([math.cos(heading), math.sin(heading)])
        ahead = np.array([math.cos(heading), math.sin(heading)])
        left = np.array([-ahead[1], ahead[0]])
        for i in perceived:
            if frame - first_seen[i] < delay_frames:
                continue
            a = agents[i]
            center, _ = a.pose(frame)
            rel = center - pos
            rel_v = a.velocity(frame) - ego_vel
            half_len = a.length / 2.0
            half_wid = a.width / 2.0
            lon_lo = -(ego_len / 2.0 + half_len)
            lon_hi = ego_len / 2.0 + half_len + 1.0
            lat_lim = p.corridor_halfwidth + half_wid
            for tk in np.linspace(0.0, p.ttc_horizon, 26):
                q = rel + rel_v * tk
                lon = float(q @ ahead)
                lat = float(q @ left)
                if lon_lo <= lon <= lon_hi and abs(lat) <= lat_lim:
                    brake = True
                    break
            if brake:
                break

        if brake:
            a_cmd = -p.max_brake
        else:
            a_cmd = min(max((p.cruise_speed - speed) / dt, -p.max_brake), p.accel)
        new_speed = min(max(speed + a_cmd * dt, 0.0), p.cruise_speed)
        accel_applied = (new_speed - speed) / dt
        speed = new_speed

        target = point_at_arclength(route, s_proj + p.lookahead)
        alpha = _wrap_angle(math.atan2(target[1] - y, target[0] - x) - heading)
        curvature = 2.0 * math.sin(alpha) / p.lookahead
        yaw_applied = min(max(speed * curvature, -p.max_yaw_rate), p.max_yaw_rate)
        heading = _wrap_angle(heading + yaw_applied * dt)
        x += speed * math.cos(heading) * dt
        y += speed * math.sin(heading) * dt

    state_arr = np.array(states, dtype=float)
    rule_events = _detect_rule_events(state_arr, meta.context, dt)
    return RolloutLog(dt=dt, states=state_arr,
                      adversary_visible=np.array(visible_flags, dtype=bool),
                      collisions=tuple(collisions), rule_events=tuple(rule_events),
                      termination=termination)


def _detect_rule_events(states: np.ndarray, context: SceneContext, dt: float):
    events = []
    path = states[:, :2]
    speeds = states[:, 3]
    if len(path) < 2:
        return events

    for line in context.stop_lines:
        if not line.on_route:
            continue
        frame = segment_crossing_frame(path, np.array(line.p1), np.array(line.p2))
        if frame is None:
            continue
        if line.kind == "signal" and context.light_state == "red":
            events.append(RuleEvent(frame=frame, kind="red-light"))
        elif line.kind == "sign":
            lo = max(frame - int(round(3.0 / dt)), 0)
            if not (speeds[lo:frame + 1] < 0.2).any():
                events.append(RuleEvent(frame=frame, kind="stop-sign"))

    _, _, dev = project_points_to_polyline(path, context.route)
    half = _route_lane_halfwidth(context)
    inside = dev <= half
    for t in range(1, len(path)):
        if inside[t - 1] and not inside[t]:
            events.append(RuleEvent(frame=t, kind="lane-invasion"))

    excess = offroad_excess(path, context)
    onroad = excess <= 1e-6
    for t in range(1, len(path)):
        if onroad[t - 1] and not onroad[t]:
            events.append(RuleEvent(frame=t, kind="off-road"))

    events.sort(key=lambda e: (e.frame, e.kind))
    return events


def _route_lane_halfwidth(context: SceneContext) -> float:
    """Half-width of the lane the route follows (nearest lane to the route)."""
    best_w, best_d = 3.5, np.inf
    for lane in context.lanes:
        _, _, dist = project_points_to_polyline(context.route, lane.centerline)
        d = float(dist.mean())
        if d < best_d:
            best_d, best_w = d, lane.width
    return best_w / 2.0


def offroad_excess(points: np.ndarray, context: SceneContext) -> np.ndarray:
    """Per-point lateral distance beyond the nearest lane corridor (0 on road)."""
    points = np.asarray(points, dtype=float)
    excess = np.full(len(points), np.inf)
    for lane in context.lanes:
        _, _, dist = project_points_to_polyline(points, lane.centerline)
        excess = np.minimum(excess, np.maximum(dist - lane.width / 2.0, 0.0))
    return excess


def rollout_to_csv(log: RolloutLog) -> str:
    """Per-frame CSV: frame,x,y,speed,accel,yaw_rate,visible."""
    buf = io.StringIO()
    buf.write("frame,x,y,speed,accel,yaw_rate,visible\n")
    for t, row in enumerate(log.states):
        vis = int(bool(log.adversary_visible[t])) if t < len(log.adversary_visible) else 0
        buf.write(f"{t},{row[0]:.6f},{row[1]:.6f},{row[3]:.6f},"
                  f"{row[4]:.6f},{row[5]:.6f},{vis}\n")
    return buf.getvalue()


def rollout_to_text(log: RolloutLog) -> str:
    lines = [f"termination: {log.termination}",
             f"frames: {log.n_frames}",
             f"collisions: {len(log.collisions)}"]
    for c in log.collisions:
        lines.append(f"  frame {c.frame}: hit {c.agent_id} at "
                     f"({c.point[0]:.2f}, {c.point[1]:.2f})")
    lines.append(f"rule_events: {len(log.rule_events)}")
    for e in log.rule_events:
        lines.append(f"  frame {e.frame}: {e.kind}")
    return "\n".join(lines) + "\n"
