"""Built-in road template library.

Each template fixes lane geometry (scene-local meters, ego route starting at
the origin heading +x), lane roles used for agent placement and traffic
spawning, stop-line geometry per light state, and the set of adversary
placement tags the layout can realize.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .geometry import project_point_to_polyline
from .scenario import Lane, SceneContext, StopLine

PLACEMENTS = ("ahead-same-lane", "ahead-adjacent-lane", "occluded-roadside",
              "oncoming", "crossing-left", "crossing-right")

LANE_W = 3.5


@dataclass(frozen=True)
class RoadTemplate:
    """One road layout: lanes with roles, ego route, stop lines, feasibility."""

    name: str
    lanes: tuple[Lane, ...]
    roles: dict = field(repr=False)  # lane id -> role
    route: np.ndarray = field(repr=False)
    supported_placements: frozenset
    signal_stop_lines: tuple[StopLine, ...] = ()
    plain_stop_lines: tuple[StopLine, ...] = ()
    junction_center: Optional[tuple[float, float]] = None

    def build_context(self, light_state: str) -> SceneContext:
        stop_lines = self.plain_stop_lines if light_state == "none" else self.signal_stop_lines
        return SceneContext(road_type=self.name, light_state=light_state,
                            lanes=self.lanes, stop_lines=stop_lines, route=self.route)

    def lane_by_role(self, role: str) -> Optional[Lane]:
        for lane in self.lanes:
            if self.roles.get(lane.id) == role:
                return lane
        return None

    def lane_by_id(self, lane_id: str) -> Optional[Lane]:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        return None

    def road_extent(self, point, heading: float) -> tuple[float, float]:
        """Signed lateral extent (left >= 0, right <= 0) of pavement near point.

        Lateral is measured along the left normal of `heading`; each lane
        contributes [center - w/2, center + w/2]. Lanes whose nearest
        centerline point is far away (> 30 m) are ignored so crossing roads
        do not widen the local profile.
        """
        p = np.asarray(point, dtype=float)
        left_n = np.array([-np.sin(heading), np.cos(heading)])
        lo, hi = 0.0, 0.0
        for lane in self.lanes:
            foot, _, dist = project_point_to_polyline(p, lane.centerline)
            if dist > 30.0:
                continue
            s = float(np.dot(foot - p, left_n))
            if abs(s) > 3 * LANE_W:
                continue
            hi = max(hi, s + lane.width / 2)
            lo = min(lo, s - lane.width / 2)
        return hi, lo


def _line(p0, p1, step: float = 5.0) -> np.ndarray:
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = max(2, int(np.ceil(np.linalg.norm(p1 - p0) / step)) + 1)
    t = np.linspace(0.0, 1.0, n)
    return p0[None, :] + t[:, None] * (p1 - p0)[None, :]


def _arc(center, radius: float, th0: float, th1: float, step_deg: float = 5.0) -> np.ndarray:
    n = max(2, int(np.ceil(abs(th1 - th0) / np.radians(step_deg))) + 1)
    th = np.linspace(th0, th1, n)
    cx, cy = center
    return np.column_stack([cx + radius * np.cos(th), cy + radius * np.sin(th)])


def _straight() -> RoadTemplate:
    lanes = (
        Lane(id="lane-ego", width=LANE_W, centerline=_line((-40, 0), (190, 0))),
        Lane(id="lane-adj", width=LANE_W, centerline=_line((-40, -LANE_W), (190, -LANE_W))),
        Lane(id="lane-onc", width=LANE_W, centerline=_line((190, LANE_W), (-40, LANE_W))),
    )
    signal = (StopLine(p1=(60.0, -5.25), p2=(60.0, 1.75), kind="signal", on_route=True),)
    return RoadTemplate(
        name="straight", lanes=lanes,
        roles={"lane-ego": "ego", "lane-adj": "adjacent", "lane-onc": "oncoming"},
        route=_line((0, 0), (150, 0)),
        supported_placements=frozenset(PLACEMENTS),
        signal_stop_lines=signal)


def _curve() -> RoadTemplate:
    center = (0.0, 60.0)
    # Ego bears left along a 60 m radius arc; angles measured from scene +x.
    # The arc parameter runs from -pi/2 (route start at the origin).
    th_lo, th_hi = -np.pi / 2 - 0.3, -np.pi / 2 + 2.2
    ego_cl = _arc(center, 60.0, th_lo, th_hi)
    onc_cl = _arc(center, 60.0 - LANE_W, th_hi, th_lo)
    lanes = (
        Lane(id="lane-ego", width=LANE_W, centerline=ego_cl),
        Lane(id="lane-onc", width=LANE_W, centerline=onc_cl),
    )
    th_s = -np.pi / 2 + 1.0

    def radial(r):
        return (center[0] + r * np.cos(th_s), center[1] + r * np.sin(th_s))

    signal = (StopLine(p1=radial(60 - LANE_W - 1.75), p2=radial(60 + 1.75),
                       kind="signal", on_route=True),)
    return RoadTemplate(
        name="curve", lanes=lanes,
        roles={"lane-ego": "ego", "lane-onc": "oncoming"},
        route=_arc(center, 60.0, -np.pi / 2, -np.pi / 2 + 1.9),
        supported_placements=frozenset(PLACEMENTS) - {"ahead-adjacent-lane"},
        signal_stop_lines=signal)


def _intersection() -> RoadTemplate:
    cx = 65.0
    lanes = (
        Lane(id="lane-ego", width=LANE_W, centerline=_line((-40, 0), (190, 0))),
        Lane(id="lane-adj", width=LANE_W, centerline=_line((-40, -LANE_W), (190, -LANE_W))),
        Lane(id="lane-onc", width=LANE_W, centerline=_line((190, LANE_W), (-40, LANE_W))),
        Lane(id="lane-cross-n", width=LANE_W, centerline=_line((cx + 1.75, -60), (cx + 1.75, 60))),
        Lane(id="lane-cross-s", width=LANE_W, centerline=_line((cx - 1.75, 60), (cx - 1.75, -60))),
    )
    stop_geo = (
        # Ego approach, then oncoming, then the two cross-road approaches.
        ((cx - 4.5, -5.25), (cx - 4.5, 1.75), True),
        ((cx + 4.5, 1.75), (cx + 4.5, 5.25), False),
        ((cx, -6.25), (cx + 3.5, -6.25), False),
        ((cx - 3.5, 6.25), (cx, 6.25), False),
    )
    signal = tuple(StopLine(p1=a, p2=b, kind="signal", on_route=r) for a, b, r in stop_geo)
    plain = tuple(StopLine(p1=a, p2=b, kind="sign", on_route=r) for a, b, r in stop_geo)
    return RoadTemplate(
        name="intersection", lanes=lanes,
        roles={"lane-ego": "ego", "lane-adj": "adjacent", "lane-onc": "oncoming",
               "lane-cross-n": "cross-from-right", "lane-cross-s": "cross-from-left"},
        route=_line((0, 0), (130, 0)),
        supported_placements=frozenset(PLACEMENTS),
        signal_stop_lines=signal, plain_stop_lines=plain,
        junction_center=(cx, 0.0))


def _t_junction() -> RoadTemplate:
    cx = 65.0
    lanes = (
        Lane(id="lane-ego", width=LANE_W, centerline=_line((-40, 0), (190, 0))),
        Lane(id="lane-onc", width=LANE_W, centerline=_line((190, LANE_W), (-40, LANE_W))),
        Lane(id="lane-stem-in", width=LANE_W, centerline=_line((cx + 1.75, -60), (cx + 1.75, -1.75))),
        Lane(id="lane-stem-out", width=LANE_W, centerline=_line((cx - 1.75, -1.75), (cx - 1.75, -60))),
    )
    stem_line = ((cx, -4.0), (cx + 3.5, -4.0))
    signal = (
        StopLine(p1=(cx - 4.5, -1.75), p2=(cx - 4.5, 1.75), kind="signal", on_route=True),
        StopLine(p1=(cx + 4.5, 1.75), p2=(cx + 4.5, 5.25), kind="signal", on_route=False),
        StopLine(p1=stem_line[0], p2=stem_line[1], kind="signal", on_route=False),
    )
    plain = (StopLine(p1=stem_line[0], p2=stem_line[1], kind="sign", on_route=False),)
    return RoadTemplate(
        name="t-junction", lanes=lanes,
        roles={"lane-ego": "ego", "lane-onc": "oncoming",
               "lane-stem-in": "cross-from-right", "lane-stem-out": "stem-out"},
        route=_line((0, 0), (130, 0)),
        supported_placements=frozenset(PLACEMENTS) - {"ahead-adjacent-lane"},
        signal_stop_lines=signal, plain_stop_lines=plain,
        junction_center=(cx, 0.0))


def _roundabout() -> RoadTemplate:
    center, r = (60.0, 0.0), 12.0
    circ = _arc(center, r, 0.0, 2 * np.pi, step_deg=10.0)
    lanes = (
        Lane(id="lane-approach", width=LANE_W, centerline=_line((-40, 0), (46, 0))),
        Lane(id="lane-onc", width=LANE_W, centerline=_line((46, LANE_W), (-110, LANE_W))),
        Lane(id="lane-circ", width=4.0, centerline=circ),
        Lane(id="lane-exit", width=LANE_W, centerline=_line((74, 0), (190, 0))),
    )
    # Counterclockwise circulation: entering from the west, traffic keeps
    # the island on its left and passes the south side first.
    route = np.vstack([
        _line((0, 0), (44, 0)),
        _arc(center, r, np.pi, 2 * np.pi, step_deg=10.0),
        _line((74, 0), (120, 0)),
    ])
    signal = (StopLine(p1=(45.0, -1.75), p2=(45.0, 1.75), kind="signal", on_route=True),)
    return RoadTemplate(
        name="roundabout", lanes=lanes,
        roles={"lane-approach": "ego", "lane-onc": "oncoming",
               "lane-circ": "circulating", "lane-exit": "exit"},
        route=route,
        supported_placements=frozenset({"ahead-same-lane", "occluded-roadside", "oncoming"}),
        signal_stop_lines=signal)


@lru_cache(maxsize=1)
def builtin_road_library() -> dict:
    """Road type name -> RoadTemplate for the five built-in layouts."""
    templates = [_straight(), _curve(), _intersection(), _t_junction(), _roundabout()]
    return {t.name: t for t in templates}
