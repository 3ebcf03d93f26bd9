"""Rollout metrics and suite aggregation.

Per-rollout raw metrics come from the logged ego states plus the scene
geometry; suites average them, with collision rate as the fraction of
rollouts that ended in a collision. The overall score is a documented
stand-in aggregate over safety, functionality and etiquette chosen for
monotonicity, so only directional comparisons between stages carry meaning.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np

from .geometry import polyline_arclength, project_points_to_polyline
from .scenario import SceneContext
from .sim import RolloutLog, _route_lane_halfwidth, offroad_excess

DEFAULT_WEIGHTS = (0.5, 0.3, 0.2)
ACCEL_REF = 3.0  # m/s^2 comfort normalizer


@dataclass(frozen=True)
class RolloutMetrics:
    """Raw metrics for one rollout."""

    collided: bool
    rr: int
    ss: int
    off_road: float
    rf: float
    comp: float
    ts: float
    acc: float
    yv: float
    li: int


@dataclass(frozen=True)
class MetricsReport:
    """Suite-level aggregate; os is filled from overall_score."""

    cr: float
    rr: float
    ss: float
    off_road: float
    rf: float
    comp: float
    ts: float
    acc: float
    yv: float
    li: float
    os: float


COLUMNS = ("CR", "RR", "SS", "OR", "RF", "Comp", "TS", "ACC", "YV", "LI", "OS")


def compute_rollout_metrics(log: RolloutLog, route: np.ndarray,
                            context: SceneContext) -> RolloutMetrics:
    route = np.asarray(route, dtype=float)
    route_len = float(polyline_arclength(route)[-1])
    if route_len <= 0.0:
        raise ValueError("route length must be positive")
    path = log.states[:, :2]
    _, arcs, dev = project_points_to_polyline(path, route)

    comp = min(max(float(arcs.max()) / route_len, 0.0), 1.0)
    half = _route_lane_halfwidth(context)
    rf = 1.0 - min(max(float(dev.mean()) / half, 0.0), 1.0)
    off_road = float(offroad_excess(path, context).mean())

    counts = {"red-light": 0, "stop-sign": 0, "lane-invasion": 0}
    for event in log.rule_events:
        if event.kind in counts:
            counts[event.kind] += 1

    return RolloutMetrics(
        collided=log.termination == "collision",
        rr=counts["red-light"],
        ss=counts["stop-sign"],
        off_road=off_road,
        rf=rf,
        comp=comp,
        ts=log.n_frames * log.dt,
        acc=float(np.abs(log.states[:, 4]).mean()),
        yv=float(np.abs(log.states[:, 5]).mean()),
        li=counts["lane-invasion"],
    )


def aggregate_suite(reports: Sequence[RolloutMetrics],
                    weights: tuple[float, float, float] = DEFAULT_WEIGHTS) -> MetricsReport:
    """Suite means; CR is the collision fraction. Order-independent."""
    if not reports:
        raise ValueError("aggregate_suite requires at least one rollout")
    mean = lambda attr: float(np.mean([getattr(r, attr) for r in reports]))
    report = MetricsReport(
        cr=float(np.mean([r.collided for r in reports])),
        rr=mean("rr"), ss=mean("ss"), off_road=mean("off_road"),
        rf=mean("rf"), comp=mean("comp"), ts=mean("ts"),
        acc=mean("acc"), yv=mean("yv"), li=mean("li"), os=0.0)
    return replace(report, os=overall_score(report, weights))


def overall_score(r: MetricsReport,
                  weights: tuple[float, float, float] = DEFAULT_WEIGHTS) -> float:
    """Safety/functionality/etiquette aggregate in [0, 1].

    cr_adj folds rule violations and off-road driving into the safety term;
    increasing any violation never increases the score.
    """
    w_safety, w_func, w_etq = weights
    if min(weights) < 0:
        raise ValueError("weights must be non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(weights)}")
    etiquette = 1.0 - min(max(r.acc / ACCEL_REF, 0.0), 1.0)
    return w_safety * (1.0 - _adjusted_cr(r)) + w_func * (r.rf * r.comp) + w_etq * etiquette


def _adjusted_cr(r: MetricsReport) -> float:
    penalty = 0.1 * (r.rr + r.ss) + 0.05 * min(r.off_road / 1.0, 1.0)
    return min(max(r.cr + penalty, 0.0), 1.0)


def report_row(r: MetricsReport) -> tuple[float, ...]:
    return (r.cr, r.rr, r.ss, r.off_road, r.rf, r.comp, r.ts, r.acc, r.yv, r.li, r.os)


def report_to_csv(reports: dict[str, MetricsReport]) -> str:
    """One line per labeled suite, 11 metric columns."""
    buf = io.StringIO()
    buf.write("label," + ",".join(COLUMNS) + "\n")
    for label, r in reports.items():
        buf.write(label + "," + ",".join(f"{v:.6f}" for v in report_row(r)) + "\n")
    return buf.getvalue()


def report_to_text(reports: dict[str, MetricsReport]) -> str:
    width = max([len(k) for k in reports] + [5])
    head = "label".ljust(width) + "  " + "  ".join(f"{c:>7}" for c in COLUMNS)
    lines = [head]
    for label, r in reports.items():
        lines.append(label.ljust(width) + "  "
                     + "  ".join(f"{v:7.3f}" for v in report_row(r)))
    return "\n".join(lines) + "\n"


def score_components(r: MetricsReport) -> dict[str, float]:
    """Safety / functionality / etiquette bars for grouped plots."""
    return {
        "safety": 1.0 - _adjusted_cr(r),
        "functionality": r.rf * r.comp,
        "etiquette": 1.0 - min(max(r.acc / ACCEL_REF, 0.0), 1.0),
    }


def rollouts_to_csv(rows: Sequence[tuple[str, RolloutMetrics]]) -> str:
    """Per-rollout CSV used by the report subcommand."""
    buf = io.StringIO()
    names = [f.name for f in fields(RolloutMetrics)]
    buf.write("scenario," + ",".join(names) + "\n")
    for label, m in rows:
        vals = [getattr(m, n) for n in names]
        buf.write(label + "," + ",".join(_fmt(v) for v in vals) + "\n")
    return buf.getvalue()


def rollouts_from_csv(text: str) -> list[tuple[str, RolloutMetrics]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty rollout metrics CSV")
    names = [f.name for f in fields(RolloutMetrics)]
    header = lines[0].split(",")
    if header != ["scenario"] + names:
        raise ValueError(f"unexpected rollout CSV header: {lines[0]!r}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        label = parts[0]
        vals = dict(zip(names, parts[1:]))
        out.append((label, RolloutMetrics(
            collided=vals["collided"] == "1",
            rr=int(vals["rr"]), ss=int(vals["ss"]),
            off_road=float(vals["off_road"]), rf=float(vals["rf"]),
            comp=float(vals["comp"]), ts=float(vals["ts"]),
            acc=float(vals["acc"]), yv=float(vals["yv"]), li=int(vals["li"]))))
    return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    return f"{v:.6f}"
