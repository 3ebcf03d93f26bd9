"""Three-term segment loss, analytic gradient, feasibility projection and
the fixed-step projected descent that evolves meta-scenarios.

The loss is minimized: proximity to the ego, alignment with the ego to
adversary sight line, and second-difference smoothness all decrease. Terms
are per-frame means so the default weights do not depend on window length.
The ego and adversary trajectories are frozen baselines throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import point_at_arclength, polyline_arclength, project_points_to_polyline
from .relevance import (DEFAULT_GAMMA, DEFAULT_K, DEFAULT_RATIO, build_collaborator_set,
                        build_relevance)
from .scenario import AdvScenario, AgentSpec, MetaScenario, Perturbation
from .trajectory import DEFAULT_DT, Trajectory

EPS_OCC = 1e-6     # guards the ego-adversary coincidence singularity
_SLACK = 1e-9      # relative tolerance making the clamps float-idempotent
_MAX_PASSES = 50   # cap for the projection's fixed-point sweep loop


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.3
    lambda2: float = 0.2
    lambda3: float = 0.5

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class FeasibilityConstraints:
    """Kinematic and lateral bounds for a perturbed segment.

    corridor is (centerline polyline, half_width) or None; when None the
    evolve step fills in the collaborator's nearest lane.
    """

    v_max: float = 20.0
    a_max: float = 4.0
    corridor: Optional[tuple] = None
    blend_frames: int = 3
    vehicle_width: float = 1.8

    def __post_init__(self):
        if self.v_max <= 0 or self.a_max <= 0:
            raise ValueError("v_max and a_max must be positive")
        if self.blend_frames < 0:
            raise ValueError("blend_frames must be >= 0")
        if self.vehicle_width <= 0:
            raise ValueError("vehicle_width must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    step: float = 0.05
    max_iters: int = 200
    tol: float = 1e-4
    patience: int = 10
    max_halvings: int = 5

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be > 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


def _check_segments(segment, ego_segment, adv_segment):
    seg = np.asarray(segment, dtype=float)
    ego = np.asarray(ego_segment, dtype=float)
    adv = np.asarray(adv_segment, dtype=float)
    if seg.shape != ego.shape or seg.shape != adv.shape:
        raise ValueError(f"segment shapes differ: {seg.shape}, {ego.shape}, {adv.shape}")
    if seg.ndim != 2 or seg.shape[1] != 2:
        raise ValueError(f"segments must be (n, 2) arrays, got {seg.shape}")
    if len(seg) < 3:
        raise ValueError(f"segment length {len(seg)} < 3: smoothness term undefined")
    return seg, ego, adv


def segment_loss(segment, ego_segment, adv_segment,
                 w: LossWeights = LossWeights()) -> tuple[float, float, float, float]:
    """(total, l_ego, l_occ, l_smooth) for one window."""
    seg, ego, adv = _check_segments(segment, ego_segment, adv_segment)
    v = seg - ego
    dist = np.linalg.norm(v, axis=1)
    l_ego = float(dist.mean())

    u = adv - ego
    den = np.maximum(np.linalg.norm(u, axis=1), EPS_OCC)
    cross = v[:, 0] * u[:, 1] - v[:, 1] * u[:, 0]
    l_occ = float((np.abs(cross) / den).mean())

    d2 = seg[2:] - 2.0 * seg[1:-1] + seg[:-2]
    l_smooth = float((d2 ** 2).sum(axis=1).mean())

    total = w.lambda1 * l_ego + w.lambda2 * l_occ + w.lambda3 * l_smooth
    return total, l_ego, l_occ, l_smooth


def segment_loss_gradient(segment, ego_segment, adv_segment,
                          w: LossWeights = LossWeights()) -> np.ndarray:
    """Analytic gradient of the total loss w.r.t. every segment coordinate."""
    seg, ego, adv = _check_segments(segment, ego_segment, adv_segment)
    n = len(seg)
    v = seg - ego
    dist = np.linalg.norm(v, axis=1)
    safe = np.where(dist > 1e-12, dist, 1.0)
    g_ego = np.where(dist[:, None] > 1e-12, v / safe[:, None], 0.0) / n

    u = adv - ego
    den = np.maximum(np.linalg.norm(u, axis=1), EPS_OCC)
    cross = v[:, 0] * u[:, 1] - v[:, 1] * u[:, 0]
    perp = np.column_stack([u[:, 1], -u[:, 0]])
    g_occ = np.sign(cross)[:, None] * perp / den[:, None] / n

    d2 = seg[2:] - 2.0 * seg[1:-1] + seg[:-2]
    m = n - 2
    full = np.zeros_like(seg)
    full[1:-1] = d2
    prev = np.vstack([np.zeros((1, 2)), full[:-1]])
    nxt = np.vstack([full[1:], np.zeros((1, 2))])
    g_smooth = (2.0 / m) * (prev - 2.0 * full + nxt)

    return w.lambda1 * g_ego + w.lambda2 * g_occ + w.lambda3 * g_smooth


def _clamp_steps(seg: np.ndarray, limit: float) -> np.ndarray:
    # vectorized scan first: near the fixed point no step violates the limit
    d = np.diff(seg, axis=0)
    norms2 = (d * d).sum(axis=1)
    thr = limit * (1.0 + _SLACK)
    over = norms2 > thr * thr
    if not over.any():
        return seg
    first = int(np.argmax(over)) + 1
    pts = seg.tolist()
    for t in range(first, len(pts)):
        px, py = pts[t - 1]
        dx = pts[t][0] - px
        dy = pts[t][1] - py
        norm = math.hypot(dx, dy)
        if norm > thr:
            f = limit / norm
            pts[t] = [px + dx * f, py + dy * f]
    return np.array(pts)


def _clamp_step_changes(seg: np.ndarray, limit: float) -> np.ndarray:
    d = np.diff(seg, axis=0)
    dd = np.diff(d, axis=0)
    norms2 = (dd * dd).sum(axis=1)
    thr = limit * (1.0 + _SLACK)
    over = norms2 > thr * thr
    if not over.any():
        return seg
    first = int(np.argmax(over)) + 1
    steps = d.tolist()
    for t in range(first, len(steps)):
        px, py = steps[t - 1]
        ddx = steps[t][0] - px
        ddy = steps[t][1] - py
        norm = math.hypot(ddx, ddy)
        if norm > thr:
            f = limit / norm
            steps[t] = [px + ddx * f, py + ddy * f]
    return np.vstack([seg[:1], seg[0] + np.cumsum(steps, axis=0)])


def _corridor_projector(centerline: np.ndarray) -> tuple:
    # per-sweep precomputation: segment starts, vectors, squared lengths
    a = centerline[:-1]
    ab = centerline[1:] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom <= 0, 1.0, denom)
    a_ab = np.einsum("ij,ij->i", a, ab)
    return a, ab, denom, a_ab


def _clamp_corridor(seg: np.ndarray, projector: tuple, limit: float) -> np.ndarray:
    a, ab, denom, a_ab = projector
    t = np.clip((seg @ ab.T - a_ab) / denom, 0.0, 1.0)
    feet = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    diff = feet - seg[:, None, :]
    d2 = np.einsum("psj,psj->ps", diff, diff)
    idx = np.argmin(d2, axis=1)
    rows = np.arange(len(seg))
    dist = np.sqrt(d2[rows, idx])
    over = dist > limit * (1.0 + _SLACK)
    if not over.any():
        return seg
    out = seg.copy()
    foot = feet[rows, idx]
    scale = (limit / dist[over])[:, None]
    out[over] = foot[over] + (seg[over] - foot[over]) * scale
    return out


def _blend_boundaries(seg: np.ndarray, original: np.ndarray, b: int) -> np.ndarray:
    n = len(seg)
    if b < 1 or 2 * b >= n:
        return seg
    dev_head = seg[b] - original[b]
    dev_tail = seg[n - 1 - b] - original[n - 1 - b]
    ramp = (np.arange(b) / b)[:, None]
    head = original[:b] + dev_head[None, :] * ramp
    tail = original[n - b:] + dev_tail[None, :] * ramp[::-1]
    if np.array_equal(seg[:b], head) and np.array_equal(seg[n - b:], tail):
        return seg
    out = seg.copy()
    out[:b] = head
    out[n - b:] = tail
    return out


def _sweep_feasible(segment, original_segment, c: FeasibilityConstraints,
                    dt: float) -> tuple[np.ndarray, bool]:
    """Sweep the four clamps until a bitwise fixed point or the pass cap.

    Returns (segment, converged). converged=True certifies the result is a
    fixed point: re-projection returns it bitwise unchanged. The clamps can
    conflict (a large boundary deviation cannot ramp to zero within the
    acceleration limit), in which case the sweep stalls and converged=False.
    """
    seg = np.asarray(segment, dtype=float).copy()
    original = np.asarray(original_segment, dtype=float)
    if seg.shape != original.shape:
        raise ValueError(f"segment shape {seg.shape} != original {original.shape}")
    step_limit = c.v_max * dt
    accel_limit = c.a_max * dt * dt
    lateral_limit = None
    projector = None
    if c.corridor is not None:
        projector = _corridor_projector(np.asarray(c.corridor[0], dtype=float))
        lateral_limit = max(c.corridor[1] - c.vehicle_width / 2.0, 0.05)
    for _ in range(_MAX_PASSES):
        before = seg
        seg = _clamp_steps(seg, step_limit)
        seg = _clamp_step_changes(seg, accel_limit)
        if lateral_limit is not None:
            seg = _clamp_corridor(seg, projector, lateral_limit)
        seg = _blend_boundaries(seg, original, c.blend_frames)
        if seg is before or np.array_equal(seg, before):
            return seg, True
    return seg, False


def project_feasible(segment, original_segment, c: FeasibilityConstraints,
                     dt: float = DEFAULT_DT) -> np.ndarray:
    """Enforce step, acceleration, corridor and boundary-blend limits.

    The clamps are swept in order until the array stabilizes, so the result
    is idempotent whenever the sweep converges (always on feasible input,
    which passes through unchanged).
    """
    seg, _ = _sweep_feasible(segment, original_segment, c, dt)
    return seg


def optimize_segment(segment, ego_segment, adv_segment,
                     w: LossWeights = LossWeights(),
                     c: FeasibilityConstraints = FeasibilityConstraints(),
                     cfg: OptimizerConfig = OptimizerConfig(),
                     dt: float = DEFAULT_DT) -> tuple[np.ndarray, np.ndarray]:
    """Projected fixed-step descent. Returns (segment, loss trace).

    The trace has one row (total, l_ego, l_occ, l_smooth) for the input plus
    one per accepted step; it is non-increasing in the first column because
    loss-increasing candidates are rejected (step halved, at most
    max_halvings times, then the loop stops). Candidates whose projection
    does not certify as a fixed point are rejected the same way, so every
    accepted iterate is bitwise invariant under re-projection.
    """
    orig = np.asarray(segment, dtype=float).copy()
    cur = orig.copy()
    trace = [segment_loss(cur, ego_segment, adv_segment, w)]
    alpha = cfg.step
    halvings = 0
    accepted = 0
    while accepted < cfg.max_iters:
        grad = segment_loss_gradient(cur, ego_segment, adv_segment, w)
        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            break
        candidate, certified = _sweep_feasible(cur - alpha * grad / gnorm, orig, c, dt)
        total = segment_loss(candidate, ego_segment, adv_segment, w)
        if certified and total[0] <= trace[-1][0]:
            cur = candidate
            trace.append(total)
            accepted += 1
            alpha = cfg.step
            halvings = 0
            if accepted >= cfg.patience:
                old = trace[-1 - cfg.patience][0]
                if old - trace[-1][0] < cfg.tol * max(abs(old), 1e-12):
                    break
        else:
            halvings += 1
            if halvings > cfg.max_halvings:
                break
            alpha /= 2.0
    return cur, np.array(trace)


def nominal_ego_trajectory(route: np.ndarray, n_frames: int, dt: float = DEFAULT_DT,
                           cruise_speed: float = 10.0) -> Trajectory:
    """Frozen ego baseline: route followed at cruise speed from frame 0."""
    cum = polyline_arclength(route)
    s = np.minimum(np.arange(n_frames) * dt * cruise_speed, float(cum[-1]))
    pts = np.array([point_at_arclength(route, si) for si in s])
    return Trajectory(dt=dt, points=pts)


_CORRIDOR_MARGIN = 20.0  # centerline kept this far beyond the window's span


def _nearest_lane_corridor(points: np.ndarray, lanes) -> tuple[np.ndarray, float]:
    best, best_d = None, np.inf
    for lane in lanes:
        _, _, dist = project_points_to_polyline(points, lane.centerline)
        d = float(dist.mean())
        if d < best_d:
            best, best_d = lane, d
    centerline = np.asarray(best.centerline, float)
    # keep only vertices near the window's span; retained segments are the
    # original ones bit for bit, and the optimizer never moves points far
    # enough for a dropped (distant) segment to become the nearest
    _, arcs, _ = project_points_to_polyline(points, centerline)
    cum = polyline_arclength(centerline)
    lo = float(arcs.min()) - _CORRIDOR_MARGIN
    hi = float(arcs.max()) + _CORRIDOR_MARGIN
    first = max(int(np.searchsorted(cum, lo)) - 1, 0)
    last = min(int(np.searchsorted(cum, hi)) + 1, len(centerline) - 1)
    return centerline[first:last + 1], best.width / 2.0


def evolve_with_traces(meta: MetaScenario,
                       backgrounds: Sequence[tuple[AgentSpec, Trajectory]],
                       k: int = DEFAULT_K, ratio: float = DEFAULT_RATIO,
                       gamma: float = DEFAULT_GAMMA,
                       w: LossWeights = LossWeights(),
                       c: FeasibilityConstraints = FeasibilityConstraints(),
                       cfg: OptimizerConfig = OptimizerConfig(),
                       ego_trajectory: Optional[Trajectory] = None,
                       ) -> tuple[AdvScenario, tuple[tuple[int, np.ndarray], ...]]:
    """Full evolution pass plus the per-collaborator loss traces."""
    if not backgrounds:
        raise ValueError("evolve requires at least one background agent")
    backgrounds = list(backgrounds)
    dt = meta.dt
    if ego_trajectory is None:
        ego_trajectory = nominal_ego_trajectory(meta.context.route, meta.n_frames, dt)
    bg_trajs = [traj for _, traj in backgrounds]
    matrix = build_relevance(ego_trajectory, meta.adversary_trajectory, bg_trajs, gamma)
    collaborators = build_collaborator_set(matrix, k=k, ratio=ratio)

    ego_pts = ego_trajectory.points
    adv_pts = meta.adversary_trajectory.points
    new_backgrounds = list(backgrounds)
    records = []
    traces = []
    for pick in collaborators.picks:
        a, b = pick.window
        if b - a < 3:
            continue
        spec, traj = backgrounds[pick.index]
        original = np.array(traj.points[a:b])
        constraints = c
        if constraints.corridor is None:
            corridor = _nearest_lane_corridor(original, meta.context.lanes)
            constraints = replace(constraints, corridor=corridor,
                                  vehicle_width=spec.footprint[1])
        optimized, trace = optimize_segment(original, ego_pts[a:b], adv_pts[a:b],
                                            w=w, c=constraints, cfg=cfg, dt=dt)
        pts = np.array(traj.points)
        pts[a:b] = optimized
        new_backgrounds[pick.index] = (spec, Trajectory(dt=dt, points=pts))
        records.append(Perturbation(agent_index=pick.index, keyframe=pick.keyframe,
                                    window=pick.window, original=original,
                                    optimized=optimized))
        traces.append((pick.index, trace))
    adv = AdvScenario(meta=meta, backgrounds=tuple(new_backgrounds),
                      perturbations=tuple(records))
    return adv, tuple(traces)


def evolve_scenario(meta: MetaScenario,
                    backgrounds: Sequence[tuple[AgentSpec, Trajectory]],
                    k: int = DEFAULT_K, ratio: float = DEFAULT_RATIO,
                    gamma: float = DEFAULT_GAMMA,
                    w: LossWeights = LossWeights(),
                    c: FeasibilityConstraints = FeasibilityConstraints(),
                    cfg: OptimizerConfig = OptimizerConfig(),
                    ego_trajectory: Optional[Trajectory] = None) -> AdvScenario:
    """Attention-guided perturbation of the top-k background collaborators."""
    adv, _ = evolve_with_traces(meta, backgrounds, k=k, ratio=ratio, gamma=gamma,
                                w=w, c=c, cfg=cfg, ego_trajectory=ego_trajectory)
    return adv
