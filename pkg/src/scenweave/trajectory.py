"""Timestamped 2D trajectories with derived heading and speed.

Positions are the single source of truth; heading and speed are always
recomputed by finite differences and never stored.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_DT = 0.1


def _as_readonly(points) -> np.ndarray:
    arr = np.array(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"trajectory points must be (T, 2), got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled planar path.

    Parameters
    ----------
    dt : float
        Timestep in seconds, strictly positive.
    points : array-like of shape (T, 2)
        Positions in meters, T >= 2.
    """

    dt: float
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", _as_readonly(self.points))
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if len(self.points) < 2:
            raise ValueError(f"trajectory needs at least 2 frames, got {len(self.points)}")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_frames(self) -> int:
        return len(self.points)

    @property
    def duration(self) -> float:
        """Total duration (T - 1) * dt in seconds."""
        return (len(self.points) - 1) * self.dt

    def speeds(self) -> np.ndarray:
        """Per-frame speed ||p[t+1] - p[t]|| / dt; the last frame copies the previous."""
        d = np.linalg.norm(np.diff(self.points, axis=0), axis=1) / self.dt
        return np.concatenate([d, d[-1:]])

    def headings(self) -> np.ndarray:
        """Per-frame forward-difference heading; the last frame copies the previous.

        A zero-length step keeps the previous heading so stationary agents do
        not spin; the first heading defaults to 0 until the first move.
        """
        diffs = np.diff(self.points, axis=0)
        headings = np.zeros(len(self.points))
        prev = 0.0
        for t, d in enumerate(diffs):
            if np.hypot(d[0], d[1]) > 1e-12:
                prev = float(np.arctan2(d[1], d[0]))
            headings[t] = prev
        headings[-1] = headings[-2] if len(self.points) > 1 else prev
        return headings

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.points).all())

    def with_points(self, points: np.ndarray) -> "Trajectory":
        return Trajectory(dt=self.dt, points=points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.dt == other.dt and self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points)
        )


def resample_trajectory(traj: Trajectory, new_dt: float) -> Trajectory:
    """Linearly interpolate a trajectory at a new uniform timestep.

    Sample times are k * new_dt clamped to the original duration, so the
    first and last positions are always preserved exactly.
    """
    if new_dt <= 0:
        raise ValueError(f"new_dt must be positive, got {new_dt}")
    duration = traj.duration
    n = int(np.floor(duration / new_dt + 1e-9)) + 1
    times = np.minimum(np.arange(n) * new_dt, duration)
    if times[-1] < duration - 1e-12:
        times = np.concatenate([times, [duration]])
    old_times = np.arange(len(traj)) * traj.dt
    x = np.interp(times, old_times, traj.points[:, 0])
    y = np.interp(times, old_times, traj.points[:, 1])
    pts = np.column_stack([x, y])
    pts[0] = traj.points[0]
    pts[-1] = traj.points[-1]
    return Trajectory(dt=new_dt, points=pts)
