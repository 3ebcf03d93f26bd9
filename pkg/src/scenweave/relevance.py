"""Frame-wise attention relevance over background agents.

The relevance tensor holds one attention distribution per (query agent,
query frame): logits are scaled dot products of centroid-centered positions
(d = 2), masked so no weight flows to future frames, with an additive
(t - s) * ln(gamma) recency bias; the exponentials are normalized jointly
over all (background, key frame) pairs.

Normalizing Eq-style logits with a softmax and centering positions per frame
are deliberate interpretation choices: the additive log-decay only acts as a
multiplicative decay under exponential normalization, and centering makes
the weights invariant to scene translation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .trajectory import Trajectory

DEFAULT_GAMMA = 0.8
DEFAULT_K = 4
DEFAULT_RATIO = 0.6


@dataclass(frozen=True)
class RelevanceMatrix:
    """Normalized attention weights [query in {ego, adv}, t, background, s]."""

    weights: np.ndarray = field(repr=False)
    gamma: float = DEFAULT_GAMMA
    d: int = 2

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_frames(self) -> int:
        return self.weights.shape[1]

    @property
    def n_backgrounds(self) -> int:
        return self.weights.shape[2]


@dataclass(frozen=True)
class CollaboratorPick:
    """One selected background: its keyframe, window and relevance score."""

    index: int
    keyframe: int
    window: tuple[int, int]
    score: float


@dataclass(frozen=True)
class CollaboratorSet:
    picks: tuple[CollaboratorPick, ...]

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(p.index for p in self.picks)


def _stack_points(trajectories: Sequence[Trajectory]) -> np.ndarray:
    return np.stack([t.points for t in trajectories]) if trajectories else np.zeros((0, 0, 2))


def build_relevance(ego: Trajectory, adv: Trajectory,
                    backgrounds: Sequence[Trajectory],
                    gamma: float = DEFAULT_GAMMA) -> RelevanceMatrix:
    """Attention weights of shape (2, T, N, T); zero wherever s > t."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    T = len(ego)
    for name, traj in [("adv", adv)] + [(f"backgrounds[{i}]", b)
                                        for i, b in enumerate(backgrounds)]:
        if len(traj) != T:
            raise ValueError(f"{name} has {len(traj)} frames, expected {T}")
        if traj.dt != ego.dt:
            raise ValueError(f"{name} dt {traj.dt} differs from ego dt {ego.dt}")
    N = len(backgrounds)
    if N == 0:
        return RelevanceMatrix(weights=np.zeros((2, T, 0, T)), gamma=gamma)

    B = _stack_points(backgrounds)                        # (N, T, 2)
    all_pts = np.concatenate([ego.points[None], adv.points[None], B])  # (N+2, T, 2)
    centroid = all_pts.mean(axis=0)                       # (T, 2)
    Q = np.stack([ego.points - centroid, adv.points - centroid])  # (2, T, 2)
    K = B - centroid[None, :, :]                          # (N, T, 2)

    logits = np.einsum("qtd,nsd->qtns", Q, K) / math.sqrt(2.0)
    t_idx = np.arange(T)
    lag = t_idx[:, None] - t_idx[None, :]                 # t - s
    logits = logits + (lag * math.log(gamma))[None, :, None, :]
    future = np.broadcast_to((lag < 0)[:, None, :], (T, N, T))
    logits[:, future] = -np.inf

    flat = logits.reshape(2, T, N * T)
    flat_max = flat.max(axis=2, keepdims=True)
    expd = np.exp(flat - flat_max)
    weights = (expd / expd.sum(axis=2, keepdims=True)).reshape(2, T, N, T)
    return RelevanceMatrix(weights=weights, gamma=gamma)


def aggregate_relevance(m: RelevanceMatrix) -> np.ndarray:
    """Total attention mass per background; sums to 2 * T across backgrounds."""
    return m.weights.sum(axis=(0, 1, 3))


def select_collaborators(scores: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k largest scores, descending; ties go to lower index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores, dtype=float)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(order[:min(k, len(scores))])


def find_keyframe(m: RelevanceMatrix, i: int) -> int:
    """Key frame receiving the most total attention for background i."""
    if not 0 <= i < m.n_backgrounds:
        raise IndexError(f"background index {i} out of range [0, {m.n_backgrounds})")
    column_mass = m.weights[:, :, i, :].sum(axis=(0, 1))
    return int(np.argmax(column_mass))  # argmax takes the earliest tie


def extract_window(T: int, t_star: int, ratio: float) -> tuple[int, int]:
    """Half-open frame window of length round(ratio*T) centered on t_star."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    L = int(round(ratio * T))
    a = min(max(t_star - L // 2, 0), T - L)
    return a, a + L


def build_collaborator_set(m: RelevanceMatrix, k: int = DEFAULT_K,
                           ratio: float = DEFAULT_RATIO) -> CollaboratorSet:
    scores = aggregate_relevance(m)
    picks = []
    for i in select_collaborators(scores, k):
        t_star = find_keyframe(m, i)
        window = extract_window(m.n_frames, t_star, ratio)
        picks.append(CollaboratorPick(index=int(i), keyframe=t_star,
                                      window=window, score=float(scores[i])))
    return CollaboratorSet(picks=tuple(picks))


def relevance_report(m: RelevanceMatrix, collaborators: CollaboratorSet) -> str:
    """Plain-text dump of per-background scores and the selected windows."""
    scores = aggregate_relevance(m)
    lines = [f"backgrounds={m.n_backgrounds} frames={m.n_frames} gamma={m.gamma}"]
    chosen = {p.index: p for p in collaborators.picks}
    for i in range(m.n_backgrounds):
        line = f"background {i}: score={scores[i]:.6f}"
        if i in chosen:
            p = chosen[i]
            line += f" selected keyframe={p.keyframe} window=[{p.window[0]},{p.window[1]})"
        lines.append(line)
    return "\n".join(lines) + "\n"
