"""Estimator-style facades over the pipeline.

These wrap the functional core in fit/transform/predict objects with
get_params/set_params so they compose with parameter sweeps and grid
drivers. fit() only prepares resources (knowledge base, road library);
nothing is trained. The constructor-argument-equals-parameter convention
is deliberate: params are discoverable, cloneable and serializable.
"""
from __future__ import annotations

import inspect
from typing import Optional, Sequence

from .config import derive_seed
from .knowledge import load_knowledge_base
from .metagen import GeneratorBackend, meta_from_prompt
from .metrics import aggregate_suite, compute_rollout_metrics
from .perturb import LossWeights, OptimizerConfig, evolve_with_traces
from .relevance import build_collaborator_set, build_relevance
from .roads import builtin_road_library
from .scenario import AdvScenario, MetaScenario
from .sim import EgoPolicyConfig, simulate_closed_loop
from .validation import check_int_in_range, check_unit_interval


class ParamsMixin:
    """get_params/set_params over the constructor signature."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [n for n in sig.parameters if n != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {n: getattr(self, n) for n in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"unknown parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    def _check_fitted(self, attr: str):
        if not hasattr(self, attr):
            raise RuntimeError(f"{type(self).__name__} is not fitted; call fit() first")


class MetaScenarioGenerator(ParamsMixin):
    """Prompt list in, meta-scenarios out."""

    def __init__(self, backend: str = "template", seed: int = 0, n_frames: int = 200,
                 dt: float = 0.1, endpoint: str = "", model: str = "",
                 retrieve_k: int = 5):
        self.backend = backend
        self.seed = seed
        self.n_frames = n_frames
        self.dt = dt
        self.endpoint = endpoint
        self.model = model
        self.retrieve_k = retrieve_k

    def fit(self, X=None, y=None):
        self.kb_ = load_knowledge_base()
        self.road_library_ = builtin_road_library()
        return self

    def transform(self, prompts: Sequence[str]) -> list[MetaScenario]:
        self._check_fitted("kb_")
        out = []
        self.semantics_ = []
        for i, prompt in enumerate(prompts):
            backend = GeneratorBackend(
                mode=self.backend, endpoint=self.endpoint, model=self.model,
                seed=derive_seed(self.seed, "prompt", str(i)))
            meta, semantics = meta_from_prompt(
                prompt, backend, kb=self.kb_, road_library=self.road_library_,
                n_frames=self.n_frames, dt=self.dt, retrieve_k=self.retrieve_k)
            out.append(meta)
            self.semantics_.append(semantics)
        return out

    def fit_transform(self, prompts: Sequence[str], y=None) -> list[MetaScenario]:
        return self.fit().transform(prompts)


class CollaboratorSearch(ParamsMixin):
    """Attention relevance over one scene; exposes the selected collaborators.

    fit() takes X = (ego_trajectory, adversary_trajectory, background
    trajectories) and stores the relevance matrix and picks.
    """

    def __init__(self, k: int = 4, ratio: float = 0.6, gamma: float = 0.8):
        self.k = k
        self.ratio = ratio
        self.gamma = gamma

    def fit(self, X, y=None):
        check_int_in_range(self.k, "k", low=1)
        check_unit_interval(self.ratio, "ratio")
        ego, adversary, backgrounds = X
        self.matrix_ = build_relevance(ego, adversary, list(backgrounds),
                                       gamma=self.gamma)
        self.collaborators_ = build_collaborator_set(self.matrix_, k=self.k,
                                                     ratio=self.ratio)
        return self

    def predict(self, X=None) -> tuple[int, ...]:
        self._check_fitted("collaborators_")
        return self.collaborators_.indices


class ScenarioEvolver(ParamsMixin):
    """Meta-scenario plus flow in, adversarial scenario out."""

    def __init__(self, k: int = 4, ratio: float = 0.6, gamma: float = 0.8,
                 lambda1: float = 0.3, lambda2: float = 0.2, lambda3: float = 0.5,
                 step: float = 0.05, max_iters: int = 200):
        self.k = k
        self.ratio = ratio
        self.gamma = gamma
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.step = step
        self.max_iters = max_iters

    def fit(self, X=None, y=None):
        self.weights_ = LossWeights(self.lambda1, self.lambda2, self.lambda3)
        self.optimizer_ = OptimizerConfig(step=self.step, max_iters=self.max_iters)
        return self

    def transform(self, items: Sequence[tuple[MetaScenario, Sequence]]
                  ) -> list[AdvScenario]:
        self._check_fitted("weights_")
        out = []
        self.traces_ = []
        for meta, backgrounds in items:
            adv, traces = evolve_with_traces(
                meta, backgrounds, k=self.k, ratio=self.ratio, gamma=self.gamma,
                w=self.weights_, cfg=self.optimizer_)
            out.append(adv)
            self.traces_.append(traces)
        return out

    def fit_transform(self, items, y=None) -> list[AdvScenario]:
        return self.fit().transform(items)


class ClosedLoopSimulator(ParamsMixin):
    """Replays scenarios; predict() yields termination labels, score() the OS."""

    def __init__(self, stage: str = "adversarial", cruise_speed: float = 10.0,
                 max_brake: float = 6.0, reaction_delay: float = 0.3,
                 detection_range: float = 50.0):
        self.stage = stage
        self.cruise_speed = cruise_speed
        self.max_brake = max_brake
        self.reaction_delay = reaction_delay
        self.detection_range = detection_range

    def fit(self, X=None, y=None):
        self.policy_ = EgoPolicyConfig(
            cruise_speed=self.cruise_speed, max_brake=self.max_brake,
            reaction_delay=self.reaction_delay, detection_range=self.detection_range)
        return self

    def transform(self, scenarios: Sequence[AdvScenario]) -> list:
        self._check_fitted("policy_")
        logs = [simulate_closed_loop(s, self.policy_, stage=self.stage)
                for s in scenarios]
        self.logs_ = logs
        return logs

    def predict(self, scenarios: Sequence[AdvScenario]) -> list[str]:
        return [log.termination for log in self.transform(scenarios)]

    def score(self, scenarios: Sequence[AdvScenario],
              y: Optional[Sequence] = None) -> float:
        logs = self.transform(scenarios)
        rollups = [compute_rollout_metrics(log, s.meta.context.route, s.meta.context)
                   for log, s in zip(logs, scenarios)]
        self.report_ = aggregate_suite(rollups)
        return self.report_.os
