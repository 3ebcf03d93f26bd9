"""scenweave: safety-critical driving scenario synthesis and evolution.

Two stages: knowledge-grounded meta-scenario generation (retrieval +
semantic tuple + road instantiation), then complex scenario evolution
(attention-selected background collaborators with projected-gradient
trajectory perturbation), replayed in a closed-loop 2D simulator and
scored with a suite of driving metrics.
"""
from .config import BASE_PROMPTS, RunConfig, derive_seed
from .estimators import (ClosedLoopSimulator, CollaboratorSearch,
                         MetaScenarioGenerator, ScenarioEvolver)
from .knowledge import KnowledgeEntry, TfidfIndex, load_knowledge_base, retrieve
from .metagen import (BackendError, GeneratorBackend, ParseError, SemanticTuple,
                      emit_scenic, generate_semantics, instantiate_meta,
                      meta_from_prompt, parse_semantics)
from .metrics import (MetricsReport, RolloutMetrics, aggregate_suite,
                      compute_rollout_metrics, overall_score)
from .perturb import (FeasibilityConstraints, LossWeights, OptimizerConfig,
                      evolve_scenario, evolve_with_traces, nominal_ego_trajectory,
                      optimize_segment, project_feasible, segment_loss,
                      segment_loss_gradient)
from .relevance import (CollaboratorPick, CollaboratorSet, RelevanceMatrix,
                        aggregate_relevance, build_collaborator_set, build_relevance,
                        extract_window, find_keyframe, select_collaborators)
from .roads import RoadTemplate, builtin_road_library
from .scenario import (AdvScenario, AgentSpec, Lane, MetaScenario, Perturbation,
                       SceneContext, StopLine, Violation, make_agent,
                       validate_scenario)
from .scenario_io import (ScenarioFormatError, dumps_scenario, load_scenario,
                          loads_scenario, save_scenario)
from .sim import (EgoPolicyConfig, RolloutLog, generate_background_flow,
                  line_of_sight_occluded, simulate_closed_loop)
from .trajectory import Trajectory, resample_trajectory

__version__ = "0.1.0"

__all__ = [
    "AdvScenario", "AgentSpec", "BASE_PROMPTS", "BackendError",
    "ClosedLoopSimulator", "CollaboratorPick", "CollaboratorSearch",
    "CollaboratorSet", "EgoPolicyConfig", "FeasibilityConstraints",
    "GeneratorBackend", "KnowledgeEntry", "Lane", "LossWeights",
    "MetaScenarioGenerator", "MetaScenario", "MetricsReport", "OptimizerConfig",
    "ParseError", "Perturbation", "RelevanceMatrix", "RoadTemplate",
    "RolloutLog", "RolloutMetrics", "RunConfig", "ScenarioEvolver",
    "ScenarioFormatError", "SceneContext", "SemanticTuple", "StopLine",
    "TfidfIndex", "Trajectory", "Violation", "aggregate_relevance",
    "aggregate_suite", "build_collaborator_set", "build_relevance",
    "builtin_road_library", "compute_rollout_metrics", "derive_seed",
    "dumps_scenario", "emit_scenic", "evolve_scenario", "evolve_with_traces",
    "extract_window", "find_keyframe", "generate_background_flow",
    "generate_semantics", "instantiate_meta", "line_of_sight_occluded",
    "load_knowledge_base", "load_scenario", "loads_scenario", "make_agent",
    "meta_from_prompt", "nominal_ego_trajectory", "optimize_segment",
    "overall_score", "parse_semantics", "project_feasible", "resample_trajectory",
    "retrieve", "save_scenario", "segment_loss", "segment_loss_gradient",
    "select_collaborators", "simulate_closed_loop", "validate_scenario",
]
