"""Batch command line: generate, evolve, simulate, evaluate, report.

Subcommands mirror the pipeline stages so ablation runs are flag
combinations. All randomness flows from --seed through named substreams;
outputs carry no timestamps, so a rerun with the same inputs is
byte-identical. Exit codes: 0 success, 2 partial per-scenario failures,
1 fatal.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import BASE_PROMPTS, RunConfig, derive_seed
from .metagen import GeneratorBackend, emit_scenic, meta_from_prompt
from .metrics import (aggregate_suite, compute_rollout_metrics, report_to_csv,
                      report_to_text, rollouts_from_csv, rollouts_to_csv,
                      score_components)
from .perturb import LossWeights, evolve_with_traces
from .relevance import build_collaborator_set, build_relevance, relevance_report
from .scenario import AdvScenario, MetaScenario, validate_scenario
from .scenario_io import load_scenario, save_scenario
from .sim import (EgoPolicyConfig, generate_background_flow, rollout_to_csv,
                  rollout_to_text, simulate_closed_loop)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are fatal, not partial
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenweave")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="emit meta-scenarios from base prompts")
    _add_common(g)
    g.add_argument("--backend", choices=("remote", "template"), default="template")
    g.add_argument("--endpoint", default="", help="chat endpoint URL (remote backend)")
    g.add_argument("--model", default="", help="model name (remote backend)")
    g.add_argument("--n-seeds", type=int, default=10, help="seeds per base prompt")
    g.add_argument("--n-frames", type=int, default=200)
    g.add_argument("--prompt", action="append", default=None,
                   help="extra prompt as LABEL=TEXT (repeatable; replaces the built-ins)")

    e = sub.add_parser("evolve", help="evolve meta-scenarios into adversarial ones")
    _add_common(e)
    e.add_argument("--in", dest="in_dir", required=True, help="directory of meta-scenarios")
    e.add_argument("--gamma", type=float, default=0.8)
    e.add_argument("--k", type=int, default=4)
    e.add_argument("--ratio", type=float, default=0.6)
    e.add_argument("--lambda1", type=float, default=0.3)
    e.add_argument("--lambda2", type=float, default=0.2)
    e.add_argument("--lambda3", type=float, default=0.5)
    e.add_argument("--no-occlusion-loss", action="store_true",
                   help="ablation: drop the occlusion term (sets lambda2 to 0)")
    e.add_argument("--flow-n", type=int, default=10, help="background flow vehicles")
    e.add_argument("--dump-graph", action="store_true",
                   help="write the attention relevance report per scenario")

    s = sub.add_parser("simulate", help="replay scenarios and write rollout logs")
    _add_common(s)
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--stage", choices=("benign", "meta", "adversarial"),
                   default="adversarial")

    v = sub.add_parser("evaluate", help="simulate a suite and aggregate metrics")
    _add_common(v)
    v.add_argument("--in", dest="in_dir", required=True)
    v.add_argument("--stage", choices=("benign", "meta", "adversarial"),
                   default="adversarial")

    r = sub.add_parser("report", help="render metric tables from evaluate outputs")
    r.add_argument("--in", dest="in_dirs", action="append", required=True,
                   help="evaluate output directory (repeatable)")
    r.add_argument("--bars", action="store_true",
                   help="also print safety/functionality/etiquette components")
    r.add_argument("--out", default=None, help="optional file for the CSV table")
    return parser


def _scenario_dirs(in_dir: str) -> list[Path]:
    root = Path(in_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"input directory not found: {in_dir}")
    return sorted(p.parent for p in root.glob("*/scenario.json"))


def _run_tasks(tasks, worker, jobs: int):
    """Ordered fan-out with per-task fault isolation."""
    results = []
    if jobs <= 1:
        for t in tasks:
            results.append(_guard(worker, t))
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for res in pool.map(_Guarded(worker), tasks):
            results.append(res)
    return results


def _guard(worker, task):
    try:
        return worker(task)
    except Exception as exc:  # noqa: BLE001 - isolation boundary
        return (task.get("name", "?"), False, f"{type(exc).__name__}: {exc}", None)


class _Guarded:
    def __init__(self, worker):
        self.worker = worker

    def __call__(self, task):
        return _guard(self.worker, task)


def _generate_one(task: dict):
    backend = GeneratorBackend(mode=task["backend"], seed=task["backend_seed"],
                               endpoint=task["endpoint"], model=task["model"])
    meta, semantics = meta_from_prompt(task["prompt"], backend,
                                       n_frames=task["n_frames"])
    problems = validate_scenario(meta)
    if problems:
        raise ValueError("; ".join(p.message for p in problems[:3]))
    out = Path(task["out"]) / task["name"]
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(meta, out / "scenario.json")
    (out / "scenario.scenic").write_text(emit_scenic(meta))
    (out / "semantics.txt").write_text(
        f"C: {semantics.phi_c}\nP: {semantics.phi_p}\nB: {semantics.phi_b}\n"
        f"R: {semantics.phi_r}\nL: {semantics.phi_l}\n")
    return (task["name"], True, "ok", None)


def cmd_generate(args) -> int:
    prompts = list(BASE_PROMPTS)
    if args.prompt:
        prompts = []
        for spec in args.prompt:
            label, _, text = spec.partition("=")
            if not text:
                raise ValueError(f"--prompt expects LABEL=TEXT, got {spec!r}")
            prompts.append((label, text))
    tasks = []
    for label, text in prompts:
        for i in range(args.n_seeds):
            name = f"{label}-s{i}"
            tasks.append({
                "name": name, "prompt": text, "out": args.out,
                "backend": args.backend, "endpoint": args.endpoint,
                "model": args.model, "n_frames": args.n_frames,
                "backend_seed": derive_seed(args.seed, label, str(i), "backend"),
            })
    _write_config(args, prompts=tuple(prompts))
    results = _run_tasks(tasks, _generate_one, args.jobs)
    return _manifest(args.out, results)


def _evolve_one(task: dict):
    meta = load_scenario(task["path"])
    if isinstance(meta, AdvScenario):
        meta = meta.meta
    obstacles = tuple(meta.furniture) + ((meta.adversary, meta.adversary_trajectory),)
    flow = generate_background_flow(meta.context, task["flow_n"],
                                    seed=task["flow_seed"],
                                    n_frames=meta.n_frames, dt=meta.dt,
                                    obstacles=obstacles)
    w = LossWeights(lambda1=task["lambda1"], lambda2=task["lambda2"],
                    lambda3=task["lambda3"])
    adv, traces = evolve_with_traces(meta, flow, k=task["k"], ratio=task["ratio"],
                                     gamma=task["gamma"], w=w)
    out = Path(task["out"]) / task["name"]
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(adv, out / "scenario.json")
    for agent_index, trace in traces:
        lines = ["iter,total,l_ego,l_occ,l_smooth"]
        for it, row in enumerate(trace):
            lines.append(f"{it}," + ",".join(f"{v:.9g}" for v in row))
        (out / f"trace-{agent_index}.csv").write_text("\n".join(lines) + "\n")
    if task["dump_graph"]:
        from .perturb import nominal_ego_trajectory

        ego = nominal_ego_trajectory(meta.context.route, meta.n_frames, meta.dt)
        matrix = build_relevance(ego, meta.adversary_trajectory,
                                 [t for _, t in flow], gamma=task["gamma"])
        picks = build_collaborator_set(matrix, k=task["k"], ratio=task["ratio"])
        (out / "graph.txt").write_text(relevance_report(matrix, picks))
    return (task["name"], True, f"{len(adv.perturbations)} perturbations", None)


def cmd_evolve(args) -> int:
    lambda2 = 0.0 if args.no_occlusion_loss else args.lambda2
    tasks = []
    for d in _scenario_dirs(args.in_dir):
        tasks.append({
            "name": d.name, "path": str(d / "scenario.json"), "out": args.out,
            "gamma": args.gamma, "k": args.k, "ratio": args.ratio,
            "lambda1": args.lambda1, "lambda2": lambda2, "lambda3": args.lambda3,
            "flow_n": args.flow_n, "dump_graph": args.dump_graph,
            "flow_seed": derive_seed(args.seed, d.name, "flow"),
        })
    _write_config(args, lambda2=lambda2)
    results = _run_tasks(tasks, _evolve_one, args.jobs)
    return _manifest(args.out, results)


def _as_adv(loaded) -> AdvScenario:
    if isinstance(loaded, MetaScenario):
        return AdvScenario(meta=loaded, backgrounds=(), perturbations=())
    return loaded


def _simulate_one(task: dict):
    adv = _as_adv(load_scenario(task["path"]))
    log = simulate_closed_loop(adv, EgoPolicyConfig(), stage=task["stage"])
    out = Path(task["out"]) / task["name"]
    out.mkdir(parents=True, exist_ok=True)
    (out / "rollout.csv").write_text(rollout_to_csv(log))
    (out / "rollout.txt").write_text(rollout_to_text(log))
    metrics = compute_rollout_metrics(log, adv.meta.context.route, adv.meta.context)
    return (task["name"], True, log.termination, metrics)


def cmd_simulate(args) -> int:
    tasks = [{"name": d.name, "path": str(d / "scenario.json"),
              "out": args.out, "stage": args.stage}
             for d in _scenario_dirs(args.in_dir)]
    _write_config(args)
    results = _run_tasks(tasks, _simulate_one, args.jobs)
    return _manifest(args.out, results)


def cmd_evaluate(args) -> int:
    tasks = [{"name": d.name, "path": str(d / "scenario.json"),
              "out": args.out, "stage": args.stage}
             for d in _scenario_dirs(args.in_dir)]
    _write_config(args)
    results = _run_tasks(tasks, _simulate_one, args.jobs)
    rows = [(name, m) for name, ok, _, m in results if ok and m is not None]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if rows:
        (out / "rollouts.csv").write_text(rollouts_to_csv(rows))
        report = aggregate_suite([m for _, m in rows])
        (out / "report.csv").write_text(report_to_csv({args.stage: report}))
        (out / "report.txt").write_text(report_to_text({args.stage: report}))
        sys.stdout.write(report_to_text({args.stage: report}))
    return _manifest(args.out, results)


def cmd_report(args) -> int:
    reports = {}
    for in_dir in args.in_dirs:
        path = Path(in_dir) / "rollouts.csv"
        if not path.is_file():
            raise FileNotFoundError(f"no rollouts.csv in {in_dir}")
        rows = rollouts_from_csv(path.read_text())
        reports[Path(in_dir).name] = aggregate_suite([m for _, m in rows])
    text = report_to_text(reports)
    sys.stdout.write(text)
    if args.bars:
        for label, rep in reports.items():
            comp = score_components(rep)
            sys.stdout.write(f"{label}: " + "  ".join(
                f"{k}={v:.3f}" for k, v in comp.items()) + "\n")
    if args.out:
        Path(args.out).write_text(report_to_csv(reports))
    return 0


def _write_config(args, **overrides) -> None:
    """Record the effective run configuration next to the outputs."""
    known = {f for f in RunConfig.__dataclass_fields__}
    values = {k: v for k, v in vars(args).items() if k in known and v is not None}
    values.update(overrides)
    values["out_dir"] = args.out
    cfg = RunConfig(**values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())


def _manifest(out_dir: str, results) -> int:
    lines = []
    failures = 0
    for name, ok, message, _ in results:
        status = "ok" if ok else "FAIL"
        if not ok:
            failures += 1
        lines.append(f"{status} {name}: {message}")
    text = "\n".join(lines) + "\n"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(text)
    sys.stdout.write(text)
    return 2 if failures else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"generate": cmd_generate, "evolve": cmd_evolve,
                "simulate": cmd_simulate, "evaluate": cmd_evaluate,
                "report": cmd_report}
    try:
        return handlers[args.command](args)
    except Exception as exc:  # noqa: BLE001 - fatal path
        sys.stderr.write(f"fatal: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
