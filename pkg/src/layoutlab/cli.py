"""Command-line surface.

Verbs: reason, plan, pipeline, eval-layout, simulate, bench.
Exit codes: 0 success, 1 fatal config or IO error, 2 completed with
per-case failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import GenerationRequest
from .dataset import case_from_dict
from .decoding import (
    decode_layout,
    plan_from_constraints,
    validate_layout_against_constraints,
)
from .errors import LayoutLabError
from .geometry import layout_to_dict, load_layout, save_layout
from .metrics import counting_metrics, layout_counts, spatial_accuracy
from .reasoning import (
    ConstraintSet,
    ReasoningRequest,
    ReasoningTask,
    build_reasoning_prompt,
    parse_numerical,
    parse_spatial,
)
from .runner import RunConfig, build_backend, run_bench, simulate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_CASE_FAILURES = 2


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="RunConfig file (JSON or TOML)")
    parser.add_argument("--backend", choices=["mock", "replay", "remote"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--script", help="mock backend script (JSON array of completions)")
    parser.add_argument("--fixtures", help="replay fixture directory")


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.backend:
        config.backend = args.backend
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.out_dir = args.out
    if args.script:
        config.script_path = args.script
    if args.fixtures:
        config.fixtures_dir = args.fixtures
    return config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutlab",
        description=(
            "Constrained layout decoding, toy-denoiser refinement, and"
            " grounding-metric benchmarking."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_reason = sub.add_parser("reason", help="build the reasoning prompt / parse the answer")
    p_reason.add_argument("--task", required=True, choices=["numerical", "spatial"])
    p_reason.add_argument("--prompt", required=True)
    p_reason.add_argument("--exemplars", type=int, default=2)
    p_reason.add_argument("--dry-run", action="store_true", help="print the prompt and stop")
    _common_flags(p_reason)

    p_plan = sub.add_parser("plan", help="turn a constraint JSON into a prefix plan")
    p_plan.add_argument("--constraints", required=True, help="constraint JSON file")
    _common_flags(p_plan)

    p_pipe = sub.add_parser("pipeline", help="prompt to layout (reason + plan + decode)")
    p_pipe.add_argument("--task", required=True, choices=["numerical", "spatial"])
    p_pipe.add_argument("--prompt", required=True)
    _common_flags(p_pipe)

    p_eval = sub.add_parser("eval-layout", help="score a layout file against a case")
    p_eval.add_argument("--layout", required=True)
    p_eval.add_argument("--case", required=True, help="one BenchCase as a JSON file")
    _common_flags(p_eval)

    p_sim = sub.add_parser("simulate", help="two-round refinement on the toy denoiser")
    p_sim.add_argument("--layout", required=True)
    p_sim.add_argument("--threshold", type=float)
    p_sim.add_argument("--sabotage", type=int, help="object index whose round-1 target is zeroed")
    _common_flags(p_sim)

    p_bench = sub.add_parser("bench", help="run a JSONL dataset end to end")
    p_bench.add_argument("--dataset", required=True)
    p_bench.add_argument("--width", type=int, help="parallel case workers")
    _common_flags(p_bench)

    return parser


def _cmd_reason(args: argparse.Namespace, config: RunConfig) -> int:
    request = ReasoningRequest(
        meta_prompt=args.prompt,
        task=ReasoningTask.from_token(args.task),
        exemplar_count=args.exemplars,
    )
    prompt = build_reasoning_prompt(request)
    if args.dry_run:
        print(prompt)
        return EXIT_OK
    backend = build_backend(config)
    answer = backend.complete(
        GenerationRequest(context=prompt, stop_tokens=("\n",), max_tokens=128)
    ).text
    if request.task is ReasoningTask.NUMERICAL:
        constraints = ConstraintSet.from_numerical(parse_numerical(answer))
    else:
        constraints = ConstraintSet.from_spatial(parse_spatial(answer))
    print(json.dumps(constraints.to_dict(), indent=2))
    return EXIT_OK


def _cmd_plan(args: argparse.Namespace, config: RunConfig) -> int:
    constraints = ConstraintSet.from_dict(
        json.loads(Path(args.constraints).read_text(encoding="utf-8"))
    )
    plan = plan_from_constraints(constraints)
    print(json.dumps(plan.to_dict(), indent=2))
    return EXIT_OK


def _cmd_pipeline(args: argparse.Namespace, config: RunConfig) -> int:
    backend = build_backend(config)
    task = ReasoningTask.from_token(args.task)
    request = ReasoningRequest(
        meta_prompt=args.prompt, task=task, exemplar_count=config.exemplar_count
    )
    answer = backend.complete(
        GenerationRequest(
            context=build_reasoning_prompt(request), stop_tokens=("\n",), max_tokens=128
        )
    ).text
    if task is ReasoningTask.NUMERICAL:
        constraints = ConstraintSet.from_numerical(parse_numerical(answer))
    else:
        constraints = ConstraintSet.from_spatial(parse_spatial(answer))
    plan = plan_from_constraints(constraints)
    report = decode_layout(
        backend,
        args.prompt,
        plan,
        config.decode_config(),
        exemplar_count=config.exemplar_count,
        include_negation=config.include_negation,
    )
    violations = validate_layout_against_constraints(report.layout, constraints)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_layout(report.layout, out_dir / "layout.json")
    (out_dir / "decode_report.json").write_text(
        json.dumps(
            {
                "decode": report.to_dict(),
                "constraint_violations": [v.to_dict() for v in violations],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(json.dumps(layout_to_dict(report.layout), indent=2))
    return EXIT_OK


def _cmd_eval_layout(args: argparse.Namespace, config: RunConfig) -> int:
    layout = load_layout(args.layout)
    case = case_from_dict(json.loads(Path(args.case).read_text(encoding="utf-8")))
    result: dict = {"case_id": case.id}
    if case.gt_counts is not None:
        stats = counting_metrics(layout_counts(layout), case.gt_counts)
        result.update(
            matched=stats.matched,
            pred_total=stats.pred_total,
            gt_total=stats.gt_total,
            precision=round(stats.precision, 6),
            recall=round(stats.recall, 6),
            f1=round(stats.f1, 6),
            exact=stats.exact,
        )
    else:
        assert case.gt_relations is not None
        stats = spatial_accuracy(layout, case.gt_relations)
        result.update(
            correct=stats.correct,
            total=stats.total,
            accuracy=round(stats.accuracy, 6),
        )
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    if args.threshold is not None:
        config.threshold = args.threshold
    summary = simulate(args.layout, config, sabotage_index=args.sabotage)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace, config: RunConfig) -> int:
    if args.width is not None:
        config.width = args.width
    outcome = run_bench(args.dataset, config)
    print((outcome.markdown_path or Path()).read_text(encoding="utf-8"))
    return EXIT_CASE_FAILURES if outcome.had_failures else EXIT_OK


_COMMANDS = {
    "reason": _cmd_reason,
    "plan": _cmd_plan,
    "pipeline": _cmd_pipeline,
    "eval-layout": _cmd_eval_layout,
    "simulate": _cmd_simulate,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        return _COMMANDS[args.command](args, config)
    except (LayoutLabError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
