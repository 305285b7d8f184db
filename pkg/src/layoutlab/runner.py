"""Pipeline orchestration: per-case execution (reason, plan, decode,
validate, score), the parallel benchmark runner, and the refinement
simulator. Every case yields a record; failures never abort a run.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import (
    GenerationBackend,
    GenerationRequest,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    ScriptedBackend,
)
from .dataset import BenchCase, load_dataset
from .decoding import (
    DecodeConfig,
    DecodeReport,
    decode_layout,
    plan_from_constraints,
    validate_layout_against_constraints,
)
from .errors import LayoutLabError
from .geometry import Layout, layout_to_dict, load_layout
from .metrics import (
    CaseRow,
    CountingStats,
    RelationCheck,
    Report,
    SpatialStats,
    aggregate,
    aggregate_spatial,
    counting_metrics,
    layout_counts,
    render_csv,
    render_markdown,
    spatial_accuracy,
)
from .reasoning import (
    ConstraintSet,
    ReasoningRequest,
    ReasoningTask,
    build_reasoning_prompt,
    parse_numerical,
    parse_spatial,
)
from .refinement import (
    DEFAULT_THRESHOLD,
    DenoiserSpec,
    partition_samples,
    run_denoise,
    run_refinement,
    save_trajectory,
    score_objects,
)

logger = logging.getLogger(__name__)

_REASONING_MAX_TOKENS = 128


@dataclass
class RunConfig:
    """Everything a run needs; serialized verbatim into the report."""

    backend: str = "mock"
    script_path: str | None = None
    fixtures_dir: str | None = None
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    exemplar_count: int = 2
    include_negation: bool = True
    enforce_spatial_bucket: bool = False
    max_retries_per_box: int = 3
    coordinate_range: int = 512
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0
    width: int = 1
    out_dir: str = "out"
    record: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if path.suffix == ".toml":
            import tomllib

            data = tomllib.loads(path.read_text(encoding="utf-8"))
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_dict(data)

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(
            max_retries_per_box=self.max_retries_per_box,
            coordinate_range=self.coordinate_range,
            temperature=self.temperature,
            enforce_spatial_bucket=self.enforce_spatial_bucket,
        )


def build_backend(config: RunConfig) -> GenerationBackend:
    """Construct the configured backend; optionally wrap it for recording."""
    if config.backend == "mock":
        if not config.script_path:
            raise ValueError("mock backend needs script_path (a JSON array of completions)")
        script = json.loads(Path(config.script_path).read_text(encoding="utf-8"))
        backend: GenerationBackend = ScriptedBackend(script)
    elif config.backend == "replay":
        if not config.fixtures_dir:
            raise ValueError("replay backend needs fixtures_dir")
        backend = ReplayBackend(config.fixtures_dir)
    elif config.backend == "remote":
        if not config.endpoint or not config.model:
            raise ValueError("remote backend needs endpoint and model")
        backend = RemoteBackend(endpoint=config.endpoint, model=config.model)
    else:
        raise ValueError(f"unknown backend {config.backend!r}")
    if config.record:
        if not config.fixtures_dir:
            raise ValueError("recording needs fixtures_dir")
        if config.backend != "replay":
            backend = RecordingBackend(backend, config.fixtures_dir)
    return backend


@dataclass
class CaseRecord:
    """Everything produced while running one case."""

    case: BenchCase
    reasoning_answer: str | None = None
    constraints: ConstraintSet | None = None
    decode: DecodeReport | None = None
    constraint_violations: list = field(default_factory=list)
    counting: CountingStats | None = None
    spatial: SpatialStats | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        data: dict = {"case": self.case.to_dict(), "error": self.error}
        if self.reasoning_answer is not None:
            data["reasoning_answer"] = self.reasoning_answer
        if self.constraints is not None:
            data["constraints"] = self.constraints.to_dict()
        if self.decode is not None:
            data["decode"] = self.decode.to_dict()
        data["constraint_violations"] = [v.to_dict() for v in self.constraint_violations]
        if self.counting is not None:
            data["counting"] = dataclasses.asdict(self.counting)
        if self.spatial is not None:
            data["spatial"] = {
                "correct": self.spatial.correct,
                "total": self.spatial.total,
                "checks": [
                    {
                        "relation": check.relation.to_dict(),
                        "predicted": check.predicted.token if check.predicted else None,
                        "correct": check.correct,
                    }
                    for check in self.spatial.checks
                ],
            }
        return data

    def to_row(self) -> CaseRow:
        if self.case.task is ReasoningTask.NUMERICAL:
            stats = self.counting
            return CaseRow(
                case_id=self.case.id,
                task="numerical",
                matched=stats.matched if stats else 0,
                pred_total=stats.pred_total if stats else 0,
                gt_total=stats.gt_total if stats else 0,
                exact=stats.exact if stats else False,
            )
        return CaseRow(
            case_id=self.case.id,
            task="spatial",
            spatial_correct=self.spatial.correct if self.spatial else 0,
            spatial_total=self.spatial.total if self.spatial else len(self.case.gt_relations or ()),
        )


def _failure_stats(case: BenchCase) -> tuple[CountingStats | None, SpatialStats | None]:
    """Zero-matched metrics for a case whose pipeline failed."""
    if case.task is ReasoningTask.NUMERICAL:
        assert case.gt_counts is not None
        return (
            CountingStats(
                matched=0, pred_total=0, gt_total=sum(case.gt_counts.values()), exact=False
            ),
            None,
        )
    assert case.gt_relations is not None
    checks = tuple(
        RelationCheck(relation=rel, predicted=None, correct=False)
        for rel in case.gt_relations
    )
    return None, SpatialStats(checks=checks)


def run_case(
    case: BenchCase,
    config: RunConfig,
    backend: GenerationBackend,
    out_dir: str | Path | None = None,
) -> CaseRecord:
    """Reason, plan, decode, validate, and score a single case.

    Per-case failures are captured in the record; the case still counts
    (zero-matched) in the aggregate.
    """
    record = CaseRecord(case=case)
    artifacts = Path(out_dir) / case.id if out_dir is not None else None
    try:
        request = ReasoningRequest(
            meta_prompt=case.prompt,
            task=case.task,
            exemplar_count=config.exemplar_count,
        )
        prompt = build_reasoning_prompt(request)
        answer = backend.complete(
            GenerationRequest(
                context=prompt,
                stop_tokens=("\n",),
                max_tokens=_REASONING_MAX_TOKENS,
                temperature=config.temperature,
            )
        ).text
        record.reasoning_answer = answer
        if case.task is ReasoningTask.NUMERICAL:
            constraints = ConstraintSet.from_numerical(parse_numerical(answer))
        else:
            constraints = ConstraintSet.from_spatial(parse_spatial(answer))
        record.constraints = constraints

        plan = plan_from_constraints(constraints)
        decode = decode_layout(
            backend,
            case.prompt,
            plan,
            config.decode_config(),
            exemplar_count=config.exemplar_count,
            include_negation=config.include_negation,
        )
        record.decode = decode
        record.constraint_violations = validate_layout_against_constraints(
            decode.layout, constraints
        )

        if case.task is ReasoningTask.NUMERICAL:
            assert case.gt_counts is not None
            record.counting = counting_metrics(layout_counts(decode.layout), case.gt_counts)
        else:
            assert case.gt_relations is not None
            record.spatial = spatial_accuracy(decode.layout, case.gt_relations)
    except LayoutLabError as exc:
        logger.warning("case %s failed: %s", case.id, exc)
        record.error = f"{type(exc).__name__}: {exc}"
        record.counting, record.spatial = _failure_stats(case)

    if artifacts is not None:
        artifacts.mkdir(parents=True, exist_ok=True)
        (artifacts / "record.json").write_text(
            json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if record.decode is not None:
            (artifacts / "layout.json").write_text(
                json.dumps(layout_to_dict(record.decode.layout), indent=2) + "\n",
                encoding="utf-8",
            )
    return record


@dataclass
class BenchOutcome:
    report: Report
    records: list[CaseRecord]
    csv_path: Path | None
    markdown_path: Path | None

    @property
    def had_failures(self) -> bool:
        return any(record.failed for record in self.records)


def build_report(records: list[CaseRecord]) -> Report:
    """Aggregate case records into the four-column report structure."""
    ordered = sorted(records, key=lambda r: r.case.id)
    counting = [r.counting for r in ordered if r.counting is not None]
    spatial = [r.spatial for r in ordered if r.spatial is not None]
    return Report(
        numerical=aggregate(counting) if counting else None,
        spatial=aggregate_spatial(spatial) if spatial else None,
        rows=tuple(record.to_row() for record in ordered),
    )


def run_bench(
    dataset: str | Path | list[BenchCase],
    config: RunConfig,
    backend: GenerationBackend | None = None,
) -> BenchOutcome:
    """Execute every case (in up to config.width threads) and write reports.

    Aggregates are order independent: records are sorted by case id before
    aggregation, so any parallelism width yields identical output files.
    """
    cases = load_dataset(dataset) if isinstance(dataset, (str, Path)) else dataset
    backend = backend if backend is not None else build_backend(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if config.width <= 1:
        records = [run_case(case, config, backend, out_dir) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=config.width) as pool:
            records = list(
                pool.map(lambda case: run_case(case, config, backend, out_dir), cases)
            )

    report = build_report(records)
    csv_path = out_dir / "cases.csv"
    csv_path.write_text(render_csv(report), encoding="utf-8")
    markdown_path = out_dir / "summary.md"
    markdown_path.write_text(render_markdown(report, config.to_json()), encoding="utf-8")
    (out_dir / "run_config.json").write_text(config.to_json() + "\n", encoding="utf-8")
    return BenchOutcome(
        report=report, records=records, csv_path=csv_path, markdown_path=markdown_path
    )


def simulate(
    layout_path: str | Path,
    config: RunConfig,
    sabotage_index: int | None = None,
    spec: DenoiserSpec | None = None,
) -> dict:
    """Run the two-round refinement end to end on a layout file.

    Writes round-1/round-2 trajectory dumps, the mask, the partition, and
    the final grid under config.out_dir, and returns a summary dict.
    """
    layout = load_layout(layout_path)
    spec = spec if spec is not None else DenoiserSpec()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    round1_spec = spec
    if sabotage_index is not None:
        if not 0 <= sabotage_index < len(layout.objects):
            raise ValueError(f"sabotage index {sabotage_index} outside the layout")
        name = layout.objects[sabotage_index].name
        overrides = dict(spec.target_overrides)
        overrides[name] = 0.0
        round1_spec = dataclasses.replace(spec, target_overrides=overrides)

    trajectory = run_denoise(round1_spec, layout, config.seed)
    save_trajectory(trajectory, out_dir / "round1.npz")
    scores = score_objects(trajectory.final, layout)
    partition = partition_samples(scores, config.threshold)
    result = run_refinement(spec, trajectory, partition, layout)

    np.save(out_dir / "mask.npy", result.mask)
    np.save(out_dir / "final.npy", result.final)
    if result.trajectory is not None:
        save_trajectory(result.trajectory, out_dir / "round2.npz")
    summary = {
        "scores": [
            {"object_index": s.object_index, "score": round(s.score, 6)} for s in scores
        ],
        "threshold": partition.threshold,
        "easy": sorted(partition.easy),
        "hard": sorted(partition.hard),
        "second_round_skipped": result.skipped,
        "sabotage_index": sabotage_index,
        "seed": config.seed,
    }
    (out_dir / "partition.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary
