"""layoutlab: constrained layout decoding from text-derived constraints,
two-round latent refinement on a deterministic toy denoiser, and a
grounding-metric benchmark harness.
"""

from .backends import (
    GenerationBackend,
    GenerationRequest,
    GenerationResponse,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    ReplayStore,
    ScriptedBackend,
    record_fixture,
    request_key,
)
from .dataset import BenchCase, case_from_dict, load_dataset, save_dataset
from .decoding import (
    ControlPrefix,
    DecodeConfig,
    DecodeReport,
    PrefixPlan,
    Violation,
    build_numeric_prefixes,
    build_planning_prompt,
    build_spatial_prefixes,
    decode_layout,
    parse_box_line,
    plan_from_constraints,
    validate_layout_against_constraints,
)
from .errors import (
    BackendUnavailable,
    DegenerateBox,
    DimensionMismatch,
    DuplicateId,
    EmptyCrop,
    EmptyInput,
    ExhaustedRetries,
    FixtureMissing,
    LayoutLabError,
    NonEmptyRequired,
    ParseFailure,
    SchemaViolation,
    ScriptExhausted,
)
from .geometry import (
    DEFAULT_CANVAS,
    BoundingBox,
    Layout,
    PlacedObject,
    PositionBucket,
    Relation,
    bucket_of,
    build_layout,
    classify_relation,
    denormalize_box,
    layout_from_dict,
    layout_hash,
    layout_to_dict,
    load_layout,
    normalize_box,
    save_layout,
)
from .metrics import (
    CountingStats,
    Detector,
    GroundTruthRelation,
    Report,
    SpatialStats,
    SummaryRow,
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
    NumericalConstraint,
    ReasoningRequest,
    ReasoningTask,
    SpatialConstraint,
    build_reasoning_prompt,
    canonical_category,
    parse_numerical,
    parse_spatial,
    render_numerical,
    render_spatial,
)
from .refinement import (
    ConsistencyScore,
    DenoiserSpec,
    LatentTrajectory,
    PresetScorer,
    RefinementResult,
    SamplePartition,
    ToyScorer,
    category_target,
    compose_latents,
    initial_noise,
    load_trajectory_dump,
    partition_samples,
    rasterize_mask,
    render_target,
    run_denoise,
    run_refinement,
    save_trajectory,
    score_objects,
    step_noise,
)
from .runner import (
    BenchOutcome,
    CaseRecord,
    RunConfig,
    build_backend,
    build_report,
    run_bench,
    run_case,
    simulate,
)

__version__ = "0.1.0"
