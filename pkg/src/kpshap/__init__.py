"""Game-theoretic attribution for multi-keypoint black-box predictors.

The pipeline: perturbation drops -> pairwise interdependency -> keypoint
groups -> coarse-to-fine Shapley attribution -> group-aware erasing plans.
"""

from .analysis import (
    ConfidenceTable,
    CorrelationResult,
    confidence_correlation,
    read_confidence_csv,
    read_matrix_csv,
    render_heatmap,
    write_confidence_csv,
    write_matrix_csv,
)
from .errors import (
    DataError,
    KpshapError,
    MissingCoalitionError,
    OracleError,
    SchemaError,
)
from .gkr import (
    EraseRect,
    ErasePlan,
    GkrConfig,
    PersonAnnotation,
    ReConfig,
    apply_plan,
    bucket_for,
    default_scales,
    occlusion_ratio,
    occlusion_stats,
    parse_annotations,
    plan_gkr,
    plan_random_erasing,
    read_plans,
    write_plans,
)
from .grouping import (
    DEFAULT_GROUPS,
    DEFAULT_LINKAGE,
    LINKAGES,
    Grouping,
    cluster,
    interdependency,
)
from .images import load_image, read_png, read_ppm, save_image, write_png, write_ppm
from .manifest import RunManifest, build_manifest, sha256_file, write_manifest
from .oracle import (
    ALL_INSTANCES,
    Coalition,
    CoalitionValueOracle,
    CountingOracle,
    ExternalOracle,
    SyntheticModelConfig,
    SyntheticOracle,
    TabularOracle,
    load_tabular_oracle,
    make_synthetic_oracle,
    serve,
    write_oracle_table,
)
from .perturb import (
    DeltaMatrix,
    MaskSpec,
    delta_perf_matrix,
    gen_masks,
    oracle_table_from_delta,
    perturbation_influence,
    read_delta_csv,
    write_delta_csv,
)
from .rng import derive_key, generator, mix64
from .shapley import (
    MAX_PLAYERS,
    AttributionReport,
    QueryBudget,
    ShapleyTable,
    combined_attribution,
    exact_query_count,
    exact_shapley,
    group_shapley,
    intra_group_shapley,
    normalize_nonneg,
    query_count,
    read_game_csv,
    run_group_attribution,
    sampled_shapley,
    write_game_csv,
)
from .skeleton import (
    KeypointSchema,
    Skeleton,
    canonical_name,
    default_schema,
    keypoint_connectivity,
    load_schema,
    schema_digest,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_INSTANCES",
    "AttributionReport",
    "Coalition",
    "CoalitionValueOracle",
    "ConfidenceTable",
    "CorrelationResult",
    "CountingOracle",
    "DEFAULT_GROUPS",
    "DEFAULT_LINKAGE",
    "DataError",
    "DeltaMatrix",
    "EraseRect",
    "ErasePlan",
    "ExternalOracle",
    "GkrConfig",
    "Grouping",
    "KeypointSchema",
    "KpshapError",
    "LINKAGES",
    "MAX_PLAYERS",
    "MaskSpec",
    "MissingCoalitionError",
    "OracleError",
    "PersonAnnotation",
    "QueryBudget",
    "ReConfig",
    "RunManifest",
    "SchemaError",
    "ShapleyTable",
    "Skeleton",
    "SyntheticModelConfig",
    "SyntheticOracle",
    "TabularOracle",
    "apply_plan",
    "bucket_for",
    "build_manifest",
    "canonical_name",
    "cluster",
    "combined_attribution",
    "confidence_correlation",
    "default_scales",
    "default_schema",
    "delta_perf_matrix",
    "derive_key",
    "exact_query_count",
    "exact_shapley",
    "gen_masks",
    "generator",
    "group_shapley",
    "interdependency",
    "intra_group_shapley",
    "keypoint_connectivity",
    "load_image",
    "load_schema",
    "load_tabular_oracle",
    "make_synthetic_oracle",
    "mix64",
    "normalize_nonneg",
    "occlusion_ratio",
    "occlusion_stats",
    "oracle_table_from_delta",
    "parse_annotations",
    "perturbation_influence",
    "plan_gkr",
    "plan_random_erasing",
    "query_count",
    "read_confidence_csv",
    "read_delta_csv",
    "read_game_csv",
    "read_matrix_csv",
    "read_plans",
    "read_png",
    "read_ppm",
    "render_heatmap",
    "run_group_attribution",
    "sampled_shapley",
    "save_image",
    "schema_digest",
    "serve",
    "sha256_file",
    "write_confidence_csv",
    "write_delta_csv",
    "write_game_csv",
    "write_manifest",
    "write_matrix_csv",
    "write_oracle_table",
    "write_plans",
    "write_png",
    "write_ppm",
]
