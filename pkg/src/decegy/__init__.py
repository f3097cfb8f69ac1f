"""decegy: video decoding energy estimation from bitstream feature counts.

The package covers the full estimation pipeline: codec feature taxonomies,
decode-trace analysis into feature vectors, three energy predictors (the
feature-based linear model and two high-level baselines), least-squares and
trust-region training, and k-fold cross-validation with the mean relative
error metric.
"""

from .dataset import (
    BitstreamRecord,
    Dataset,
    SynthSpec,
    default_count_ranges,
    default_specific_energies,
    export_dataset,
    load_dataset,
    synth_dataset,
)
from .errors import (
    DataValidationError,
    DecegyError,
    FitError,
    IllegalEventError,
    TraceParseError,
)
from .evaluation import (
    BreakdownRow,
    CVReport,
    FoldPartition,
    breakdown_csv,
    breakdown_report,
    breakdown_svg,
    cross_validate,
    make_folds,
    mean_relative_error,
)
from .fitting import (
    CollinearityWarning,
    FitDiagnostics,
    LinearSystem,
    TrustRegionOptions,
    feature_linear_system,
    fit_hl1,
    fit_hl2,
    fit_linear_ls,
    fit_trust_region,
    hl1_residuals_jacobian,
)
from .models import (
    HL1Params,
    HL2Params,
    HighLevelInfo,
    SpecificEnergies,
    category_breakdown,
    load_params,
    params_from_json,
    params_to_json,
    predict_feature_model,
    predict_hl1,
    predict_hl2,
    save_params,
)
from .taxonomy import (
    BLOCK_SIZES,
    Category,
    Codec,
    EntropyMode,
    FeatureId,
    FeatureSet,
    FeatureVector,
    Kind,
    build_feature_set,
    counted_sizes,
    feature_category,
    validate_vector,
)
from .trace import (
    Coefficient,
    DecodeTrace,
    FrameStart,
    InterBlock,
    IntraBlock,
    SaoBlock,
    TransformBlock,
    analyze,
    coeff_value_contribution,
    map_inter_block,
    parse_trace,
    pel_and_frac_counts,
)

__version__ = "0.1.0"
