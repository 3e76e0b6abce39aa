"""Throughput prediction for large wide-area file transfers.

Univariate predictors work on the transfer log alone; fusion predictors regress
transfer throughput on periodic network probes and disk load after aligning
and gap-filling the three streams. :mod:`.evaluation` scores both families
with a walk-forward protocol.
"""

from .errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateFitError,
    InputError,
    InsufficientDataError,
    InsufficientHistoryError,
    ParseError,
    ValidationError,
    XferPredictError,
)
from .evaluation import (
    AccuracyTriplet,
    EvaluationReport,
    accuracy_triplet,
    correlation,
    correlation_confidence,
    error_confidence,
    evaluate_suite,
    normalized_error,
    rank_correlation,
    rank_predictors,
)
from .fusion import (
    STANDARD_FUSION_CONFIGS,
    FillStrategy,
    FusionConfig,
    RegressionModel,
    fill,
    fit_regression,
    match_streams,
    predict_regression,
    walk_forward_fuse,
)
from .synth import SynthConfig, generate_traces
from .traces import (
    DiskRecord,
    ProbeRecord,
    SizeClass,
    TraceSet,
    TransferRecord,
    classify_size,
    compute_bandwidth,
    parse_disk_log,
    parse_probe_log,
    parse_transfer_log,
)
from .univariate import CATALOG, History, PredictorSpec, fit_ar, predict_mean, predict_median, run_predictor

__version__ = "0.1.0"
