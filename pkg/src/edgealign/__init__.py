"""Edge label alignment, alternating training, and category-aware benchmarking."""

__version__ = "0.1.0"

from .alignment import (
    BIASED_MRF,
    ISOTROPIC,
    AlignConfig,
    PrecisionMatrix,
    align,
    align_iterates,
    candidate_window,
    mapping_discontinuity,
    pairwise_cost,
    precision_matrix,
    realize_labels,
    unary_cost_biased,
    unary_cost_isotropic,
)
from .assignment import Matching, SparseCostGraph, scale_costs, solve_assignment, verify_matching
from .benchmark import (
    RAW,
    THIN,
    BenchAccumulator,
    BenchConfig,
    PrCurve,
    average_precision,
    correspond,
    dilate_gt,
    label_quality,
    mf_ods,
    pr_accumulate,
    thin,
    to_curves,
)
from .chains import EdgeChains, estimate_tangent, geodesic_neighborhood
from .errors import (
    EdgeAlignError,
    InfeasibleAssignmentError,
    InputFormatError,
    InternalInvariantError,
)
from .estimators import (
    AlternatingEdgeTrainer,
    EdgeLabelAligner,
    check_label_bitfield,
    check_prob_array,
)
from .grids import (
    EdgeLabelMap,
    Mapping,
    MultiLabelMap,
    PixelCoord,
    ProbMap,
    clamp_probs,
    edge_pixels,
    extract_class,
)
from .predictor import TinyConvPredictor
from .training import (
    LossReport,
    PredictorAdapter,
    alternating_step,
    loss_gradient,
    reweighted_ce_loss,
    sigmoid_ce_loss,
)

__all__ = [name for name in dir() if not name.startswith("_")]
