"""Daily intersection flow profiles: low-rank models, partial-day prediction,
time-of-day segmentation, and a predictive switching controller with
delay-based evaluation."""

__version__ = "0.1.0"

from .flowdata import (
    DayRecord,
    FlowDataset,
    CenteredMatrix,
    SplitSpec,
    ValidationError,
    load_csv,
    load_dataset,
    save_dataset,
    filter_days,
    mean_profile,
    center,
    split_at,
    vector_to_grid,
    grid_to_vector,
)
from .lowrank import PcaModel, fit_pca, explained_variance, project, reconstruct
from .pls import PlsModel, fit_pls, fit_pls_kernel, predict, loocv
from .segmentation import (
    FitConfig,
    SegmentationPlan,
    fit_value,
    segment_cost,
    cost_table,
    optimal_segmentation,
)
from .controller import (
    ControllerMode,
    ControllerConfig,
    PlsModelBank,
    FixedProfileBank,
    PredictivePlan,
    segment_window,
    t_opt,
    build_model_bank,
    run_controller,
)
from .delay import (
    IntersectionConfig,
    GreenSplits,
    DelayTrace,
    DelayReport,
    movement_delay,
    green_splits,
    simulate_day,
    lower_bound_delay,
)
from .synth import SynthConfig, SynthTruth, generate

__all__ = [
    "__version__",
    "DayRecord",
    "FlowDataset",
    "CenteredMatrix",
    "SplitSpec",
    "ValidationError",
    "load_csv",
    "load_dataset",
    "save_dataset",
    "filter_days",
    "mean_profile",
    "center",
    "split_at",
    "vector_to_grid",
    "grid_to_vector",
    "PcaModel",
    "fit_pca",
    "explained_variance",
    "project",
    "reconstruct",
    "PlsModel",
    "fit_pls",
    "fit_pls_kernel",
    "predict",
    "loocv",
    "FitConfig",
    "SegmentationPlan",
    "fit_value",
    "segment_cost",
    "cost_table",
    "optimal_segmentation",
    "ControllerMode",
    "ControllerConfig",
    "PlsModelBank",
    "FixedProfileBank",
    "PredictivePlan",
    "segment_window",
    "t_opt",
    "build_model_bank",
    "run_controller",
    "IntersectionConfig",
    "GreenSplits",
    "DelayTrace",
    "DelayReport",
    "movement_delay",
    "green_splits",
    "simulate_day",
    "lower_bound_delay",
    "SynthConfig",
    "SynthTruth",
    "generate",
]
