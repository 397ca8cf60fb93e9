"""Half-life decay scoring and outdated-fact filtering for temporal KGs."""

from .attention import AttentionConfig
from .dataset import (
    Dataset,
    FactKey,
    FactTimeline,
    Quadruple,
    Vocab,
    build_timelines,
    dataset_from_arrays,
    export,
    ingest,
)
from .encoder import EncoderConfig, LABEL_ACTIVE, LABEL_INACTIVE, derive_labels
from .estimators import FactActivityClassifier, OutdatedFactFilter
from .halflife import (
    HalfLifeModel,
    estimate_half_lives,
    expiration_day,
    keep_mask,
    score_dataset,
    validity,
)
from .synth import SynthSpec, evaluate_filter, generate, sweep, toy_activity_dataset
from .training import (
    FilterReport,
    FilterSettings,
    TrainConfig,
    pipeline_run,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionConfig",
    "Dataset",
    "EncoderConfig",
    "FactActivityClassifier",
    "FactKey",
    "FactTimeline",
    "FilterReport",
    "FilterSettings",
    "HalfLifeModel",
    "LABEL_ACTIVE",
    "LABEL_INACTIVE",
    "OutdatedFactFilter",
    "Quadruple",
    "SynthSpec",
    "TrainConfig",
    "Vocab",
    "build_timelines",
    "dataset_from_arrays",
    "derive_labels",
    "estimate_half_lives",
    "evaluate_filter",
    "expiration_day",
    "export",
    "generate",
    "ingest",
    "keep_mask",
    "pipeline_run",
    "score_dataset",
    "sweep",
    "toy_activity_dataset",
    "train",
    "validity",
    "__version__",
]
