"""Failure prediction trained on artificial, anonymous binary data."""
from .classifier import (
    INVALID,
    FailureClassifier,
    MLPArchitecture,
    Prediction,
    TrainConfig,
    TrainedModel,
    evaluate,
    forward,
    gradient_check,
    predict,
    train,
)
from .prioritize import (
    FailurePrioritizer,
    ShapePreservingFilter,
    principal_eigenvector,
    prioritized_argmax,
    shape_filter,
)
from .schema import (
    EventSchema,
    FailureCatalog,
    FailureSignature,
    invalid_label,
    is_valid_signature,
    label_for,
    random_catalog,
)
from .synth import Dataset, FeatureMapper, MappingTable, build_dataset

__version__ = "0.1.0"
