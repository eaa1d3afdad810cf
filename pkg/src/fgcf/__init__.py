"""Factor-graph collaborative filtering.

Users and movies carry hidden groups; a rating depends only on the pair of
groups through a kernel ``w(r|u,v)``.  The package provides the model and a
synthetic sampler, the IMP message-passing learner, a variational EM
learner, VDVQ initialization, density evolution, a generalization bound
and a cold-start evaluation harness.
"""

from .errors import DataError, DegeneracyError, FgcfError, ModelFormatError, ParameterError
from .model import (GroupModel, ObservationSet, SyntheticTruth, load_model, read_dataset,
                    sample_synthetic, save_model, validate_model, write_dataset)

__version__ = "0.1.0"

__all__ = [
    "DataError", "DegeneracyError", "FgcfError", "ModelFormatError", "ParameterError",
    "GroupModel", "ObservationSet", "SyntheticTruth", "load_model", "read_dataset",
    "sample_synthetic", "save_model", "validate_model", "write_dataset", "__version__",
]
