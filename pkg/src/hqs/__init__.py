"""Hidden quantum state model: deterministic outcome selection from a standard
state and a random hidden state, with seeded Monte Carlo experiments."""

from .hilbert import (
    OutcomeDistribution,
    ProjectiveMeasurement,
    StateVector,
    born_probabilities,
    inner_product,
    tensor_measurement,
    tensor_state,
)
from .sampling import (
    FixedState,
    FullRefresh,
    HaarUniform,
    HiddenSource,
    Mixture,
    Persistent,
    ProductHaar,
    RandomStream,
    refresh_hidden,
    sample_haar,
    sample_hidden,
)
from .selector import (
    AnalyticHaar,
    EmpiricalQuantile,
    SelectionTrace,
    haar_threshold_first,
    haar_threshold_schedule,
    select_outcome,
    sort_descending,
)

__version__ = "0.1.0"
