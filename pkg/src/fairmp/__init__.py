"""Fair message passing on graphs.

Propagation as optimization: normalized aggregation for smoothness, a
primal-dual scheme with an l-infinity-projected dual for group fairness,
closed-form theory for when plain aggregation amplifies topology bias, and
a desk-scale training pipeline with fairness metrics.
"""

from .errors import FmpError, NumericalError, ValidationError
from .graph import (
    Graph,
    NormalizedAdjacency,
    SensitiveVector,
    build_graph,
    incident_vector,
    label_homophily,
    laplacian,
    normalized_adjacency,
    sensitive_homophily,
    spmm,
)
from .metrics import (
    FittedGaussians,
    MetricsRecord,
    bias_surrogate,
    delta_bias_empirical,
    demographic_parity,
    dp_gap_vector,
    equal_opportunity,
    fit_group_gaussians,
    gaussian_kl,
)
from .propagation import (
    FmpConfig,
    FmpTrajectory,
    appnp_step,
    fairness_energy,
    fmp_forward,
    fmp_gradient,
    fmp_gradient_oracle,
    gcn_aggregate,
    prox_linf,
    smoothness_energy,
    softmax_rows,
)
from .synth import (
    AggregatedGmm,
    GmmParams,
    SbmParams,
    bias_enhance_condition,
    conn_probs,
    expected_aggregated_gmm,
    sample_gmm_features,
    sample_sbm,
)
from .training import (
    MlpParams,
    TrainConfig,
    evaluate,
    forward_pipeline,
    split_nodes,
    train,
)

__version__ = "0.1.0"
