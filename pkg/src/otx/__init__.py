"""Online empirical optimal transport between high-dimensional laws."""

from .core import (
    BudgetExhaustedError,
    ConfigurationError,
    CostSample,
    CostSpec,
    DivergenceUndefinedError,
    HammingCost,
    InternalInconsistencyError,
    LpCost,
    OTError,
    RejectedInputError,
    RngStream,
    TabulatedCost,
    UnsupportedCapabilityError,
    empirical_bound,
    eval_cost,
    moment_constant,
    small_delta,
    talagrand_bound,
    wasserstein_p_cost,
)
from .dist1d import Empirical, Finite, Gaussian, TruncatedGaussian, Uniform, kl_divergence
from .ot1d import cdf_transport, empirical_transport_cost, hungarian_match, monotone_match, ot_cost_1d
from .seqsampler import (
    ConditionedSampler,
    CostLedger,
    FiniteSampler,
    HalfSpace,
    ProductSampler,
    conditioned_sampler,
    finite_sampler,
    full_sample,
    product_sampler,
)
from .transporter import OnlineTransporter, compose, concentrate, set_transport

__version__ = "0.1.0"
