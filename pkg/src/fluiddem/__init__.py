"""Monte Carlo and exact analysis of fluid (liquid) democracy delegation mechanisms.

The package samples delegation instances (competence vectors plus delegation
graphs) under parametric mechanism families, computes exact and Monte Carlo
probabilities that weighted fluid voting and direct majority voting each pick
the better of two alternatives, and provides the reference stochastic
processes (urn growth, graph branching, multi-type Poisson branching) used to
bound concentration of delegated power empirically.
"""

__version__ = "0.1.0"

from .distributions import (
    Uniform,
    TruncatedBeta,
    PiecewiseLinearDensity,
    sample,
    mean,
    interval_mass,
    nondelegator_mean,
)
from .mechanisms import (
    Upward,
    ConfidenceBased,
    GeneralContinuous,
    ConstantQ,
    LinearQ,
    PiecewiseLinearQ,
    Indicator,
    Constant1,
    AffineInY,
    ExpInY,
    TabulatedPhi,
    delegation_probability,
    pair_weight,
    normalize_phi,
    phi_bounds,
)
from .delegation_graph import DelegationGraph, WeightProfile, sample_graph, compute_weights, stats
from .tally import (
    GainReport,
    weighted_poisson_binomial_tail,
    direct_tail,
    brute_force_tail,
    exact_gain,
    brute_force_gain,
    monte_carlo_gain,
)
from .streams import substream
