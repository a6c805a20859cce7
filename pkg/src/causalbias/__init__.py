"""Closed-form causal biases in discrimination estimates, with exact and Monte Carlo oracles."""

__version__ = "0.1.0"

from .closed_forms import (
    ConcurrentSpec,
    ConfoundParams,
    MeasurementParams,
    SelectionParams,
    concurrent_bias,
    conf_bias_binary,
    conf_bias_binary_balanced,
    effect_restoration_do,
    int_bias_individual,
    int_bias_intersectional,
    meas_bias_binary,
    meas_bias_binary_restored,
    sel_bias_binary,
    sel_bias_binary_general,
)
from .errors import (
    CausalBiasError,
    CollinearityError,
    GraphParseError,
    InputError,
    ParameterError,
    PositivityError,
    StructureError,
)
from .estimators import BinaryBiasAuditor, LinearBiasAuditor, OLSRegression
from .graph import (
    CausalGraph,
    classify_structure,
    d_separated,
    load_graph,
    parse_graph,
    validate,
    wright_covariance,
    wright_variance,
)
from .linear import (
    CovMatrix,
    InteractionLinearSpec,
    PathModel,
    beta,
    beta_partial1,
    beta_partial2,
    conf_bias_linear,
    conf_bias_two,
    int_bias_linear,
    meas_bias_linear,
    ols_fit,
    sample_moments,
    sel_bias_linear,
    standardize,
)
from .scm import ScmSpec, SweepGrid, enumerate_joint, simulate, sweep
from .tables import JointTable, cond_prob, from_samples, stat_disp, stat_disp_adjusted
