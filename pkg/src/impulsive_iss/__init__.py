"""Stability certificates and numerical checks for impulsive systems.

Impulsive systems flow as ``x' = f(t, x, u)`` between impulse times and jump
as ``x(tau) = g(tau, x(tau^-), u(tau))`` at them.  When ``f`` and ``g`` split
into a linear part plus a perturbation with an affine-in-state bound, an
exponential envelope on the linear part's transition matrix yields explicit
(integral) input-to-state stability constants.
"""

__version__ = "0.1.0"

from .certificates import (
    IissPart,
    IssReport,
    LocalStabilityReport,
    adt_strengthen,
    certify,
    iiss_certificate,
    iss_small_input,
    iss_unrestricted,
    local_linearization,
    perturbed_envelope,
)
from .errors import (
    ArgumentError,
    ConfigurationError,
    EscapeError,
    HorizonError,
    ImpulsiveISSError,
    NotExponentiallyStableError,
    PreconditionError,
    ThresholdError,
    WrongVariantError,
)
from .gswl import (
    GswlSystem,
    PerturbationBound,
    Trajectory,
    simulate,
    theta_budget,
    theta_budgets,
    validate_decomposition,
)
from .linear_core import (
    AffineDriving,
    Certificate,
    LinearImpulsiveSystem,
    MatrixFunction,
    estimate_envelope,
    semigroup_check,
    transition_matrix,
    variation_of_constants,
)
from .switched import SwitchedSystem, SwitchingSignal, cast_to_gswl, switched_certify
from .timebase import (
    DwellClass,
    ImpulseSequence,
    InputSignal,
    KFunction,
    check_dwell_class,
    count_impulses,
    harmonic_sequence,
    periodic_sequence,
    sigma_rho_norm,
    sup_norm,
)
from .verify import (
    BoundCheck,
    check_iiss_bound,
    check_iss_bound,
    construct_selection,
    example1_divergence,
    gronwall_check,
    monte_carlo_iss,
    reflection_map,
)

__all__ = [
    "__version__",
    "adt_strengthen",
    "AffineDriving",
    "ArgumentError",
    "BoundCheck",
    "cast_to_gswl",
    "Certificate",
    "certify",
    "check_dwell_class",
    "check_iiss_bound",
    "check_iss_bound",
    "ConfigurationError",
    "construct_selection",
    "count_impulses",
    "DwellClass",
    "EscapeError",
    "estimate_envelope",
    "example1_divergence",
    "gronwall_check",
    "GswlSystem",
    "harmonic_sequence",
    "HorizonError",
    "iiss_certificate",
    "IissPart",
    "ImpulseSequence",
    "ImpulsiveISSError",
    "InputSignal",
    "iss_small_input",
    "iss_unrestricted",
    "IssReport",
    "KFunction",
    "LinearImpulsiveSystem",
    "local_linearization",
    "LocalStabilityReport",
    "MatrixFunction",
    "monte_carlo_iss",
    "NotExponentiallyStableError",
    "periodic_sequence",
    "PerturbationBound",
    "perturbed_envelope",
    "PreconditionError",
    "reflection_map",
    "semigroup_check",
    "sigma_rho_norm",
    "simulate",
    "sup_norm",
    "switched_certify",
    "SwitchedSystem",
    "SwitchingSignal",
    "theta_budget",
    "theta_budgets",
    "ThresholdError",
    "Trajectory",
    "transition_matrix",
    "validate_decomposition",
    "variation_of_constants",
    "WrongVariantError",
]
