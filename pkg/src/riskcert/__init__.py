"""Worst-case CVaR certificates and risk-aware event-triggered control for linear stochastic systems."""

from .certificates import (
    LinearStochasticSystem,
    RiskCertificate,
    StabilityEnvelope,
    invariance_certificate,
    invariance_certificate_general_alpha,
    one_step_risk_map,
    robust_invariance_certificate,
    robust_ultimate_bound_certificate,
    stability_envelope,
    ultimate_bound_certificate,
)
from .errors import (
    InfeasibleAlphaError,
    InfeasibleRadiusError,
    InvalidInputError,
    NotContractiveError,
    RiskCertError,
    WrongKindError,
)
from .risk import (
    CvarBounds,
    MomentAmbiguitySet,
    QuadraticLoss,
    coherence_check,
    empirical_cvar,
    worst_case_cvar_augmented,
    worst_case_cvar_bounds,
)
from .simulation import (
    DisturbanceSampler,
    EventTriggered,
    NoControl,
    PeriodicFeedback,
    Plant,
    ensemble,
    rollout,
)
from .triggers import (
    ClosedLoopSystem,
    TriggerPolicy,
    should_trigger,
    sigma1_max,
    sigma2_max,
    sigma3_max,
    sigma4_max,
)

__version__ = "0.1.0"
