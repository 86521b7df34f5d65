"""Exception hierarchy shared by every module of the package."""


class RiskCertError(Exception):
    """Base class for all errors raised by riskcert."""

    code = "error"


class InvalidInputError(RiskCertError, ValueError):
    code = "invalid-input"


class NotContractiveError(RiskCertError, ValueError):
    """Raised when a certificate needs ``||A|| < 1`` and the matrix is not contractive."""

    code = "not-contractive"


class InfeasibleAlphaError(RiskCertError, ValueError):
    code = "infeasible-alpha"


class InfeasibleRadiusError(RiskCertError, ValueError):
    """The requested radius does not satisfy the radius condition of a threshold rule."""

    code = "infeasible-radius"


class WrongKindError(RiskCertError, ValueError):
    """A certificate was requested for a system of the wrong kind (with/without inputs)."""

    code = "wrong-kind"
