"""Exception hierarchy shared by the solver, synthesis and simulation layers."""


class LeqgError(Exception):
    """Base class for all package errors."""


class SpecError(LeqgError, ValueError):
    """A model matrix violates a structural requirement.

    ``field`` names the offending entry (``"R"``, ``"system.Q"``, ...).
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NonDiagonalizable(LeqgError):
    pass


class NoSolution(LeqgError):
    """The Riccati equation has no stabilizing positive definite solution."""


class IllConditioned(LeqgError):
    """The invariant-subspace extraction was too ill-conditioned to trust."""


class ModelAssumptionViolated(LeqgError):
    pass


class AssumptionViolated(LeqgError):
    pass


class EpsilonNotZero(AssumptionViolated):
    pass


class ThetaAboveCritical(LeqgError):
    def __init__(self, theta, n, reason="", theta_star=None):
        self.theta = theta
        self.n = n
        self.theta_star = theta_star
        msg = f"theta={theta:g} is at or above the critical value for n={n}"
        if theta_star is not None:
            msg += f" (critical value ~ {theta_star:.6g})"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DestabilizingController(LeqgError):
    """The Riccati solution exists but ``A_n - B_n K`` is not Hurwitz.

    Can happen for strongly risk-seeking ``theta < 0``, where the stabilized
    matrix ``A - S X`` includes the fictitious ``|theta| W`` term.
    """


class NumericalBlowup(LeqgError):
    def __init__(self, t, norm):
        self.t = t
        self.norm = norm
        super().__init__(f"state norm {norm:.3g} exceeded the overflow guard at t={t:.6g}")


class EstimatorOverflow(LeqgError):
    def __init__(self, max_exponent):
        self.max_exponent = max_exponent
        super().__init__(f"exponent out of floating range (max exponent seen: {max_exponent!r})")


class SigmaExceedsY(UserWarning):
    """Initial covariance is not dominated by the filter solution."""
