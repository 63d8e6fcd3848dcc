"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to the
documented process exit status without a lookup table.
"""


class InvLQGError(Exception):
    exit_code = 1


class ConfigError(InvLQGError):
    """Malformed or unreadable configuration content."""

    exit_code = 2


class ValidationError(InvLQGError):
    """Parameters violate definiteness, symmetry or dimension requirements."""

    exit_code = 2

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid parameters")


class NumericalError(InvLQGError):
    exit_code = 3


class RiccatiDivergenceError(NumericalError):
    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"Riccati integration diverged at t={t:.6g}")


class SimulationExplosionError(NumericalError):
    def __init__(self, demo, step, t):
        self.demo = demo
        self.step = step
        self.t = t
        super().__init__(
            f"demonstration {demo}: non-finite state at step {step} (t={t:.6g})"
        )


class IdentifiabilityError(InvLQGError):
    exit_code = 4


class AmbiguousIdentificationError(IdentifiabilityError):
    def __init__(self, player, nullity):
        self.player = player
        self.nullity = nullity
        super().__init__(
            f"player {player + 1}: null space has dimension {nullity}, "
            "cost parameters are not identifiable up to scale"
        )


class IndefiniteEstimateError(IdentifiabilityError):
    """Recovered Q or R_ii is indefinite beyond tolerance."""


class DegenerateNoiseError(IdentifiabilityError):
    pass
