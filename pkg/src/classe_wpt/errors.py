"""Exception types shared across the package."""


class NonPositiveValue(ValueError):
    """One or more parameters that must be strictly positive are not."""

    def __init__(self, fields):
        self.fields = tuple(fields)
        super().__init__("non-positive value for: " + ", ".join(self.fields))

    @property
    def field(self):
        return self.fields[0]


class NonFiniteValue(ValueError):
    def __init__(self, fields):
        self.fields = tuple(fields)
        super().__init__("non-finite value for: " + ", ".join(self.fields))


class ConfigError(ValueError):
    """Malformed or incomplete configuration file."""


class OutOfRange(ValueError):
    pass


class PhaseOutOfRange(OutOfRange):
    pass


class DegenerateOperatingPoint(ValueError):
    """Plant gain vanishes (D0 = 0.25), so controller synthesis is undefined."""


class NoConvergence(RuntimeError):
    def __init__(self, n_cycles, residual=float("nan")):
        self.n_cycles = n_cycles
        self.residual = residual
        super().__init__(
            f"no periodic steady state after {n_cycles} cycles "
            f"(last relative change {residual:.3g})"
        )


class NonFinite(RuntimeError):
    def __init__(self, t, state):
        self.t = t
        self.state = tuple(state)
        super().__init__(f"integration diverged at t={t:.6g}: state={self.state}")
