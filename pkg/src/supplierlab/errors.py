"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    """A structural parameter violates its admissible range.

    ``violations`` holds every ``(name, value, constraint)`` triple found, the
    first of which is also exposed as ``name``/``value``/``constraint``.
    """

    def __init__(self, name, value, constraint, violations=None):
        self.name = name
        self.value = value
        self.constraint = constraint
        self.violations = list(violations or [(name, value, constraint)])
        msg = "; ".join(f"{n}={v!r} violates {c}" for n, v, c in self.violations)
        super().__init__(msg)


class DomainError(ValueError):
    pass


class Unbounded(ArithmeticError):
    """The profit objective increases without bound."""


class NonMonotoneGain(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class NoBaseYear(LookupError):
    pass


class SpecError(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, msg, iterations=None, max_change=None):
        super().__init__(msg)
        self.iterations = iterations
        self.max_change = max_change


class RankDeficient(ArithmeticError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"regressors are collinear after demeaning: {self.columns}")


class DegenerateClusters(ValueError):
    pass


class MissingLookup(LookupError):
    pass
