class GilbertError(Exception):
    """Base class for toolkit errors."""


class ParameterError(GilbertError, ValueError):
    pass


class CapacityError(GilbertError):
    pass


class EmptyDomainError(GilbertError, ValueError):
    pass


class InfiniteMeanError(GilbertError, ValueError):
    """Raised when s <= d makes the in-degree infinite almost surely."""


class EstimationError(GilbertError, ValueError):
    pass


class ConfigError(GilbertError, ValueError):
    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class FormatError(GilbertError, ValueError):
    pass
