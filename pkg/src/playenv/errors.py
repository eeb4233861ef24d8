"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EngineError, ValueError):
    """An argument violates an operation's precondition."""


class NoIntersectionError(DomainError):
    """A ray does not reach the requested surface."""


class SceneValidationError(DomainError):
    """A scene description is structurally invalid; lists every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scene: " + "; ".join(self.violations))
