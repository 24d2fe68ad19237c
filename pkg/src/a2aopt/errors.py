"""Exception hierarchy shared by all modules."""


class A2AError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(A2AError, ValueError):
    """Bad shapes, ranges or enum values."""


class DegenerateInputError(A2AError, ValueError):
    """Input is valid in form but makes the operation meaningless (zero vector, Δ = 0)."""


class NotPSDError(A2AError, ValueError):
    pass


class InfeasibleAngleError(A2AError, ValueError):
    pass


class SingularSystemError(A2AError, ArithmeticError):
    pass


class BlindDirectionError(A2AError, ArithmeticError):
    """S_W + S_U is singular: some direction of Δ is invisible to both agents."""


class BlindAttackError(A2AError, ValueError):
    """S_W·Δ = 0, so the spike direction of the attack is undefined."""


class InfeasibleAttackError(A2AError, ValueError):
    """Δ is an eigenvector of S_W with eigenvalue 1/η; try a different step size."""


class DivergenceError(A2AError, ArithmeticError):
    def __init__(self, message: str, turn: int):
        super().__init__(f"{message} (turn {turn})")
        self.turn = turn


class TrainingDivergedError(A2AError, ArithmeticError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class BackendError(A2AError, RuntimeError):
    """An agent backend failed; carries the half-step index where it happened."""

    def __init__(self, message: str, turn: int):
        super().__init__(f"{message} (half-step {turn})")
        self.turn = turn


class ParseFailureError(A2AError, RuntimeError):
    def __init__(self, message: str, last_body: str | None = None, attempts: int = 0):
        super().__init__(message)
        self.last_body = last_body
        self.attempts = attempts


class TransportError(A2AError, RuntimeError):
    pass


class StatusError(A2AError, RuntimeError):
    def __init__(self, status: int, body: str):
        super().__init__(f"endpoint returned HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class ConfigError(A2AError, ValueError):
    pass
