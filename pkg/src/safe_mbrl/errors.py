import numpy as np


class ContractViolation(ValueError):
    """Raised when an argument breaks an operation's precondition."""


class SafetyViolation(RuntimeError):
    """Raised when a barrier is evaluated at or outside the safe set boundary."""

    def __init__(self, x, h):
        self.x = np.array(x, dtype=float, copy=True)
        self.h = float(h)
        super().__init__(f"state {self.x.tolist()} is not strictly safe (h={self.h:.6g})")
