"""Safe exploration for model-based RL with Lyapunov-like control barrier functions."""

from safe_mbrl.errors import ContractViolation, SafetyViolation

__version__ = "0.1.0"

__all__ = ["ContractViolation", "SafetyViolation", "__version__"]
