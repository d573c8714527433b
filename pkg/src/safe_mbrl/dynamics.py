"""Control-affine plants ``xdot = f(x) + g(x) u`` with linearly parametrized drift.

The drift is written as ``f(x) = Y(x) @ theta``.  A system with ``p = 0``
(empty basis) has known drift and is never identified online.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from safe_mbrl.errors import ContractViolation

__all__ = [
    "ControlAffineSystem",
    "eval_drift",
    "eval_input_matrix",
    "eval_drift_basis",
    "nonlinear_example",
    "single_integrator",
    "SYSTEMS",
    "get_system",
]


@dataclass(frozen=True)
class ControlAffineSystem:
    name: str
    state_dim: int
    input_dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    input_matrix: Callable[[np.ndarray], np.ndarray]
    drift_basis: Callable[[np.ndarray], np.ndarray]
    true_weights: np.ndarray

    @property
    def n_params(self) -> int:
        return int(np.size(self.true_weights))

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.state_dim,):
            raise ContractViolation(
                f"{self.name}: expected state of shape ({self.state_dim},), got {x.shape}"
            )
        return x

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.drift(x) + self.input_matrix(x) @ u


def eval_drift(system: ControlAffineSystem, x) -> np.ndarray:
    return system.drift(system.check_state(x))


def eval_input_matrix(system: ControlAffineSystem, x) -> np.ndarray:
    return system.input_matrix(system.check_state(x))


def eval_drift_basis(system: ControlAffineSystem, x) -> np.ndarray:
    """Regressor matrix Y(x) of shape (n, p); (n, 0) when the drift is known."""
    return system.drift_basis(system.check_state(x))


# x1' = -0.6 x1 - x2,  x2' = x1^3 + x2 u
def _nl_drift(x):
    return np.array([-0.6 * x[0] - x[1], x[0] ** 3])


def _nl_input(x):
    return np.array([[0.0], [x[1]]])


def _nl_basis(x):
    return np.array([[x[0], x[1], 0.0], [0.0, 0.0, x[0] ** 3]])


def nonlinear_example() -> ControlAffineSystem:
    """Planar system with cubic drift and state-dependent input gain on x2."""
    return ControlAffineSystem(
        name="nonlinear",
        state_dim=2,
        input_dim=1,
        drift=_nl_drift,
        input_matrix=_nl_input,
        drift_basis=_nl_basis,
        true_weights=np.array([-0.6, -1.0, 1.0]),
    )


_EYE2 = np.eye(2)


def single_integrator() -> ControlAffineSystem:
    return ControlAffineSystem(
        name="single_integrator",
        state_dim=2,
        input_dim=2,
        drift=lambda x: np.zeros(2),
        input_matrix=lambda x: _EYE2.copy(),
        drift_basis=lambda x: np.zeros((2, 0)),
        true_weights=np.zeros(0),
    )


SYSTEMS = {
    "nonlinear_p_minus": nonlinear_example,
    "nonlinear_p_plus": nonlinear_example,
    "single_integrator": single_integrator,
}


def get_system(name: str) -> ControlAffineSystem:
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise ContractViolation(
            f"unknown system {name!r}; choose from {sorted(SYSTEMS)}"
        ) from None
