"""Integral concurrent learning (ICL) of the drift weights.

Integrating ``xdot = Y(x) theta + g(x) u`` over a sliding window of length
``window`` gives the linear relation

    x(t) - x(t - window) - int g u  =  (int Y) theta

which needs no state derivatives.  Windows are stored in a history stack that
keeps the most informative data (largest minimum eigenvalue of
``sum script_Y^T script_Y``), and ``theta_hat`` follows a gradient flow on the
stacked squared residuals.
"""

from collections import deque

import numpy as np

from safe_mbrl.errors import ContractViolation

__all__ = [
    "IclHistoryStack",
    "IdentifierState",
    "icl_accumulate",
    "stack_insert",
    "theta_dot",
    "min_eig",
]


def min_eig(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(mat)[0])


class IclHistoryStack:
    """Fixed-capacity store of ``(script_Y, residual)`` pairs."""

    def __init__(self, capacity: int = 20, window: float = 0.5):
        if capacity < 1:
            raise ContractViolation("stack capacity must be positive")
        self.capacity = int(capacity)
        self.window = float(window)
        self.script_Y = []
        self.residuals = []
        self._outer = []  # Y^T Y per entry
        self._proj = []  # Y^T r per entry
        self._gram = None
        self._moment = None
        self.revision = 0  # bumped whenever the contents change

    def __len__(self):
        return len(self.script_Y)

    @property
    def full(self) -> bool:
        return len(self.script_Y) >= self.capacity

    @property
    def gram(self) -> np.ndarray:
        return self._gram

    @property
    def moment(self) -> np.ndarray:
        return self._moment

    def min_singular_value(self) -> float:
        return 0.0 if self._gram is None else min_eig(self._gram)

    def _refresh(self):
        self._gram = np.sum(self._outer, axis=0)
        self._moment = np.sum(self._proj, axis=0)
        self.revision += 1

    def insert(self, script_Y, residual) -> bool:
        script_Y = np.asarray(script_Y, dtype=float)
        residual = np.asarray(residual, dtype=float)
        if self.script_Y and (
            script_Y.shape != self.script_Y[0].shape or residual.shape != self.residuals[0].shape
        ):
            raise ContractViolation("candidate dimensions do not match the stack")
        outer = script_Y.T @ script_Y
        proj = script_Y.T @ residual
        if not self.full:
            self.script_Y.append(script_Y)
            self.residuals.append(residual)
            self._outer.append(outer)
            self._proj.append(proj)
            self._refresh()
            return True

        if outer.size == 0:
            return False  # no parameters: nothing to improve
        current = min_eig(self._gram)
        trial = (self._gram + outer) - np.asarray(self._outer)
        scores = np.linalg.eigvalsh(trial)[:, 0]
        j = int(np.argmax(scores))
        # gains below roundoff of the Gram matrix are not a real improvement
        tol = 64 * np.finfo(float).eps * max(np.abs(self._gram).max(), np.abs(outer).max())
        if not scores[j] > current + tol:
            return False
        self.script_Y[j] = script_Y
        self.residuals[j] = residual
        self._outer[j] = outer
        self._proj[j] = proj
        self._refresh()
        return True


def stack_insert(stack: IclHistoryStack, script_Y, residual):
    accepted = stack.insert(script_Y, residual)
    return stack, accepted


class IdentifierState:
    """Drift-weight estimate plus the sliding-window quadrature buffers."""

    def __init__(self, theta_hat, gain: float = 5.0, window: float = 0.5, dt: float = 1e-3):
        self.theta_hat = np.array(theta_hat, dtype=float)
        self.gain = float(gain)
        self.window = float(window)
        self.dt = float(dt)
        self.window_steps = max(1, int(round(window / dt)))
        # cumulative trapezoid integrals at the last window_steps + 1 grid points
        self.buffer = deque(maxlen=self.window_steps + 1)
        self._last = None

    @property
    def n_params(self) -> int:
        return self.theta_hat.size

    def accumulate(self, t, x, u, system):
        """Advance the window integrals to time ``t``; return a candidate or None."""
        if self.n_params == 0:
            return None
        if self._last is not None and not t > self._last[0]:
            raise ContractViolation(f"ICL samples must be strictly increasing in time ({t} after {self._last[0]})")
        x = np.asarray(x, dtype=float)
        Y = system.drift_basis(x)
        gu = system.input_matrix(x) @ np.asarray(u, dtype=float)
        if self._last is None:
            cum_Y = np.zeros_like(Y)
            cum_gu = np.zeros_like(gu)
        else:
            t0, Y0, gu0, cum_Y0, cum_gu0 = self._last
            h = 0.5 * (t - t0)
            cum_Y = cum_Y0 + h * (Y0 + Y)
            cum_gu = cum_gu0 + h * (gu0 + gu)
        self._last = (t, Y, gu, cum_Y, cum_gu)
        self.buffer.append((t, x.copy(), cum_Y, cum_gu))
        if len(self.buffer) < self.buffer.maxlen:
            return None
        _, x_old, cum_Y_old, cum_gu_old = self.buffer[0]
        script_Y = cum_Y - cum_Y_old
        residual = x - x_old - (cum_gu - cum_gu_old)
        return script_Y, residual


def icl_accumulate(ident: IdentifierState, t, x, u, system):
    candidate = ident.accumulate(t, x, u, system)
    return ident, candidate


def theta_dot(theta_hat, stack: IclHistoryStack, gain: float) -> np.ndarray:
    """``gain * sum_j Y_j^T (r_j - Y_j theta_hat)``; zero for an empty stack."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    if len(stack) == 0:
        return np.zeros_like(theta_hat)
    return gain * (stack.moment - stack.gram @ theta_hat)
