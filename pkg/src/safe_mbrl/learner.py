"""Online actor-critic for the infinite-horizon regulation problem.

The value function is approximated with StaF kernels, ``V(y) = W_c @ phi(y, c(x))``,
and the policy with ``u(y) = -1/2 R^-1 g(y)^T grad_phi(y, x)^T W_a``.  The
critic is trained with a normalized recursive least-squares law on the
Bellman error evaluated along the real trajectory and at extrapolated points
(simulated with the identified model), and the actor tracks the critic under
a smooth projection that keeps its weights bounded.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from safe_mbrl.errors import ContractViolation, SafetyViolation

__all__ = [
    "CostSpec",
    "LearnerState",
    "LearnerGains",
    "PROJECTION_EPS",
    "PROJECTION_SLACK",
    "running_cost",
    "approx_policy",
    "regressor",
    "bellman_error",
    "sample_extrap_points",
    "critic_dot",
    "actor_dot",
    "smooth_project",
    "clamp_to_layer",
    "g_phi",
    "pe_diagnostic",
]

PROJECTION_EPS = 0.01
# relative roundoff allowance on the outer edge of the layer
PROJECTION_SLACK = 1e-6


def _spd(mat, name):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.T):
        raise ContractViolation(f"{name} must be a symmetric square matrix")
    if np.linalg.eigvalsh(mat)[0] <= 0:
        raise ContractViolation(f"{name} must be positive definite")
    return mat


@dataclass(frozen=True)
class CostSpec:
    """Running cost ``x^T Q x + u^T R u + barrier_weight * B(x)``."""

    Q: np.ndarray
    R: np.ndarray
    barrier_weight: float = 0.0
    barrier: Optional[object] = None

    def __post_init__(self):
        object.__setattr__(self, "Q", _spd(self.Q, "Q"))
        object.__setattr__(self, "R", _spd(self.R, "R"))
        if self.barrier_weight < 0:
            raise ContractViolation("barrier_weight must be nonnegative")
        if self.barrier_weight > 0 and self.barrier is None:
            raise ContractViolation("a positive barrier_weight needs a barrier")

    @property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)


@dataclass
class LearnerState:
    w_c_hat: np.ndarray
    gamma: np.ndarray
    w_a_hat: np.ndarray
    w_a_bound: float = 10.0

    def __post_init__(self):
        self.w_c_hat = np.array(self.w_c_hat, dtype=float)
        self.w_a_hat = np.array(self.w_a_hat, dtype=float)
        self.gamma = _spd(self.gamma, "gamma").copy()
        if not self.w_a_bound > 0:
            raise ContractViolation("w_a_bound must be positive")
        # the projection admits a thin layer outside the ball
        if np.linalg.norm(self.w_a_hat) > self.w_a_bound * (1.0 + PROJECTION_EPS) * (1.0 + PROJECTION_SLACK):
            raise ContractViolation("actor weights lie outside the projection layer")


@dataclass(frozen=True)
class LearnerGains:
    k_c1: float = 0.1
    k_c2: float = 1.0
    k_a1: float = 1.0
    k_a2: float = 0.1
    gamma_c: float = 1.0
    beta_c: float = 0.001
    n_extrap: int = 1

    def __post_init__(self):
        for name in ("k_c1", "k_c2", "k_a1", "k_a2", "gamma_c"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        # beta_c = 0 is plain (non-forgetting) least squares; allowed
        if self.beta_c < 0:
            raise ContractViolation("beta_c must be nonnegative")
        if int(self.n_extrap) < 1:
            raise ContractViolation("n_extrap must be at least 1")


def running_cost(spec: CostSpec, x, u, barrier_value=None) -> float:
    """Quadratic cost, plus the weighted LCBF in barrier-cost mode.

    ``barrier_value`` overrides the barrier evaluation (used when the caller
    has already computed ``B(x)`` or substitutes it outside the safe set).
    """
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    r = x @ spec.Q @ x + u @ spec.R @ u
    if spec.barrier_weight > 0:
        if barrier_value is None:
            barrier_value = spec.barrier.value(x)
        r += spec.barrier_weight * barrier_value
    return float(r)


def approx_policy(basis, y, x, w_a_hat, system, R) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    grad = basis.grad_phi(y, x)
    return -0.5 * np.linalg.solve(R, system.input_matrix(y).T @ (grad.T @ w_a_hat))


def regressor(basis, x, x_anchor, u, theta_hat, system, gamma_c=1.0):
    """``omega = grad_phi(x, c(x_anchor)) (Y(x) theta_hat + g(x) u)`` and ``rho = 1 + gamma_c |omega|^2``."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    xdot_hat = system.drift_basis(x) @ theta_hat + system.input_matrix(x) @ u
    omega = basis.grad_phi(x, x_anchor) @ xdot_hat
    rho = 1.0 + gamma_c * (omega @ omega)
    return omega, rho


def bellman_error(spec: CostSpec, omega, rho, w_c_hat, x, u, barrier_value=None) -> float:
    # rho is accepted for symmetry with the update laws; the error itself is unnormalized
    return running_cost(spec, x, u, barrier_value) + float(np.asarray(w_c_hat) @ omega)


def sample_extrap_points(x, rng: np.random.Generator, N: int = 1) -> np.ndarray:
    """``N`` uniform draws from the square of side ``nu(x)`` centered at ``x``."""
    if N < 1:
        raise ContractViolation("need at least one extrapolation point")
    x = np.asarray(x, dtype=float)
    xx = x @ x
    side = xx / (xx + 1.0)
    return x + side * (rng.random((N, x.size)) - 0.5)


def critic_dot(state: LearnerState, gains: LearnerGains, on_traj, extrap: Sequence):
    """Right-hand sides of the critic weights and the least-squares gain matrix."""
    if len(extrap) < 1:
        raise ContractViolation("critic update needs at least one extrapolated sample")
    gamma = state.gamma
    omega, rho, delta = on_traj
    inv_rho2 = 1.0 / (rho * rho)
    drive = gains.k_c1 * inv_rho2 * delta * omega
    info = gains.k_c1 * inv_rho2 * np.outer(omega, omega)
    scale = gains.k_c2 / len(extrap)
    for omega_i, rho_i, delta_i in extrap:
        inv_i = scale / (rho_i * rho_i)
        drive = drive + inv_i * delta_i * omega_i
        info = info + inv_i * np.outer(omega_i, omega_i)
    w_c_dot = -gamma @ drive
    gamma_dot = gains.beta_c * gamma - gamma @ info @ gamma
    return w_c_dot, gamma_dot


def g_phi(grad, g, R_inv) -> np.ndarray:
    """``grad_phi g R^-1 g^T grad_phi^T`` (an L x L matrix)."""
    a = grad @ g
    return a @ R_inv @ a.T


def actor_dot(state: LearnerState, gains: LearnerGains, G_phi, on_traj, extrap: Sequence) -> np.ndarray:
    """Projected actor update; ``extrap`` holds ``(G_phi_i, omega_i, rho_i)`` triples."""
    w_a, w_c = state.w_a_hat, state.w_c_hat
    omega, rho = on_traj
    field = -gains.k_a1 * (w_a - w_c) - gains.k_a2 * w_a
    field = field + (gains.k_c1 / (4.0 * rho * rho)) * (np.asarray(G_phi).T @ w_a) * (omega @ w_c)
    n = len(extrap)
    for G_i, omega_i, rho_i in extrap:
        field = field + (gains.k_c2 / (4.0 * n * rho_i * rho_i)) * (np.asarray(G_i).T @ w_a) * (omega_i @ w_c)
    return smooth_project(w_a, field, state.w_a_bound)


def smooth_project(w, field, bound, eps=PROJECTION_EPS, slack=PROJECTION_SLACK) -> np.ndarray:
    """Remove the outward radial part of ``field`` in a thin layer outside ``bound``.

    Inside the ball, or when the field points inward, ``field`` is returned
    unchanged.  Between ``bound`` and ``bound * (1 + eps)`` the radial part is
    scaled by a ramp that reaches one on the outer edge, so trajectories of
    ``w' = smooth_project(w, f(w))`` stay within ``bound * (1 + eps)``.
    """
    if not bound > 0:
        raise ContractViolation("projection bound must be positive")
    w = np.asarray(w, dtype=float)
    field = np.asarray(field, dtype=float)
    norm = np.sqrt(w @ w)
    outer = bound * (1.0 + eps)
    if norm > outer * (1.0 + slack):
        raise ContractViolation(f"|w| = {norm:.6g} exceeds the projection layer {outer:.6g}")
    if norm < bound:
        return field
    radial = w @ field
    if radial <= 0:
        return field
    sigma = min(1.0, (norm - bound) / (eps * bound))
    return field - sigma * radial / (norm * norm) * w


def clamp_to_layer(w, bound, eps=PROJECTION_EPS):
    """Radially pull ``w`` back onto the outer edge of the projection layer.

    A discrete integrator can leave the layer by its truncation error even
    though the projected flow cannot; returns ``(w, excess)`` where ``excess``
    is the relative amount removed (0 when ``w`` is already inside).
    """
    w = np.asarray(w, dtype=float)
    outer = bound * (1.0 + eps)
    norm = np.sqrt(w @ w)
    if norm <= outer:
        return w, 0.0
    # shave a few ulps so the rescaled norm cannot round above the edge
    return w * (outer / norm * (1.0 - 4.0 * np.finfo(float).eps)), norm / outer - 1.0


def pe_diagnostic(times, lam, lam_extrap):
    """Empirical excitation levels over a window.

    ``lam`` and ``lam_extrap`` are (K, L, L) histories of the on-trajectory
    information matrix and the extrapolated one averaged over the N points.
    Returns ``(lambda_min(int lam), lambda_min(int lam_extrap), min_t lambda_min(lam_extrap(t)))``.
    """
    times = np.asarray(times, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lam_extrap = np.asarray(lam_extrap, dtype=float)
    if times.size == 0 or lam.shape[0] != times.size or lam_extrap.shape[0] != times.size:
        raise ContractViolation("pe_diagnostic needs a non-empty window covered by samples")
    if times.size == 1:
        int_lam = np.zeros_like(lam[0])
        int_ext = np.zeros_like(lam_extrap[0])
    else:
        int_lam = np.trapezoid(lam, times, axis=0)
        int_ext = np.trapezoid(lam_extrap, times, axis=0)
    c1 = max(0.0, float(np.linalg.eigvalsh(int_lam)[0]))
    c2 = max(0.0, float(np.linalg.eigvalsh(int_ext)[0]))
    c3 = max(0.0, float(np.linalg.eigvalsh(lam_extrap)[:, 0].min()))
    return c1, c2, c3
