"""Closed-loop simulation of the safeguarded actor-critic.

The augmented state ``(x, W_c, Gamma, W_a, theta_hat)`` is integrated with a
fixed-step RK4 scheme.  Extrapolation points and the ICL history stack are
sampled/updated once per step and held constant across the four stages.
"""

import dataclasses
import enum
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_continuous_are

from safe_mbrl.basis import StafBasis, triangle_basis
from safe_mbrl.dynamics import ControlAffineSystem, get_system
from safe_mbrl.errors import ContractViolation, SafetyViolation
from safe_mbrl.learner import (
    CostSpec,
    LearnerGains,
    LearnerState,
    clamp_to_layer,
    pe_diagnostic,
    sample_extrap_points,
    smooth_project,
)
from safe_mbrl.safety import EPS_H, obstacle_set, parabolic_set
from safe_mbrl.sysid import IclHistoryStack, IdentifierState

__all__ = [
    "Mode",
    "ScenarioConfig",
    "SimLog",
    "Simulator",
    "safe_policy",
    "run_scenario",
    "builtin_scenarios",
    "get_scenario",
    "lqr_gain",
    "BLOWUP_THRESHOLD",
]

BLOWUP_THRESHOLD = 1e8


class Mode(str, enum.Enum):
    RL_SAFEGUARDED = "rl_safeguarded"
    RL_UNGUARDED = "rl_unguarded"
    RL_BARRIER_COST = "rl_barrier_cost"
    LQR_SAFEGUARDED = "lqr_safeguarded"
    OPEN_LOOP = "open_loop"  # u = 0, learner frozen: the uncontrolled reference

    @property
    def safeguarded(self) -> bool:
        return self in (Mode.RL_SAFEGUARDED, Mode.LQR_SAFEGUARDED)

    @property
    def learning(self) -> bool:
        return self not in (Mode.LQR_SAFEGUARDED, Mode.OPEN_LOOP)


@dataclass
class ScenarioConfig:
    name: str
    system: str
    set_kind: str  # "parabola" or "obstacle"
    p: float = -1.0
    obstacle_center: tuple = (2.0, 0.0)
    obstacle_radius: float = 1.0
    Q: tuple = ((1.0, 0.0), (0.0, 1.0))
    R: tuple = ((1.0,),)
    barrier_weight: float = 0.0
    gains: LearnerGains = field(default_factory=LearnerGains)
    c_b: float = 1.0
    mode: Mode = Mode.RL_SAFEGUARDED
    x0: tuple = (0.0, 0.0)
    w_c0: tuple = (0.5, 0.5, 0.5)
    w_a0: tuple = (0.5, 0.5, 0.5)
    gamma0: float = 100.0
    theta0: Optional[tuple] = None
    w_a_bound: float = 10.0
    dt: float = 1e-3
    horizon: float = 40.0
    seed: int = 0
    icl_window: float = 0.5
    icl_capacity: int = 20
    k_theta: float = 5.0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if not self.dt > 0:
            raise ContractViolation("dt must be positive")
        if self.horizon < 0:
            raise ContractViolation("horizon must be nonnegative")
        if self.set_kind not in ("parabola", "obstacle"):
            raise ContractViolation(f"unknown safe-set kind {self.set_kind!r}")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.horizon / self.dt + 1e-9))

    def build_system(self) -> ControlAffineSystem:
        return get_system(self.system)

    def build_lcbf(self):
        if self.set_kind == "parabola":
            return parabolic_set(self.p)
        return obstacle_set(self.obstacle_center, self.obstacle_radius)

    def build_cost(self, lcbf=None) -> CostSpec:
        weight = self.barrier_weight if self.mode is Mode.RL_BARRIER_COST else 0.0
        return CostSpec(np.array(self.Q, float), np.array(self.R, float), weight, lcbf if weight > 0 else None)


@dataclass
class SimLog:
    """Per-grid-point record of one closed-loop run."""

    scenario: str
    n: int
    m: int
    L: int
    p: int
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    u_nominal: np.ndarray
    u_safeguard: np.ndarray
    h: np.ndarray
    B: np.ndarray
    delta_t: np.ndarray
    w_c: np.ndarray
    w_a: np.ndarray
    theta: np.ndarray
    gamma_min: np.ndarray
    gamma_max: np.ndarray
    lam: np.ndarray
    lam_extrap: np.ndarray
    flags: list
    status: str = "completed"
    message: str = ""
    stack_full_rank_index: Optional[int] = None
    stack_size: int = 0
    projection_clamps: int = 0
    max_clamp_excess: float = 0.0
    wall_time: float = 0.0

    def __len__(self):
        return self.t.size

    @property
    def min_h(self) -> float:
        return float(np.min(self.h))

    @property
    def first_violation_time(self) -> Optional[float]:
        idx = np.flatnonzero(self.h <= 0.0)
        return float(self.t[idx[0]]) if idx.size else None

    @property
    def terminal_state(self) -> np.ndarray:
        return self.x[-1]

    def pe_levels(self, start=0.0, stop=None):
        """Excitation levels (c1, c2, c3) over ``[start, stop]``."""
        stop = self.t[-1] if stop is None else stop
        mask = (self.t >= start) & (self.t <= stop) & np.isfinite(self.lam[:, 0, 0])
        return pe_diagnostic(self.t[mask], self.lam[mask], self.lam_extrap[mask])


def lqr_gain(system: ControlAffineSystem, Q, R, eps=1e-6) -> np.ndarray:
    """LQR gain of the linearization at the origin (central differences for A)."""
    n = system.state_dim
    A = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        A[:, j] = (system.drift(e) - system.drift(-e)) / (2 * eps)
    Bm = system.input_matrix(np.zeros(n))
    Q = np.atleast_2d(Q)
    R = np.atleast_2d(R)
    P = solve_continuous_are(A, Bm, Q, R)
    return np.linalg.solve(R, Bm.T @ P)


def safe_policy(x, learner: LearnerState, lcbf, system, R, c_b, mode, basis=None, lqr_K=None):
    """Decompose the applied input into its nominal and safeguarding parts."""
    mode = Mode(mode)
    x = np.asarray(x, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    g = system.input_matrix(x)
    if mode is Mode.OPEN_LOOP:
        u_nom = np.zeros(system.input_dim)
    elif mode is Mode.LQR_SAFEGUARDED:
        if lqr_K is None:
            lqr_K = lqr_gain(system, np.eye(system.state_dim), R)
        u_nom = -lqr_K @ x
    else:
        basis = basis or triangle_basis()
        u_nom = -0.5 * np.linalg.solve(R, g.T @ (basis.grad_phi(x, x).T @ learner.w_a_hat))
    if mode.safeguarded:
        u_sg = -0.5 * c_b * np.linalg.solve(R, g.T @ lcbf.gradient(x))
    else:
        u_sg = np.zeros_like(u_nom)
    return u_nom + u_sg, u_nom, u_sg


class Simulator:
    """Owns all mutable state of one scenario run."""

    def __init__(self, config: ScenarioConfig, basis: Optional[StafBasis] = None):
        self.config = cfg = config
        self.system = sys_ = config.build_system()
        self.lcbf = config.build_lcbf()
        self.cost = config.build_cost(self.lcbf)
        self.basis = basis or triangle_basis()
        self.gains = config.gains
        self.mode = config.mode
        self.n, self.m = sys_.state_dim, sys_.input_dim
        self.L = self.basis.L
        self.p = sys_.n_params
        self.R_inv = np.linalg.inv(self.cost.R)
        self.Q = self.cost.Q
        self.R = self.cost.R
        self.lqr_K = lqr_gain(sys_, self.Q, self.R) if self.mode is Mode.LQR_SAFEGUARDED else None
        self.rng = np.random.default_rng(cfg.seed)
        self.stack = IclHistoryStack(cfg.icl_capacity, cfg.icl_window)
        theta0 = np.zeros(self.p) if cfg.theta0 is None else np.asarray(cfg.theta0, float)
        self.ident = IdentifierState(theta0, cfg.k_theta, cfg.icl_window, cfg.dt)
        gamma0 = np.asarray(cfg.gamma0, float)
        gamma0 = gamma0 * np.eye(self.L) if gamma0.ndim == 0 else gamma0
        self.learner0 = LearnerState(np.asarray(cfg.w_c0, float), gamma0, np.asarray(cfg.w_a0, float), cfg.w_a_bound)
        x0 = sys_.check_state(cfg.x0)
        if self.mode.safeguarded and not self.lcbf.h(x0) > EPS_H:
            raise ContractViolation(f"x0={list(x0)} is not inside the safe set")
        # last barrier value seen at a safe trajectory point (barrier-cost mode)
        self._barrier_fallback = 0.0
        self._substituted = False
        self._eig_cache = (-1, None, None, None)
        L, n, p = self.L, self.n, self.p
        self._sl = {
            "x": slice(0, n),
            "wc": slice(n, n + L),
            "gamma": slice(n + L, n + L + L * L),
            "wa": slice(n + L + L * L, n + 2 * L + L * L),
            "theta": slice(n + 2 * L + L * L, n + 2 * L + L * L + p),
        }
        self.size = n + 2 * L + L * L + p

    # -- packing -------------------------------------------------------
    def pack(self, x, w_c, gamma, w_a, theta):
        return np.concatenate([x, w_c, gamma.ravel(), w_a, theta])

    def unpack(self, z):
        s = self._sl
        L = self.L
        return z[s["x"]], z[s["wc"]], z[s["gamma"]].reshape(L, L), z[s["wa"]], z[s["theta"]]

    def initial_state(self):
        lr = self.learner0
        return self.pack(np.asarray(self.config.x0, float), lr.w_c_hat, lr.gamma, lr.w_a_hat, self.ident.theta_hat)

    # -- pieces of the vector field -------------------------------------
    def _barrier_cost(self, y):
        """Weighted LCBF term of the running cost, substituting outside the set."""
        if self.cost.barrier_weight == 0.0:
            return 0.0
        if self.lcbf.h(y) > EPS_H:
            return self.cost.barrier_weight * self.lcbf.value(y)
        return self.cost.barrier_weight * self._barrier_fallback

    def _policy(self, x, C, w_a, g):
        if self.mode is Mode.LQR_SAFEGUARDED:
            return -self.lqr_K @ x
        if self.mode is Mode.OPEN_LOOP:
            return np.zeros(self.m)
        return -0.5 * self.R_inv @ (g.T @ (C.T @ w_a))

    def control(self, x, w_a):
        """(u_total, u_nominal, u_safeguard) at state ``x``."""
        g = self.system.input_matrix(x)
        C = self.basis.centers(x)
        u_nom = self._policy(x, C, w_a, g)
        if self.mode.safeguarded:
            u_sg = -0.5 * self.config.c_b * self.R_inv @ (g.T @ self.lcbf.gradient(x))
        else:
            u_sg = np.zeros(self.m)
        return u_nom + u_sg, u_nom, u_sg

    def derivative(self, t, z, extrap, aux=False):
        """Right-hand side of the augmented state; optionally with logged quantities."""
        x, w_c, gamma, w_a, theta = self.unpack(z)
        sys_ = self.system
        g = sys_.input_matrix(x)
        C = self.basis.centers(x)
        u_nom = self._policy(x, C, w_a, g)
        if self.mode.safeguarded:
            u_sg = -0.5 * self.config.c_b * self.R_inv @ (g.T @ self.lcbf.gradient(x))
            u = u_nom + u_sg
        else:
            u_sg = np.zeros(self.m)
            u = u_nom
        dz = np.zeros(self.size)
        dz[self._sl["x"]] = sys_.drift(x) + g @ u
        if not self.mode.learning:
            if aux:
                return dz, (u, u_nom, u_sg, np.nan, np.zeros((self.L, self.L)), np.zeros((self.L, self.L)))
            return dz

        gains = self.gains
        Q, R, R_inv = self.Q, self.R, self.R_inv
        k_c1, k_c2, gamma_c = gains.k_c1, gains.k_c2, gains.gamma_c
        # on-trajectory Bellman error
        fhat = sys_.drift_basis(x) @ theta if self.p else sys_.drift(x)
        omega = C @ (fhat + g @ u)
        rho = 1.0 + gamma_c * (omega @ omega)
        delta = x @ Q @ x + u @ R @ u + self._barrier_cost(x) + w_c @ omega
        inv_rho2 = 1.0 / (rho * rho)
        drive = (k_c1 * inv_rho2 * delta) * omega
        lam = inv_rho2 * (omega[:, None] * omega)
        a = C @ g
        # G_phi W_a = a R^-1 a^T W_a = -2 a u_nom for the learned policy
        actor = (-0.5 * k_c1 * inv_rho2 * (omega @ w_c)) * (a @ u_nom)

        # extrapolated Bellman errors: unguarded exploratory policy, identified model
        N = extrap.shape[0]
        lam_ext = np.zeros((self.L, self.L))
        drive_ext = np.zeros(self.L)
        for y in extrap:
            a_i = C @ sys_.input_matrix(y)
            u_i = -0.5 * R_inv @ (a_i.T @ w_a)
            fhat_i = sys_.drift_basis(y) @ theta if self.p else sys_.drift(y)
            omega_i = C @ fhat_i + a_i @ u_i
            inv_i = 1.0 / (1.0 + gamma_c * (omega_i @ omega_i)) ** 2
            delta_i = y @ Q @ y + u_i @ R @ u_i + self._barrier_cost(y) + w_c @ omega_i
            drive_ext += (inv_i * delta_i) * omega_i
            lam_ext += inv_i * (omega_i[:, None] * omega_i)
            actor += (-0.5 * k_c2 / N * inv_i * (omega_i @ w_c)) * (a_i @ u_i)
        lam_ext /= N
        drive += (k_c2 / N) * drive_ext
        info = k_c1 * lam + k_c2 * lam_ext

        dz[self._sl["wc"]] = -gamma @ drive
        dz[self._sl["gamma"]] = (gains.beta_c * gamma - gamma @ info @ gamma).ravel()
        field_a = actor - gains.k_a1 * (w_a - w_c) - gains.k_a2 * w_a
        # RK4 stage points may overshoot the layer by O(dt^2); evaluate the
        # projection at their radial image on the layer edge
        w_a = clamp_to_layer(w_a, self.config.w_a_bound)[0]
        dz[self._sl["wa"]] = smooth_project(w_a, field_a, self.config.w_a_bound)
        if self.p and len(self.stack):
            dz[self._sl["theta"]] = self.ident.gain * (self.stack.moment - self.stack.gram @ theta)
        if aux:
            return dz, (u, u_nom, u_sg, delta, lam, lam_ext)
        return dz

    def theta_flow(self, theta, dt):
        """Exact solution of the identifier ODE over ``[0, dt]`` for the current stack.

        The stack is frozen within a step, so ``theta' = k (m - G theta)`` is
        linear and decoupled.  Its eigenvalues ``k lambda(G)`` can exceed the
        RK4 stability region at ``dt = 1e-3``, hence the closed form.
        """
        if not (self.p and self.mode.learning and len(self.stack)):
            return theta
        if self._eig_cache[0] != self.stack.revision:
            lam, V = np.linalg.eigh(self.stack.gram)
            self._eig_cache = (self.stack.revision, lam, V, V.T @ self.stack.moment)
        _, lam, V, mu = self._eig_cache
        xi = V.T @ theta
        rate = self.ident.gain * lam
        decay = np.exp(-rate * dt)
        # (1 - e^{-k lam dt}) / lam, with the lam -> 0 limit k dt
        small = rate * dt < 1e-12
        gain = np.where(small, self.ident.gain * dt, -np.expm1(-rate * dt) / np.where(small, 1.0, lam))
        return V @ (decay * xi + gain * mu)

    def rk4_step(self, t, z, extrap, dt):
        ts = self._sl["theta"]
        theta0 = z[ts]
        theta_half = self.theta_flow(theta0, 0.5 * dt)
        theta_end = self.theta_flow(theta0, dt)
        k1, info = self.derivative(t, z, extrap, aux=True)
        z2 = z + 0.5 * dt * k1
        z2[ts] = theta_half
        k2 = self.derivative(t + 0.5 * dt, z2, extrap)
        z3 = z + 0.5 * dt * k2
        z3[ts] = theta_half
        k3 = self.derivative(t + 0.5 * dt, z3, extrap)
        z4 = z + dt * k3
        z4[ts] = theta_end
        k4 = self.derivative(t + dt, z4, extrap)
        z_next = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        z_next[ts] = theta_end
        return z_next, info

    # -- main loop -------------------------------------------------------
    def run(self) -> SimLog:
        cfg = self.config
        dt, K = cfg.dt, cfg.n_steps
        n, m, L, p = self.n, self.m, self.L, self.p
        rows = K + 1
        t_arr = np.full(rows, np.nan)
        X = np.full((rows, n), np.nan)
        U = np.full((rows, m), np.nan)
        U_nom = np.full((rows, m), np.nan)
        U_sg = np.full((rows, m), np.nan)
        H = np.full(rows, np.nan)
        Bv = np.full(rows, np.nan)
        D = np.full(rows, np.nan)
        WC = np.full((rows, L), np.nan)
        WA = np.full((rows, L), np.nan)
        TH = np.full((rows, p), np.nan)
        GMIN = np.full(rows, np.nan)
        GMAX = np.full(rows, np.nan)
        LAM = np.full((rows, L, L), np.nan)
        LAMX = np.full((rows, L, L), np.nan)
        flags = []
        status, message = "completed", ""
        full_rank_index = None
        clamps = 0
        max_clamp = 0.0

        start = time.perf_counter()
        z = self.initial_state()
        k = 0
        count = 0
        while True:
            t = k * dt
            x, w_c, gamma, w_a, theta = self.unpack(z)
            hx = self.lcbf.h(x)
            flag = "ok" if hx > 0 else "unsafe"
            if hx > EPS_H:
                self._barrier_fallback = self.lcbf.value(x)
                Bx = self._barrier_fallback
            else:
                Bx = np.nan
                if self.mode is Mode.RL_BARRIER_COST:
                    flag = "substituted"
            try:
                if self.mode.safeguarded and not hx > EPS_H:
                    raise SafetyViolation(x, hx)
                if p and self.mode.learning:
                    u_k = self.control(x, w_a)[0]
                    candidate = self.ident.accumulate(t, x, u_k, self.system)
                    if candidate is not None:
                        self.stack.insert(*candidate)
                        if full_rank_index is None and self.stack.min_singular_value() > 1e-8:
                            full_rank_index = k
                extrap = sample_extrap_points(x, self.rng, self.gains.n_extrap)
                if k < K:
                    z_next, info = self.rk4_step(t, z, extrap, dt)
                else:
                    _, info = self.derivative(t, z, extrap, aux=True)
            except SafetyViolation as exc:
                status = "safety_violation"
                if hx > EPS_H:
                    message = f"an integration stage of the step from t={t:g} left the safe set: {exc}"
                else:
                    message = f"trajectory reached the safe-set boundary at t={t:g}: {exc}"
                info = None

            eig = np.linalg.eigvalsh(gamma)
            t_arr[k], X[k], H[k], Bv[k] = t, x, hx, Bx
            WC[k], WA[k], GMIN[k], GMAX[k] = w_c, w_a, eig[0], eig[-1]
            if p:
                TH[k] = theta
            if info is not None:
                U[k], U_nom[k], U_sg[k], D[k], LAM[k], LAMX[k] = info
            flags.append(flag)
            count = k + 1
            if info is None or k >= K:
                break
            if not np.all(np.isfinite(z_next)) or np.max(np.abs(z_next)) > BLOWUP_THRESHOLD:
                status, message = "numerical_blowup", f"augmented state left |z| <= {BLOWUP_THRESHOLD:g} at t={t + dt:g}"
                break
            # keep Gamma symmetric and W_a inside the projection layer against roundoff
            gs = self._sl["gamma"]
            G = z_next[gs].reshape(L, L)
            z_next[gs] = (0.5 * (G + G.T)).ravel()
            wa_next, excess = clamp_to_layer(z_next[self._sl["wa"]], cfg.w_a_bound)
            if excess:
                z_next[self._sl["wa"]] = wa_next
                clamps += 1
                max_clamp = max(max_clamp, excess)
            z = z_next
            k += 1

        cut = slice(0, count)
        return SimLog(
            scenario=cfg.name, n=n, m=m, L=L, p=p,
            t=t_arr[cut], x=X[cut], u=U[cut], u_nominal=U_nom[cut], u_safeguard=U_sg[cut],
            h=H[cut], B=Bv[cut], delta_t=D[cut], w_c=WC[cut], w_a=WA[cut], theta=TH[cut],
            gamma_min=GMIN[cut], gamma_max=GMAX[cut], lam=LAM[cut], lam_extrap=LAMX[cut],
            flags=flags, status=status, message=message,
            stack_full_rank_index=full_rank_index, stack_size=len(self.stack),
            projection_clamps=clamps, max_clamp_excess=max_clamp, wall_time=time.perf_counter() - start,
        )


def run_scenario(config: ScenarioConfig) -> SimLog:
    return Simulator(config).run()


_I2 = ((1.0, 0.0), (0.0, 1.0))

# Chosen so the unguarded run leaves the convex set and LQR stalls on the obstacle axis.
CONVEX_X0 = (-3.0, -1.9)
NONCONVEX_X0 = (-2.0, 2.0)
INTEGRATOR_X0 = (4.0, 0.0)


def builtin_scenarios() -> dict:
    """The six canonical experiments, keyed by name."""
    gains = LearnerGains(k_c1=0.1, k_c2=1.0, k_a1=1.0, k_a2=0.1, gamma_c=1.0, beta_c=0.001, n_extrap=1)
    convex = ScenarioConfig(
        name="nonlinear_convex_safe",
        system="nonlinear_p_minus",
        set_kind="parabola",
        p=-1.0,
        Q=_I2,
        R=((1.0,),),
        gains=gains,
        c_b=1.0,
        mode=Mode.RL_SAFEGUARDED,
        x0=CONVEX_X0,
        w_c0=(0.5, 0.5, 0.5),
        w_a0=(0.5, 0.5, 0.5),
        gamma0=100.0,
        horizon=40.0,
    )
    integrator = ScenarioConfig(
        name="integrator_rl",
        system="single_integrator",
        set_kind="obstacle",
        obstacle_center=(2.0, 0.0),
        obstacle_radius=1.0,
        Q=_I2,
        R=_I2,
        gains=gains,
        c_b=0.1,
        mode=Mode.RL_SAFEGUARDED,
        x0=INTEGRATOR_X0,
        w_c0=(1.0, 1.0, 1.0),
        w_a0=(1.0, 1.0, 1.0),
        gamma0=10.0,
        horizon=60.0,
    )
    scenarios = [
        convex,
        convex.replace(name="nonlinear_convex_unguarded", mode=Mode.RL_UNGUARDED),
        convex.replace(name="nonlinear_convex_barrier_cost", mode=Mode.RL_BARRIER_COST, barrier_weight=20.0),
        convex.replace(
            name="nonlinear_nonconvex_safe", system="nonlinear_p_plus", p=1.0, c_b=0.001, gamma0=10.0, x0=NONCONVEX_X0
        ),
        integrator,
        integrator.replace(name="integrator_lqr", mode=Mode.LQR_SAFEGUARDED),
    ]
    return {s.name: s for s in scenarios}


def get_scenario(name: str) -> ScenarioConfig:
    scenarios = builtin_scenarios()
    try:
        return scenarios[name]
    except KeyError:
        raise ContractViolation(f"unknown scenario {name!r}; valid: {', '.join(scenarios)}") from None
