"""Lyapunov-like control barrier functions and the safeguarding controller.

A candidate barrier ``b`` is built over a set ``{h >= 0}`` (by default
``b = 1/h``) and recentered as ``B(x) = (b(x) - b(0))**2``.  ``B`` is zero at
the origin, nonnegative, and blows up at the boundary, so ``-grad B`` can be
added to any nominal policy without moving the origin equilibrium.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from safe_mbrl.errors import ContractViolation, SafetyViolation

__all__ = [
    "EPS_H",
    "CandidateCbf",
    "LyapunovLikeCbf",
    "ComposedLcbf",
    "lcbf_value",
    "lcbf_gradient",
    "safeguard_control",
    "compose_lcbfs",
    "parabolic_set",
    "obstacle_set",
]

# h <= EPS_H counts as boundary contact: 1/h is not trusted below this.
EPS_H = 1e-9


@dataclass(frozen=True)
class CandidateCbf:
    """Safe set ``{h >= 0}`` with a reciprocal (or user-supplied) barrier."""

    h: Callable[[np.ndarray], float]
    grad_h: Callable[[np.ndarray], np.ndarray]
    b: Optional[Callable[[np.ndarray], float]] = None
    grad_b: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def barrier(self, x):
        if self.b is not None:
            return self.b(x)
        return 1.0 / self.h(x)

    def barrier_gradient(self, x, hx=None):
        if self.grad_b is not None:
            return self.grad_b(x)
        if hx is None:
            hx = self.h(x)
        return -np.asarray(self.grad_h(x), dtype=float) / (hx * hx)


@dataclass(frozen=True)
class LyapunovLikeCbf:
    cbf: CandidateCbf
    b_at_origin: float = field(init=False)
    state_dim: int = 2

    def __post_init__(self):
        origin = np.zeros(self.state_dim)
        h0 = self.cbf.h(origin)
        if not h0 > EPS_H:
            raise ContractViolation(f"origin must lie in the interior of the safe set (h(0)={h0})")
        object.__setattr__(self, "b_at_origin", float(self.cbf.barrier(origin)))

    def h(self, x) -> float:
        return float(self.cbf.h(x))

    def _checked_h(self, x) -> float:
        hx = float(self.cbf.h(x))
        if not hx > EPS_H:
            raise SafetyViolation(x, hx)
        return hx

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        hx = self._checked_h(x)
        if self.cbf.b is None:
            return (1.0 / hx - self.b_at_origin) ** 2
        return float((self.cbf.barrier(x) - self.b_at_origin) ** 2)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hx = self._checked_h(x)
        bx = 1.0 / hx if self.cbf.b is None else self.cbf.barrier(x)
        return 2.0 * (bx - self.b_at_origin) * self.cbf.barrier_gradient(x, hx)

    def value_and_gradient(self, x):
        x = np.asarray(x, dtype=float)
        hx = self._checked_h(x)
        if self.cbf.b is None:
            scale = 1.0 / hx - self.b_at_origin
            return scale * scale, (-2.0 * scale / (hx * hx)) * self.cbf.grad_h(x)
        scale = self.cbf.barrier(x) - self.b_at_origin
        return float(scale * scale), 2.0 * scale * self.cbf.barrier_gradient(x, hx)


@dataclass(frozen=True)
class ComposedLcbf:
    """Sum of LCBFs over an intersection of safe sets."""

    parts: tuple

    @property
    def state_dim(self) -> int:
        return self.parts[0].state_dim

    def h(self, x) -> float:
        return min(part.h(x) for part in self.parts)

    def value(self, x) -> float:
        return sum(part.value(x) for part in self.parts)

    def gradient(self, x) -> np.ndarray:
        return sum(part.gradient(x) for part in self.parts)

    def value_and_gradient(self, x):
        pairs = [part.value_and_gradient(x) for part in self.parts]
        return sum(v for v, _ in pairs), sum(g for _, g in pairs)


def lcbf_value(lcbf, x) -> float:
    return lcbf.value(x)


def lcbf_gradient(lcbf, x) -> np.ndarray:
    return lcbf.gradient(x)


def safeguard_control(lcbf, x, g_at_x, c_b, weight=None, policy_form=False) -> np.ndarray:
    """Gradient-descent input on the LCBF.

    With ``policy_form=False`` this is ``-c_b * W^-1 g^T grad B^T``; with
    ``policy_form=True`` the gain is halved, which is the term added to the
    learned policy when ``weight`` is the control penalty ``R``.
    """
    if not c_b > 0:
        raise ContractViolation(f"c_b must be positive, got {c_b}")
    g_at_x = np.atleast_2d(np.asarray(g_at_x, dtype=float))
    if g_at_x.shape[0] != np.size(x):
        g_at_x = g_at_x.T
    v = g_at_x.T @ lcbf.gradient(x)
    if weight is not None:
        weight = np.atleast_2d(np.asarray(weight, dtype=float))
        if not np.allclose(weight, weight.T) or np.linalg.eigvalsh(weight)[0] <= 0:
            raise ContractViolation("weight must be symmetric positive definite")
        v = np.linalg.solve(weight, v)
    scale = 0.5 * c_b if policy_form else c_b
    return -scale * v


def compose_lcbfs(lcbfs: Sequence) -> ComposedLcbf:
    if len(lcbfs) == 0:
        raise ContractViolation("cannot compose an empty list of LCBFs")
    return ComposedLcbf(tuple(lcbfs))


def parabolic_set(p: float) -> LyapunovLikeCbf:
    """LCBF for ``h(x) = p x2^2 - x1 + 1``; convex for p=-1, nonconvex for p=+1."""
    p = float(p)
    cbf = CandidateCbf(
        h=lambda x: p * x[1] * x[1] - x[0] + 1.0,
        grad_h=lambda x: np.array([-1.0, 2.0 * p * x[1]]),
        label=f"parabola(p={p:g})",
    )
    return LyapunovLikeCbf(cbf)


def obstacle_set(center, radius: float) -> LyapunovLikeCbf:
    """LCBF keeping the state outside the disk ``|x - center| < radius``."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def h(x):
        d = x - c
        return d @ d - r2

    cbf = CandidateCbf(h=h, grad_h=lambda x: 2.0 * (x - c), label=f"disk({c.tolist()}, {radius:g})")
    return LyapunovLikeCbf(cbf, state_dim=c.size)
