"""State-following (StaF) polynomial kernels.

Kernel ``i`` is ``phi_i(y, c_i(x)) = y @ c_i(x)`` with centers
``c_i(x) = x + nu(x) d_i`` that move with the anchor state ``x``.
Gradients are taken with respect to ``y`` only; the centers are held fixed.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["StafBasis", "nu", "centers", "phi", "grad_phi", "triangle_basis", "TRIANGLE_OFFSETS"]

_S3 = np.sqrt(3.0) / 2.0
TRIANGLE_OFFSETS = np.array([[1.0, 0.0], [-0.5, _S3], [-0.5, -_S3]])


def nu(x) -> float:
    x = np.asarray(x, dtype=float)
    xx = x @ x
    return xx / (xx + 1.0)


@dataclass(frozen=True)
class StafBasis:
    offsets: np.ndarray
    kernel_kind: str = "polynomial1"

    @property
    def L(self) -> int:
        return self.offsets.shape[0]

    @property
    def state_dim(self) -> int:
        return self.offsets.shape[1]

    def centers(self, x) -> np.ndarray:
        """(L, n) array whose rows are the kernel centers for anchor ``x``."""
        x = np.asarray(x, dtype=float)
        return x + nu(x) * self.offsets

    def phi(self, y, x) -> np.ndarray:
        return self.centers(x) @ np.asarray(y, dtype=float)

    def grad_phi(self, y, x) -> np.ndarray:
        # linear in y: the Jacobian is the center matrix itself
        return self.centers(x)


def triangle_basis() -> StafBasis:
    """Three kernels on a unit equilateral triangle around the state."""
    return StafBasis(TRIANGLE_OFFSETS.copy())


def centers(basis: StafBasis, x) -> np.ndarray:
    return basis.centers(x)


def phi(basis: StafBasis, y, x) -> np.ndarray:
    return basis.phi(y, x)


def grad_phi(basis: StafBasis, y, x) -> np.ndarray:
    return basis.grad_phi(y, x)
