"""Low-dimensional similarity kernel and its per-pair gradients.

Embedding distance d is mapped to a similarity in (0, 1] by

    phi(d; a, b) = 1 / (1 + a * d**(2*b))

and the stochastic optimizer moves points along the gradients of the
attractive energy -log(phi) and the repulsive energy -log(1 - phi).
Both gradients are available in closed form:

    d(-log phi)/d(e_i)     = 2*a*b * d**(2b-2) / (1 + a*d**2b) * (e_i - e_j)
    d(-log(1-phi))/d(e_i)  = -2*b / ((eps + d^2) * (1 + a*d**2b)) * (e_i - e_j)

where eps pads the repulsive denominator near coincident points.  Every
gradient coordinate is clipped to +-grad_clip before use.  Setting
eps_rep=0 and grad_clip=inf recovers the exact analytic gradients used
by the expectation-level analysis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numba
import numpy as np
from scipy.optimize import curve_fit

__all__ = ["Kernel", "fit_ab", "phi", "grad_attr", "grad_rep"]


def fit_ab(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Least-squares fit of (a, b) so that phi approximates the target
    curve t(d) = 1 for d <= min_dist, exp(-(d - min_dist)/spread) beyond.

    The fit runs on a fixed grid of 300 points over [0, 3*spread] and is
    deterministic.  If the solver fails, falls back to (1, 1) with a
    warning.
    """
    if min_dist < 0:
        raise ValueError("min_dist must be nonnegative")
    if spread <= 0:
        raise ValueError("spread must be positive")

    def curve(d, a, b):
        return 1.0 / (1.0 + a * d ** (2.0 * b))

    xs = np.linspace(0.0, 3.0 * spread, 300)
    ys = np.where(xs <= min_dist, 1.0, np.exp(-(xs - min_dist) / spread))
    try:
        params, _ = curve_fit(curve, xs, ys)
    except RuntimeError:
        warnings.warn("kernel shape fit did not converge; using a=b=1")
        return 1.0, 1.0
    return float(params[0]), float(params[1])


@dataclass(frozen=True)
class Kernel:
    """Similarity curve shape (a, b) plus the optimizer's numerical guards."""

    a: float
    b: float
    eps_rep: float = 1e-3
    grad_clip: float = 4.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("kernel shape parameters a, b must be positive")
        if self.eps_rep < 0:
            raise ValueError("eps_rep must be nonnegative")
        if not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive")

    @classmethod
    def from_min_dist(
        cls,
        min_dist: float = 0.1,
        spread: float = 1.0,
        eps_rep: float = 1e-3,
        grad_clip: float = 4.0,
    ) -> "Kernel":
        a, b = fit_ab(min_dist, spread)
        return cls(a=a, b=b, eps_rep=eps_rep, grad_clip=grad_clip)

    def unguarded(self) -> "Kernel":
        """Copy with clipping and the repulsion pad disabled (analysis mode)."""
        return replace(self, eps_rep=0.0, grad_clip=np.inf)


def phi(kernel: Kernel, d):
    """Similarity phi(d) = 1/(1 + a*d**(2b)); strictly decreasing, phi(0)=1."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    out = 1.0 / (1.0 + kernel.a * d ** (2.0 * kernel.b))
    return out if out.ndim else float(out)


def phi_from_sqdist(kernel: Kernel, dsq):
    """phi evaluated on squared distances, avoiding the sqrt."""
    dsq = np.asarray(dsq, dtype=np.float64)
    out = 1.0 / (1.0 + kernel.a * dsq ** kernel.b)
    return out if out.ndim else float(out)


@numba.njit(cache=True, inline="always")
def attr_coeff(a, b, dsq):
    # scalar coefficient of (e_i - e_j) in the gradient of -log(phi)
    return 2.0 * a * b * dsq ** (b - 1.0) / (1.0 + a * dsq**b)


@numba.njit(cache=True, inline="always")
def rep_coeff(a, b, eps_rep, dsq):
    # scalar coefficient of (e_i - e_s) in the gradient of -log(1 - phi)
    return -2.0 * b / ((eps_rep + dsq) * (1.0 + a * dsq**b))


def grad_attr(kernel: Kernel, e_i: np.ndarray, e_j: np.ndarray) -> np.ndarray:
    """Gradient of the attractive energy -log(phi(|e_i - e_j|)) w.r.t. e_i.

    Zero at coincident points; coordinates clipped to +-grad_clip.
    Antisymmetric: grad_attr(e_i, e_j) == -grad_attr(e_j, e_i).
    """
    diff = np.asarray(e_i, dtype=np.float64) - np.asarray(e_j, dtype=np.float64)
    dsq = float(diff @ diff)
    if dsq == 0.0:
        return np.zeros_like(diff)
    g = attr_coeff(kernel.a, kernel.b, dsq) * diff
    return np.clip(g, -kernel.grad_clip, kernel.grad_clip)


def grad_rep(kernel: Kernel, e_i: np.ndarray, e_s: np.ndarray) -> np.ndarray:
    """Gradient of the repulsive energy -log(1 - phi(|e_i - e_s|)) w.r.t. e_i.

    Zero at coincident points (guarded singularity); the denominator is
    padded by eps_rep; coordinates clipped to +-grad_clip.
    """
    diff = np.asarray(e_i, dtype=np.float64) - np.asarray(e_s, dtype=np.float64)
    dsq = float(diff @ diff)
    if dsq == 0.0:
        return np.zeros_like(diff)
    g = rep_coeff(kernel.a, kernel.b, kernel.eps_rep, dsq) * diff
    return np.clip(g, -kernel.grad_clip, kernel.grad_clip)
