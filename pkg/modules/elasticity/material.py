"""
Isotropic linear elastic material in Lame form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from modules.core.exceptions import SpaceParameterError


@dataclass(frozen=True)
class IsotropicMaterial:
    lam: float
    mu: float

    def __post_init__(self):
        if self.mu <= 0.0:
            raise SpaceParameterError(f"shear modulus mu must be positive (got {self.mu})")
        if self.lam < 0.0:
            raise SpaceParameterError(f"Lame parameter lambda must be >= 0 (got {self.lam})")

    @property
    def kappa(self) -> float:
        """lambda / (2 lambda + 2 mu): the trace coefficient of the compliance."""
        return self.lam / (2.0 * self.lam + 2.0 * self.mu)


def apply_compliance(material: IsotropicMaterial, sigma) -> np.ndarray:
    """A sigma = (sigma - kappa tr(sigma) I) / (2 mu), on stacks (..., 2, 2)."""
    s = np.asarray(sigma, dtype=float)
    tr = s[..., 0, 0] + s[..., 1, 1]
    out = s.copy()
    out[..., 0, 0] -= material.kappa * tr
    out[..., 1, 1] -= material.kappa * tr
    return out / (2.0 * material.mu)


def apply_elasticity(material: IsotropicMaterial, grad_u) -> np.ndarray:
    """C eps(u) = lambda div(u) I + 2 mu eps(u) from displacement gradients (..., 2, 2)."""
    g = np.asarray(grad_u, dtype=float)
    eps = 0.5 * (g + np.swapaxes(g, -1, -2))
    div = g[..., 0, 0] + g[..., 1, 1]
    out = 2.0 * material.mu * eps
    out[..., 0, 0] += material.lam * div
    out[..., 1, 1] += material.lam * div
    return out
