"""Barotropic constitutive laws, relative entropy, and measured equivalence constants."""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def _zero_slip(eps):
    return 0.0


@dataclass(frozen=True)
class GasModel:
    """Pressure law p = a0 rho^gamma plus viscosity coefficients and the slip law.

    slip_law maps the viscosity scale eps to the wall friction coefficient
    lambda_eps in [0, inf]; math.inf encodes a no-slip wall.
    """

    a0: float = 1.0
    gamma: float = 2.0
    mu: float = 1.0
    eta: float = 1.0
    slip_law: Callable[[float], float] = field(default=_zero_slip)

    def __post_init__(self):
        if self.a0 <= 0:
            raise ValueError("a0 must be positive")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if self.mu <= 0 or self.eta <= 0:
            raise ValueError("viscosities mu, eta must be positive")

    def slip_coefficient(self, eps):
        lam = self.slip_law(eps)
        if lam < 0:
            raise ValueError(f"slip law returned negative lambda {lam} at eps={eps}")
        return lam


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    return rho


def pressure(model, rho):
    """p(rho) = a0 rho^gamma."""
    rho = _check_rho(rho)
    return model.a0 * rho**model.gamma


def sound_speed(model, rho):
    """c(rho) = sqrt(p'(rho)) = sqrt(a0 gamma rho^(gamma-1))."""
    rho = _check_rho(rho)
    return np.sqrt(model.a0 * model.gamma * rho ** (model.gamma - 1.0))


def h_energy(model, rho):
    """Pressure potential H(rho) = a0 rho^gamma / (gamma - 1)."""
    rho = _check_rho(rho)
    return model.a0 * rho**model.gamma / (model.gamma - 1.0)


def h_prime(model, rho):
    rho = _check_rho(rho)
    return model.a0 * model.gamma * rho ** (model.gamma - 1.0) / (model.gamma - 1.0)


def h_double_prime(model, rho):
    rho = _check_rho(rho)
    return model.a0 * model.gamma * rho ** (model.gamma - 2.0)


def h_relative(model, rho, r):
    """Bregman divergence H(rho; r) = H(rho) - H(r) - H'(r)(rho - r)."""
    rho = _check_rho(rho)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("reference density r must be positive")
    return h_energy(model, rho) - h_energy(model, r) - h_prime(model, r) * (rho - r)


def _distance_surrogate(rho, r, gamma):
    """|rho-r|^2 where |rho-r|<=1, |rho-r|^gamma where |rho-r|>=1."""
    d = np.abs(rho - r)
    return np.where(d <= 1.0, d**2, d**gamma)


def _sample_box(model, r_min, r_max, rho_max, n_rho, n_r):
    if not (0 < r_min <= r_max):
        raise ValueError("need 0 < r_min <= r_max")
    if rho_max <= r_max:
        raise ValueError("rho_max must exceed r_max")
    rho = np.linspace(0.0, rho_max, n_rho)
    r = np.linspace(r_min, r_max, n_r)
    P, R = np.meshgrid(rho, r, indexing="ij")
    # both sides vanish quadratically on the diagonal; exclude a sliver where
    # the ratio is pure cancellation noise
    keep = np.abs(P - R) > 1e-6 * np.maximum(1.0, R)
    return P[keep], R[keep]


def equiv_constants(model, r_min, r_max, rho_max, n_rho=401, n_r=101):
    """Measured constants c_low, c_high with c_low*Phi <= H(rho;r) <= c_high*Phi.

    Phi is the quadratic/power-gamma distance surrogate; constants are empirical
    extremes of the ratio over a dense sample box, excluding the diagonal rho=r.
    """
    P, R = _sample_box(model, r_min, r_max, rho_max, n_rho, n_r)
    ratio = h_relative(model, P, R) / _distance_surrogate(P, R, model.gamma)
    return float(ratio.min()), float(ratio.max())


def bregman_gap(model, rho, r):
    """rho(H'(rho) - H'(r)) - r(rho - r)H''(r); comparable to H(rho; r)."""
    rho = _check_rho(rho)
    return rho * (h_prime(model, rho) - h_prime(model, r)) - r * (rho - r) * h_double_prime(
        model, r
    )


def bregman_coercivity_constant(model, r_min, r_max, rho_max, n_rho=401, n_r=101):
    """Smallest sampled c0 with |bregman_gap| <= c0 * H(rho; r) over the box."""
    P, R = _sample_box(model, r_min, r_max, rho_max, n_rho, n_r)
    ratio = np.abs(bregman_gap(model, P, R)) / h_relative(model, P, R)
    return float(ratio.max())
