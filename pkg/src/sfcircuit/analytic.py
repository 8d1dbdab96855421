"""Closed-form Thomas-Fermi and Bogoliubov estimates for the two-reservoir circuit.

Units: hbar = m = 1.  ``g`` is the coupling for a unit-norm condensate and
``N`` only rescales extensive energies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# empirical ratio of the fitted critical current to the Landau current
CRITICAL_TO_LANDAU_RATIO = 0.53
# vortex-nucleation velocity over Landau velocity for a moving cylinder
CYLINDER_VORTEX_RATIO = 0.42
DEFAULT_DELTA_COEFF = 2.3


class SubcriticalWidthError(ValueError):
    pass


class InsufficientEnergyError(ValueError):
    pass


def critical_bias(g: float, R: float) -> float:
    """Bias at which the TF ground state becomes fully polarised."""
    return g / (math.pi * R**2)


def critical_width(g: float, R: float) -> float:
    """Width where the transverse zero-point energy pi^2/2d^2 equals mu = g/(pi R^2)."""
    return R * math.pi**1.5 / math.sqrt(2.0 * g)


def reservoir_density(R: float) -> float:
    return 1.0 / (2.0 * math.pi * R**2)


def sound_speed(g: float, n: float) -> float:
    return math.sqrt(g * n)


def healing_length(g: float, n: float) -> float:
    return 1.0 / math.sqrt(2.0 * g * n)


@dataclass(frozen=True)
class AnalyticContext:
    g: float = 2.5e4
    R: float = 4.5
    N: float = 1.0

    @property
    def n(self) -> float:
        return reservoir_density(self.R)

    @property
    def c_sound(self) -> float:
        return sound_speed(self.g, self.n)

    @property
    def xi(self) -> float:
        return healing_length(self.g, self.n)

    @property
    def V_c(self) -> float:
        return critical_bias(self.g, self.R)

    @property
    def d_c(self) -> float:
        return critical_width(self.g, self.R)


def eq3_frequency(g: float, R: float, l: float, d: float,
                  delta_coeff: float = DEFAULT_DELTA_COEFF) -> float:
    """Channel-LC frequency with end correction delta = delta_coeff * d.

    Zero at and below the critical width (Heaviside with Theta(0) = 0).
    """
    if min(g, R, l, d) <= 0:
        raise ValueError("g, R, l, d must be positive")
    d_eff = d - critical_width(g, R)
    if d_eff <= 0:
        return 0.0
    n = reservoir_density(R)
    area = math.pi * R**2
    omega_sq = g * n * d_eff / (l + delta_coeff * d) * (2.0 / area)
    return math.sqrt(omega_sq)


def bogoliubov_energy(k, g: float, n: float):
    eps = 0.5 * np.asarray(k, dtype=float) ** 2
    return np.sqrt(eps**2 + 2.0 * eps * g * n)


def landau_velocity(g: float, n: float) -> float:
    """min_k E_k / k, attained as k -> 0: the sound speed."""
    return sound_speed(g, n)


def landau_current(g: float, R: float, d: float) -> float:
    d_c = critical_width(g, R)
    if d <= d_c:
        raise SubcriticalWidthError(f"d={d} is not above the critical width {d_c:.4f}")
    d_eff = d - d_c
    n = reservoir_density(R)
    return landau_velocity(g, n) * d_eff * n


def critical_current_estimate(g: float, R: float, d: float,
                              ratio: float = CRITICAL_TO_LANDAU_RATIO) -> float:
    return ratio * landau_current(g, R, d)


def tf_initial_energy(eta0: float, g: float, R: float, N: float = 1.0) -> float:
    if not 0 <= eta0 <= 1:
        raise ValueError(f"eta0 must lie in [0, 1], got {eta0}")
    return g * N * (1.0 + eta0**2) / (4.0 * math.pi * R**2)


def tf_energy_loss(eta0: float, D_s: float, g: float, R: float, N: float = 1.0) -> float:
    """Interaction energy released when the imbalance drops from eta0 to eta0 - D_s."""
    if not 0 <= D_s <= eta0:
        raise ValueError(f"need 0 <= D_s <= eta0, got D_s={D_s}, eta0={eta0}")
    return g * N * (2.0 * eta0 * D_s - D_s**2) / (4.0 * math.pi * R**2)


def vortex_pair_energy(d_eff: float, g: float, R: float, N: float = 1.0) -> float:
    """E_vp = 2 pi N n ln(d_eff / xi)."""
    n = reservoir_density(R)
    xi = healing_length(g, n)
    if d_eff <= xi:
        raise ValueError(f"d_eff={d_eff} must exceed the healing length {xi:.4f}")
    return 2.0 * math.pi * N * n * math.log(d_eff / xi)


def dissipation_step_estimate(eta0: float, d_eff: float, g: float, R: float) -> float:
    """Imbalance drop whose TF energy loss pays for exactly one vortex pair.

    Smaller root of 2 eta0 D - D^2 = E_vp 4 pi R^2 / (g N); N cancels.
    """
    if eta0 <= 0:
        raise ValueError("eta0 must be positive")
    k = vortex_pair_energy(d_eff, g, R, 1.0) * 4.0 * math.pi * R**2 / g
    disc = eta0**2 - k
    if disc < 0:
        raise InsufficientEnergyError(
            f"eta0={eta0} cannot supply a vortex pair (needs eta0 >= {math.sqrt(k):.4f})")
    # k / (eta0 + sqrt(disc)) avoids cancellation when k is small
    return k / (eta0 + math.sqrt(disc))
