"""Split-step Fourier integrator for the 2D Gross-Pitaevskii equation.

Units: hbar = m = 1.  Fields are complex arrays of shape ``grid.shape``;
the kinetic step treats the box as periodic, which is harmless because the
hard wall keeps the density at the box edge at roundoff level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numba
import numpy as np
import scipy.fft as sfft

from .geometry import Grid2D

log = logging.getLogger(__name__)


class NonFiniteFieldError(FloatingPointError):
    def __init__(self, message: str, last_valid_time: float | None = None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_delta: float):
        super().__init__(message)
        self.last_delta = last_delta


@dataclass(frozen=True)
class SolverParams:
    dt: float = 2e-4
    dtau: float = 1e-3
    T: float = 20.0
    sample_every: int = 50
    gs_energy_tol: float = 1e-10
    max_gs_iters: int = 100_000
    gs_check_every: int = 10
    workers: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and self.dtau > 0 and self.T >= 0):
            raise ValueError("dt, dtau must be positive and T non-negative")
        if self.sample_every < 1 or self.gs_check_every < 1:
            raise ValueError("strides must be >= 1")

    def check_stability(self, grid: Grid2D) -> None:
        """dt * E_kin_max < 1/2 with k_max = pi/dx."""
        e_kin_max = 0.5 * (np.pi / grid.dx) ** 2
        if self.dt * e_kin_max >= 0.5:
            raise ValueError(
                f"dt={self.dt} too large for dx={grid.dx}: "
                f"dt*E_kin_max={self.dt * e_kin_max:.3f} >= 0.5"
            )


@numba.njit(cache=True)
def _phase_kick(psi, V, g, dt):
    # psi <- psi * exp(-i dt (V + g|psi|^2)), in place
    flat = psi.ravel()
    vflat = V.ravel()
    for i in range(flat.size):
        z = flat[i]
        th = dt * (vflat[i] + g * (z.real * z.real + z.imag * z.imag))
        c = np.cos(th)
        s = np.sin(th)
        flat[i] = complex(z.real * c + z.imag * s, z.imag * c - z.real * s)


@numba.njit(cache=True)
def _decay_kick(psi, V, g, dtau):
    # psi <- psi * exp(-dtau (V + g|psi|^2)), in place
    flat = psi.ravel()
    vflat = V.ravel()
    for i in range(flat.size):
        z = flat[i]
        flat[i] = z * np.exp(-dtau * (vflat[i] + g * (z.real * z.real + z.imag * z.imag)))


def norm(psi: np.ndarray, grid: Grid2D) -> float:
    return float(np.sum(psi.real**2 + psi.imag**2) * grid.cell_area)


def normalize(psi: np.ndarray, grid: Grid2D) -> np.ndarray:
    return psi / np.sqrt(norm(psi, grid))


def _check_finite(psi: np.ndarray, t: float | None = None) -> None:
    if not np.isfinite(psi).all():
        raise NonFiniteFieldError("field contains NaN/Inf", last_valid_time=t)


def _energy_terms(psi, V, grid: Grid2D):
    dA = grid.cell_area
    dens = psi.real**2 + psi.imag**2
    psik = sfft.fft2(psi)
    kin = 0.5 * np.sum(grid.k_squared() * (psik.real**2 + psik.imag**2)) * dA / psi.size
    pot = np.sum(V * dens) * dA
    inter = np.sum(dens**2) * dA
    return float(kin), float(pot), float(inter)


def total_energy(psi: np.ndarray, V: np.ndarray, g: float, grid: Grid2D) -> float:
    """E = int [ |grad psi|^2/2 + V|psi|^2 + (g/2)|psi|^4 ] dA, gradient spectral."""
    kin, pot, inter = _energy_terms(psi, V, grid)
    return kin + pot + 0.5 * g * inter


def chemical_potential(psi: np.ndarray, V: np.ndarray, g: float, grid: Grid2D) -> float:
    kin, pot, inter = _energy_terms(psi, V, grid)
    return (kin + pot + g * inter) / norm(psi, grid)


class SplitStep:
    """Strang-split propagator bound to one grid, potential and coupling."""

    def __init__(self, grid: Grid2D, V: np.ndarray, g: float, dt: float,
                 mode: str = "real", workers: int = 1):
        if mode not in ("real", "imaginary"):
            raise ValueError(f"mode must be 'real' or 'imaginary', got {mode!r}")
        if V.shape != grid.shape:
            raise ValueError(f"potential shape {V.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.V = np.ascontiguousarray(V, dtype=np.float64)
        self.g = float(g)
        self.dt = float(dt)
        self.mode = mode
        self.workers = workers
        k2 = grid.k_squared()
        if mode == "real":
            self._kin = np.exp(-0.5j * self.dt * k2)
        else:
            self._kin = np.exp(-0.5 * self.dt * k2).astype(np.complex128)

    def _local(self, psi, fraction):
        if self.mode == "real":
            _phase_kick(psi, self.V, self.g, fraction * self.dt)
        else:
            _decay_kick(psi, self.V, self.g, fraction * self.dt)

    def _kinetic(self, psi):
        psik = sfft.fft2(psi, overwrite_x=True, workers=self.workers)
        psik *= self._kin
        return sfft.ifft2(psik, overwrite_x=True, workers=self.workers)

    def step(self, psi: np.ndarray) -> np.ndarray:
        """One Strang step; returns a new array (input untouched)."""
        psi = np.array(psi, dtype=np.complex128, order="C", copy=True)
        if self.mode == "real":
            self._local(psi, 0.5)
            psi = self._kinetic(psi)
            self._local(psi, 0.5)
        else:
            # Renormalise after every sub-step: otherwise the second nonlinear
            # factor sees a norm-decayed density and the fixed point picks up
            # an O(dtau) error in the effective coupling.
            self._local(psi, 0.5)
            psi = normalize(psi, self.grid)
            psi = normalize(self._kinetic(psi), self.grid)
            self._local(psi, 0.5)
            psi = normalize(psi, self.grid)
        _check_finite(psi)
        return psi

    def advance(self, psi: np.ndarray, nsteps: int) -> np.ndarray:
        """``nsteps`` real-time Strang steps with adjacent local half-steps fused.

        In real time the local factor is a pure phase, so |psi|^2 is unchanged
        by it and two consecutive half-steps equal one full step exactly.
        """
        if self.mode != "real":
            for _ in range(nsteps):
                psi = self.step(psi)
            return psi
        psi = np.array(psi, dtype=np.complex128, order="C", copy=True)
        if nsteps == 0:
            return psi
        self._local(psi, 0.5)
        for i in range(nsteps):
            psi = self._kinetic(psi)
            self._local(psi, 1.0 if i < nsteps - 1 else 0.5)
        return psi


def strang_step(psi: np.ndarray, V_total: np.ndarray, g: float, dt: float,
                grid: Grid2D, mode: str = "real") -> np.ndarray:
    """Single split step.  In imaginary mode ``dt`` is the imaginary-time
    increment and the result is renormalised to unit norm."""
    return SplitStep(grid, V_total, g, dt, mode).step(psi)


@dataclass
class GroundState:
    psi: np.ndarray = field(repr=False)
    energy: float
    chemical_potential: float
    iterations: int
    energies: np.ndarray = field(repr=False)


def initial_guess(V_total: np.ndarray, grid: Grid2D,
                  interior: np.ndarray | None = None) -> np.ndarray:
    """Uniform positive amplitude on the low-potential region, zero elsewhere."""
    if interior is None:
        lo, hi = float(V_total.min()), float(V_total.max())
        interior = np.ones(grid.shape, bool) if hi == lo else V_total < lo + 0.5 * (hi - lo)
    psi = interior.astype(np.complex128)
    return normalize(psi, grid)


def ground_state(V_total: np.ndarray, g: float, grid: Grid2D,
                 params: SolverParams = SolverParams(),
                 psi0: np.ndarray | None = None,
                 interior: np.ndarray | None = None) -> GroundState:
    """Imaginary-time relaxation to the lowest-energy unit-norm state.

    Stops when the relative energy change per unit imaginary time, measured
    every ``gs_check_every`` iterations, falls below ``gs_energy_tol``.
    """
    if not np.isfinite(V_total).all():
        raise ValueError("potential must be finite")
    psi = initial_guess(V_total, grid, interior) if psi0 is None else normalize(psi0, grid)
    stepper = SplitStep(grid, V_total, g, params.dtau, "imaginary", params.workers)
    span = params.gs_check_every * params.dtau
    energies = [total_energy(psi, V_total, g, grid)]
    delta = np.inf
    it = 0
    while it < params.max_gs_iters:
        for _ in range(params.gs_check_every):
            psi = stepper.step(psi)
        it += params.gs_check_every
        e = total_energy(psi, V_total, g, grid)
        delta = abs(e - energies[-1]) / (abs(e) * span)
        energies.append(e)
        if delta < params.gs_energy_tol:
            break
    else:
        raise ConvergenceError(
            f"imaginary-time evolution did not converge in {params.max_gs_iters} "
            f"iterations (last relative delta per unit tau {delta:.3e})", delta)
    log.debug("ground state converged after %d iterations, E=%.10g", it, energies[-1])
    # fix the global phase so the result is real and non-negative
    ref = psi.flat[np.argmax(np.abs(psi))]
    psi = psi * (abs(ref) / ref)
    return GroundState(psi=psi, energy=energies[-1],
                       chemical_potential=chemical_potential(psi, V_total, g, grid),
                       iterations=it, energies=np.asarray(energies))


@dataclass
class Trajectory:
    times: np.ndarray
    records: dict[str, np.ndarray]
    snapshots: dict[float, np.ndarray] = field(default_factory=dict, repr=False)
    psi_final: np.ndarray | None = field(default=None, repr=False)


Observer = Callable[[float, np.ndarray], float]


def evolve_real_time(psi0: np.ndarray, V_trap: np.ndarray, g: float, grid: Grid2D,
                     params: SolverParams = SolverParams(),
                     observers: Mapping[str, Observer] | Sequence[Observer] = (),
                     snapshot_times: Sequence[float] = ()) -> Trajectory:
    """Advance ``psi0`` for ``params.T`` in real time.

    Observers are called with ``(t, psi)`` every ``sample_every`` steps
    starting at t = 0, so the samples are uniform.  Snapshots are copies of
    the field at the step nearest each requested time.
    """
    params.check_stability(grid)
    if not isinstance(observers, Mapping):
        observers = {f"obs{i}": f for i, f in enumerate(observers)}
    nsteps = int(round(params.T / params.dt))
    sample_steps = set(range(0, nsteps + 1, params.sample_every))
    snap_steps = {}
    for ts in snapshot_times:
        s = int(round(ts / params.dt))
        if 0 <= s <= nsteps:
            snap_steps[s] = ts
    stops = sorted(sample_steps | set(snap_steps) | {nsteps})

    stepper = SplitStep(grid, V_trap, g, params.dt, "real", params.workers)
    psi = np.array(psi0, dtype=np.complex128, order="C", copy=True)
    _check_finite(psi, None)
    times, records, snapshots = [], {k: [] for k in observers}, {}
    current = 0
    for s in stops:
        psi = stepper.advance(psi, s - current)
        t = s * params.dt
        try:
            _check_finite(psi, current * params.dt)
        except NonFiniteFieldError:
            log.error("non-finite field between t=%g and t=%g", current * params.dt, t)
            raise
        current = s
        if s in sample_steps:
            times.append(t)
            for name, fn in observers.items():
                records[name].append(fn(t, psi))
        if s in snap_steps:
            snapshots[snap_steps[s]] = psi.copy()
    return Trajectory(times=np.asarray(times),
                      records={k: np.asarray(v) for k, v in records.items()},
                      snapshots=snapshots, psi_final=psi)
