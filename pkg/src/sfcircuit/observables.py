"""Measured quantities: imbalance, current, sinusoid fits, dissipation, vortices."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage, optimize

from .geometry import Grid2D, ReservoirMasks

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-3


class TooFewSamplesError(ValueError):
    pass


class NoStableWindowError(ValueError):
    pass


class FitFailureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ImbalanceTrace:
    t: np.ndarray
    eta: np.ndarray
    eta0: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if t.shape != eta.shape or t.ndim != 1:
            raise ValueError("t and eta must be 1-D arrays of equal length")
        if np.any(np.abs(eta) > 1 + 1e-9):
            raise ValueError("imbalance must satisfy |eta| <= 1")
        if t.size > 1:
            h = np.diff(t)
            if np.any(h <= 0) or not np.allclose(h, h[0], rtol=1e-6, atol=0):
                raise ValueError("samples must be uniform and strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "eta", eta)
        if self.eta0 is None and eta.size:
            object.__setattr__(self, "eta0", float(eta[0]))

    @property
    def stride(self) -> float:
        return float(self.t[1] - self.t[0])

    def window(self, window: tuple[float, float]) -> "ImbalanceTrace":
        sel = self._select(window)
        return ImbalanceTrace(self.t[sel], self.eta[sel], self.eta0)

    def _select(self, window):
        t0, t1 = window
        h = self.stride if self.t.size > 1 else 0.0
        return (self.t >= t0 - 1e-9 * h) & (self.t <= t1 + 1e-9 * h)


@dataclass(frozen=True)
class FitResult:
    omega: float
    A: float
    phase: float
    offset: float
    residual_rms: float
    window: tuple[float, float]


@dataclass(frozen=True)
class VortexRecord:
    x: float
    y: float
    charge: int
    t: float | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def number_imbalance(psi: np.ndarray, masks: ReservoirMasks, grid: Grid2D) -> float:
    """N_L - N_R for a unit-norm field."""
    dens = psi.real**2 + psi.imag**2
    # correctly rounded sums make eta exactly odd under x -> -x
    return (math.fsum(dens[masks.left]) - math.fsum(dens[masks.right])) * grid.cell_area


def current_from_trace(trace: ImbalanceTrace) -> np.ndarray:
    """I = d(eta/2)/dt, second order everywhere (one-sided at the ends)."""
    if trace.t.size < 5:
        raise TooFewSamplesError(f"need >= 5 samples, got {trace.t.size}")
    d = np.diff(trace.eta / 2.0)
    h = trace.stride
    I = np.empty_like(trace.eta)
    I[1:-1] = (d[:-1] + d[1:]) / (2 * h)
    # one-sided second order, written on differences so constants give exactly 0
    I[0] = (3 * d[0] - d[1]) / (2 * h)
    I[-1] = (3 * d[-1] - d[-2]) / (2 * h)
    return I


def _crossings(y: np.ndarray) -> np.ndarray:
    s = np.signbit(y)
    return np.nonzero(s[1:] != s[:-1])[0] + 1


def _centre(t: np.ndarray, eta: np.ndarray) -> float:
    """Mean over a whole number of half periods (falls back to the plain mean)."""
    m = float(np.mean(eta))
    c = _crossings(eta - m)
    if len(c) >= 3:
        # same-direction crossings bracket whole periods
        last = c[-1] if (len(c) - 1) % 2 == 0 else c[-2]
        m = float(np.mean(eta[c[0]:last]))
    return m


def lobe_peaks(trace: ImbalanceTrace) -> list[tuple[float, float]]:
    """(time, |eta - centre|) of the extremum of each half-cycle."""
    y = trace.eta - _centre(trace.t, trace.eta)
    c = _crossings(y)
    bounds = np.concatenate([[0], c, [y.size]])
    out = []
    for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        if b <= a:
            continue
        seg = np.abs(y[a:b])
        j = int(np.argmax(seg))
        if k == len(bounds) - 2 and a + j == y.size - 1 and len(c):
            continue  # trailing half-cycle cut before its extremum
        out.append((float(trace.t[a + j]), float(seg[j])))
    return out


def detect_stable_window(trace: ImbalanceTrace, rel_tol: float = 0.02,
                         min_periods: int = 2) -> tuple[float, float]:
    """Longest trailing run of half-cycles whose successive peak heights agree
    to ``rel_tol``; the window opens at the first such peak."""
    peaks = lobe_peaks(trace)
    if len(peaks) < 6:
        log.warning("trace covers fewer than 3 oscillation periods")
    amps = [a for _, a in peaks]
    start = len(amps) - 1
    while start > 0:
        ref = amps[start]
        if ref <= 0 or abs(amps[start - 1] - ref) / ref >= rel_tol:
            break
        start -= 1
    n_lobes = len(amps) - start
    if len(amps) == 0 or n_lobes < 2 * min_periods:
        raise NoStableWindowError(
            f"no {min_periods}-period window with peak variation < {rel_tol:.0%}")
    return (peaks[start][0], float(trace.t[-1]))


def _spectral_seed(t: np.ndarray, y: np.ndarray) -> float:
    y = y - y.mean()
    nfft = 1 << int(math.ceil(math.log2(16 * y.size)))
    spec = np.abs(np.fft.rfft(y * np.hanning(y.size), nfft))
    spec[0] = 0.0
    k = int(np.argmax(spec))
    return 2 * np.pi * k / (nfft * (t[1] - t[0]))


def _linear_fit(t, y, omega):
    M = np.column_stack([np.cos(omega * t), np.sin(omega * t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return coef, float(np.sum((M @ coef - y) ** 2))


def fit_sinusoid(trace: ImbalanceTrace, window: tuple[float, float] | None = None,
                 max_residual: float = 0.5) -> FitResult:
    """Fit eta ~ A cos(omega t + phase) + offset on ``window``.

    The frequency is seeded from the spectral peak, polished by a scan with
    the linear parameters projected out, then refined jointly.
    """
    if window is None:
        window = (float(trace.t[0]), float(trace.t[-1]))
    sel = trace._select(window)
    t, y = trace.t[sel], trace.eta[sel]
    if t.size < 5 or np.ptp(y) == 0:
        raise FitFailureError("window is too short or the trace is constant")
    w0 = _spectral_seed(t, y)
    if w0 <= 0:
        raise FitFailureError("no spectral peak")
    grid = w0 * np.linspace(0.6, 1.4, 401)
    costs = [_linear_fit(t, y, w)[1] for w in grid]
    w1 = float(grid[int(np.argmin(costs))])
    (a, b, c), _ = _linear_fit(t, y, w1)
    x0 = [math.hypot(a, b), w1, math.atan2(-b, a), c]

    def resid(p):
        return p[0] * np.cos(p[1] * t + p[2]) + p[3] - y

    sol = optimize.least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    A, omega, phase, offset = sol.x
    if A < 0:
        A, phase = -A, phase + np.pi
    phase = float(np.angle(np.exp(1j * phase)))
    if omega < 0:  # cos is even
        omega, phase = -omega, -phase
    rms = float(np.sqrt(np.mean(resid([A, omega, phase, offset]) ** 2)))
    rel = rms / A if A > 0 else np.inf
    if not np.isfinite(rel) or rel > max_residual:
        raise FitFailureError(f"relative residual {rel:.3g} exceeds {max_residual}")
    return FitResult(omega=float(omega), A=float(A), phase=phase, offset=float(offset),
                     residual_rms=rel, window=(float(window[0]), float(window[1])))


def dissipation_strength(eta0: float, fit: FitResult | float,
                         noise_floor: float = NOISE_FLOOR) -> float:
    """D = eta0 - A, snapped to 0 inside the noise floor."""
    A = fit.A if isinstance(fit, FitResult) else float(fit)
    D = eta0 - A
    return 0.0 if abs(D) < noise_floor else D


def max_current(trace: ImbalanceTrace, window: tuple[float, float] | None = None) -> float:
    I = current_from_trace(trace)
    if window is not None:
        I = I[trace._select(window)]
    return float(np.max(np.abs(I)))


def vortex_detect(psi: np.ndarray, grid: Grid2D, density_floor: float = 0.05,
                  region: np.ndarray | None = None, t: float | None = None,
                  tol: float = 1e-3) -> list[VortexRecord]:
    """Phase-winding vortices on grid plaquettes.

    A plaquette counts when its four corners lie in ``region`` (a boolean
    grid mask) and their mean density exceeds ``density_floor`` times the
    peak.  The mean rather than every corner is tested because a core within
    a third of a healing length of a node drops that node below the floor.
    Connected plaquettes of equal charge are merged at their centroid.
    """
    dens = psi.real**2 + psi.imag**2
    mean = 0.25 * (dens[:-1, :-1] + dens[1:, :-1] + dens[1:, 1:] + dens[:-1, 1:])
    valid = mean > density_floor * dens.max()
    if region is not None:
        valid &= region[:-1, :-1] & region[1:, :-1] & region[1:, 1:] & region[:-1, 1:]

    z00, z10, z11, z01 = psi[:-1, :-1], psi[1:, :-1], psi[1:, 1:], psi[:-1, 1:]
    # counter-clockwise in (x, y); angle() lies in (-pi, pi]
    winding = (np.angle(z10 * np.conj(z00)) + np.angle(z11 * np.conj(z10))
               + np.angle(z01 * np.conj(z11)) + np.angle(z00 * np.conj(z01))) / (2 * np.pi)
    n = np.rint(winding)
    n[~valid | (np.abs(winding - n) > tol)] = 0

    xc = grid.x[:-1] + grid.dx / 2
    yc = grid.y[:-1] + grid.dy / 2
    records = []
    for charge in (1, -1):
        labels, count = ndimage.label(n == charge, structure=np.ones((3, 3)))
        for lab in range(1, count + 1):
            ii, jj = np.nonzero(labels == lab)
            records.append(VortexRecord(float(xc[ii].mean()), float(yc[jj].mean()), charge, t))
    if np.any(np.abs(n) > 1):
        log.debug("ignoring %d multiply-wound plaquettes", int(np.sum(np.abs(n) > 1)))
    records.sort(key=lambda r: (r.x, r.y, r.charge))
    return records


def count_vortex_pairs(records: Sequence[VortexRecord]) -> int:
    plus = sum(1 for r in records if r.charge == 1)
    minus = sum(1 for r in records if r.charge == -1)
    return min(plus, minus)


@dataclass(frozen=True)
class TraceAnalysis:
    eta0: float
    omega: float
    A: float
    I_max: float
    D: float
    window: tuple[float, float]
    fit: FitResult | None
    note: str = ""


def analyse_trace(trace: ImbalanceTrace) -> TraceAnalysis:
    """Window, fit, peak current and dissipation with graceful degradation.

    Traces without a stable window are fitted over their full span; traces
    that cannot be fitted at all (e.g. no bias) report their peak deviation
    as the amplitude and NaN frequency.
    """
    note = ""
    try:
        window = detect_stable_window(trace)
    except NoStableWindowError as exc:
        window, note = (float(trace.t[0]), float(trace.t[-1])), str(exc)
    try:
        fit = fit_sinusoid(trace, window)
        A, omega = fit.A, fit.omega
    except FitFailureError as exc:
        fit, note = None, f"{note}; {exc}" if note else str(exc)
        seg = trace.window(window).eta
        A, omega = float(np.max(np.abs(seg - seg.mean()))) if seg.size else 0.0, math.nan
    I_max = max_current(trace, window) if trace.t.size >= 5 else math.nan
    return TraceAnalysis(eta0=float(trace.eta0), omega=omega, A=A, I_max=I_max,
                         D=dissipation_strength(float(trace.eta0), A),
                         window=window, fit=fit, note=note)


def write_trace_csv(trace: ImbalanceTrace, path: str | Path) -> None:
    I = current_from_trace(trace) if trace.t.size >= 5 else np.zeros_like(trace.eta)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "eta", "I"])
        for row in zip(trace.t, trace.eta, I):
            w.writerow([f"{v:.12g}" for v in row])


def read_trace_csv(path: str | Path, eta0: float | None = None) -> ImbalanceTrace:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return ImbalanceTrace(np.atleast_1d(data["t"]), np.atleast_1d(data["eta"]), eta0)
