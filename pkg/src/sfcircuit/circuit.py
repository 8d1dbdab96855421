"""LC oscillator with a quantum current regulator.

Between events the charge and current follow the exact harmonic orbit

    Q' = I,   I' = -omega^2 Q.

Whenever |I| climbs to the threshold ``I_c`` it is knocked down by one
quantum ``delta_I = D_s * omega / 2`` (a vortex pair is created) with Q
continuous.  Event times are solved in closed form, so the simulation has
no time-stepping error.  The imbalance maps to charge as eta = 2 Q.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class InvalidInitialCurrentError(ValueError):
    pass


class CalibrationImpossibleError(ValueError):
    """Raised when the data cannot bound I_c; ``omega`` carries what was fitted."""

    def __init__(self, message: str, omega: float | None = None):
        super().__init__(message)
        self.omega = omega


@dataclass(frozen=True)
class CircuitParams:
    omega: float
    I_c: float
    D_s: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not 0 < self.delta_I < self.I_c:
            raise ValueError(
                f"need 0 < delta_I < I_c, got delta_I={self.delta_I}, I_c={self.I_c}")

    @property
    def delta_I(self) -> float:
        return self.D_s * self.omega / 2.0

    @property
    def threshold_eta0(self) -> float:
        """Smallest initial imbalance whose orbit reaches I_c."""
        return 2.0 * self.I_c / self.omega

    @property
    def invariant_drop(self) -> float:
        """Reduction of I^2 + omega^2 Q^2 caused by one event."""
        return self.I_c**2 - (self.I_c - self.delta_I) ** 2


# calibration reported for l = 2, d = 0.6
PAPER_PARAMS = CircuitParams(omega=0.8984, I_c=0.0289, D_s=0.0145)


@dataclass(frozen=True)
class CircuitState:
    Q: float
    I: float
    t: float

    @property
    def eta(self) -> float:
        return 2.0 * self.Q


@dataclass(frozen=True)
class RegulatorEvent:
    t: float
    I_before: float
    I_after: float
    Q_at_event: float


@dataclass
class CircuitTrace:
    t: np.ndarray
    Q: np.ndarray
    I: np.ndarray
    events: list[RegulatorEvent] = field(default_factory=list)
    # sqrt(I^2 + omega^2 Q^2) on the last orbit
    final_amplitude: float = 0.0

    @property
    def eta(self) -> np.ndarray:
        return 2.0 * self.Q

    @property
    def states(self) -> list[CircuitState]:
        return [CircuitState(q, i, t) for q, i, t in zip(self.Q, self.I, self.t)]


def _orbit(Q0, I0, omega, tau):
    c, s = np.cos(omega * tau), np.sin(omega * tau)
    return Q0 * c + (I0 / omega) * s, -omega * Q0 * s + I0 * c


def _next_event_delay(Q0: float, I0: float, omega: float, I_c: float) -> float | None:
    """Delay until |I| first reaches I_c while increasing, or None."""
    amp = math.hypot(I0, omega * Q0)
    # tangent orbits (amp == I_c up to roundoff) never trigger
    if amp <= I_c * (1.0 + 1e-12):
        return None
    # I(tau) = amp * cos(omega*tau + theta)
    theta = math.atan2(omega * Q0, I0)
    alpha = math.acos(I_c / amp)
    # |cos| rises through I_c/amp at phases k*pi - alpha
    k = math.ceil((theta + alpha) / math.pi)
    phase = k * math.pi - alpha
    return (phase - theta) / omega


def simulate_circuit(params: CircuitParams, Q0: float, I0: float, T: float,
                     sample_stride: float) -> CircuitTrace:
    """Sample the regulated orbit on t = 0, stride, 2*stride, ... <= T."""
    if abs(I0) > params.I_c:
        raise InvalidInitialCurrentError(f"|I0|={abs(I0)} exceeds I_c={params.I_c}")
    if sample_stride <= 0:
        raise ValueError("sample_stride must be positive")
    w, I_c = params.omega, params.I_c

    # event log first: all events are determined by the orbit alone
    events: list[RegulatorEvent] = []
    segments = [(0.0, Q0, I0)]
    t, Q, I = 0.0, Q0, I0
    while True:
        delay = _next_event_delay(Q, I, w, I_c)
        if delay is None or t + delay > T:
            break
        t += delay
        Q, I = (float(v) for v in _orbit(Q, I, w, delay))
        sign = 1.0 if I >= 0 else -1.0
        I_after = sign * (I_c - params.delta_I)
        events.append(RegulatorEvent(t=t, I_before=sign * I_c, I_after=I_after, Q_at_event=float(Q)))
        I = I_after
        segments.append((t, Q, I))

    n = int(math.floor(T / sample_stride + 1e-9)) + 1
    ts = np.arange(n) * sample_stride
    Qs = np.empty(n)
    Is = np.empty(n)
    starts = np.array([s[0] for s in segments])
    # a sample at an event time reports the pre-jump orbit
    idx = np.searchsorted(starts, ts, side="left") - 1
    idx[0] = 0
    for j, (t0, q0, i0) in enumerate(segments):
        sel = idx == j
        if sel.any():
            Qs[sel], Is[sel] = _orbit(q0, i0, w, ts[sel] - t0)
    return CircuitTrace(t=ts, Q=Qs, I=Is, events=events,
                        final_amplitude=math.hypot(I, w * Q))


@dataclass(frozen=True)
class CircuitSummary:
    eta0: float
    A: float
    I_max: float
    D: float
    n_events: int


def circuit_summary(params: CircuitParams, eta0: float, T: float | None = None) -> CircuitSummary:
    """Post-event amplitude, peak current and dissipation for a quench from eta0."""
    if eta0 < 0:
        raise ValueError("eta0 must be non-negative")
    if T is None:
        # every event happens within the first quarter period
        T = 2.0 * math.pi / params.omega
    tr = simulate_circuit(params, eta0 / 2.0, 0.0, T, sample_stride=T)
    if not tr.events:
        return CircuitSummary(eta0, eta0, params.omega * eta0 / 2.0, 0.0, 0)
    amp = tr.final_amplitude
    A = 2.0 * amp / params.omega
    return CircuitSummary(eta0, A, amp, eta0 - A, len(tr.events))


def staircase(params: CircuitParams, eta0_list: Sequence[float]) -> list[CircuitSummary]:
    eta0s = list(eta0_list)
    if any(b < a for a, b in zip(eta0s, eta0s[1:])):
        raise ValueError("eta0_list must be sorted ascending")
    return [circuit_summary(params, e) for e in eta0s]


def first_jump(eta0s: Sequence[float], D: Sequence[float],
               min_jump: float = 0.005) -> tuple[int, float] | None:
    """Index of the first point after a D jump > min_jump, and the jump height."""
    for i in range(1, len(D)):
        jump = D[i] - D[i - 1]
        if jump > min_jump:
            return i, jump
    return None


def calibrate(eta0s: Sequence[float], omegas: Sequence[float],
              I_maxs: Sequence[float], Ds: Sequence[float],
              noise_floor: float = 1e-3, min_jump: float = 0.005) -> CircuitParams:
    """Circuit parameters from per-bias fit results sorted by eta0.

    omega is averaged over traces without dissipation, I_c is the largest
    measured peak current and D_s the height of the first D jump, taken at
    the threshold eta0 = 2 I_c / omega.
    """
    order = np.argsort(eta0s)
    eta0s = np.asarray(eta0s, float)[order]
    omegas = np.asarray(omegas, float)[order]
    I_maxs = np.asarray(I_maxs, float)[order]
    Ds = np.asarray(Ds, float)[order]
    sub = (Ds <= noise_floor) & np.isfinite(omegas)
    if not sub.any():
        raise CalibrationImpossibleError("no dissipation-free trace to fix omega")
    omega = float(np.mean(omegas[sub]))
    jump = first_jump(eta0s, Ds, min_jump)
    if jump is None:
        raise CalibrationImpossibleError(
            "no super-threshold trace: I_c and D_s are not bounded by the data", omega=omega)
    I_c = float(np.nanmax(I_maxs))
    return CircuitParams(omega=omega, I_c=I_c,
                         D_s=step_height(eta0s, Ds, 2.0 * I_c / omega, min_jump))


def step_height(eta0s: Sequence[float], Ds: Sequence[float], eta_th: float | None = None,
                min_jump: float = 0.005) -> float | None:
    """Height of the first D step, read off at the threshold ``eta_th``.

    D falls along each plateau, so the raw difference across a coarse grid
    underestimates the step.  When the plateau has two points and eta_th lies
    inside the bracketing interval, extrapolate the plateau back to eta_th.
    Returns None when D has no step.
    """
    eta0s = np.asarray(eta0s, float)
    Ds = np.asarray(Ds, float)
    jump = first_jump(eta0s, Ds, min_jump)
    if jump is None:
        return None
    i, raw = jump
    if eta_th is None or not np.isfinite(eta_th):
        return float(raw)
    if i + 1 >= len(Ds) or Ds[i + 1] - Ds[i] > min_jump:
        return float(raw)
    if not eta0s[i - 1] <= eta_th <= eta0s[i]:
        return float(raw)
    slope = (Ds[i + 1] - Ds[i]) / (eta0s[i + 1] - eta0s[i])
    return float(Ds[i] + slope * (eta_th - eta0s[i]) - Ds[i - 1])


def calibrate_from_gpe(traces) -> CircuitParams:
    """Calibrate from imbalance traces (fits are computed here)."""
    from .observables import analyse_trace

    results = [analyse_trace(tr) for tr in traces]
    return calibrate([r.eta0 for r in results], [r.omega for r in results],
                     [r.I_max for r in results], [r.D for r in results])


def write_trace_csv(trace: CircuitTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "Q", "I", "eta"])
        for t, q, i in zip(trace.t, trace.Q, trace.I):
            w.writerow([f"{t:.12g}", f"{q:.12g}", f"{i:.12g}", f"{2 * q:.12g}"])


def write_events_csv(events: Iterable[RegulatorEvent], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "I_before", "I_after", "Q"])
        for e in events:
            w.writerow([f"{e.t:.12g}", f"{e.I_before:.12g}", f"{e.I_after:.12g}",
                        f"{e.Q_at_event:.12g}"])
