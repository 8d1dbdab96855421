"""Single runs, sweeps and the circuit comparison."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .. import analytic
from ..circuit import (CalibrationImpossibleError, CircuitParams, PAPER_PARAMS, calibrate,
                       circuit_summary, first_jump, simulate_circuit, step_height)
from ..fieldio import write_snapshot
from ..geometry import (Grid2D, build_bias_potential, build_trap_potential, reservoir_masks)
from ..gpe import evolve_real_time, ground_state, total_energy
from ..observables import (ImbalanceTrace, analyse_trace, count_vortex_pairs,
                           dissipation_strength, fit_sinusoid, max_current,
                           number_imbalance, vortex_detect, write_trace_csv)
from .config import ExperimentConfig, dump

log = logging.getLogger(__name__)


class RunError(RuntimeError):
    """A module error with the failing run's context attached."""


@dataclass
class RunRecord:
    config_hash: str
    l: float
    d: float
    V_over_Vc: float
    eta0: float
    omega_fit: float
    A: float
    I_max: float
    D: float
    n_vortex_pairs: int
    energy_initial: float
    energy_final: float
    wall_time: float = field(default=0.0, compare=False)
    trace: ImbalanceTrace | None = field(default=None, repr=False, compare=False)


# columns written to sweep tables; wall_time is kept out so tables are reproducible
RECORD_COLUMNS = [f.name for f in fields(RunRecord) if f.name not in ("wall_time", "trace")]


@dataclass
class GroundStateResult:
    psi: np.ndarray = field(repr=False)
    grid: Grid2D
    energy: float
    chemical_potential: float
    eta0: float
    iterations: int


def _setup(cfg: ExperimentConfig):
    geom = cfg.geometry
    grid = Grid2D.enclosing(geom, cfg.grid)
    V_c = analytic.critical_bias(cfg.physics.g, geom.R)
    V_trap = build_trap_potential(geom, grid)
    V_bias = build_bias_potential(geom, grid, cfg.protocol.V_over_Vc * V_c)
    return geom, grid, V_trap, V_bias


def run_groundstate(cfg: ExperimentConfig) -> GroundStateResult:
    geom, grid, V_trap, V_bias = _setup(cfg)
    gs = ground_state(V_trap + V_bias, cfg.physics.g, grid, cfg.solver)
    eta0 = number_imbalance(gs.psi, reservoir_masks(geom, grid), grid)
    return GroundStateResult(gs.psi, grid, gs.energy, gs.chemical_potential, eta0, gs.iterations)


def analysis_region(cfg: ExperimentConfig, grid: Grid2D) -> np.ndarray:
    X, Y = grid.mesh()
    inside = cfg.geometry.contains(X, Y)
    if cfg.analysis.region == "all":
        return inside
    return inside & (X >= -cfg.geometry.l / 2)


def _run_dir(out_dir: Path, cfg: ExperimentConfig) -> Path:
    h = cfg.physics_hash()[:12]
    return out_dir / f"run_V{cfg.protocol.V_over_Vc:.4f}_l{cfg.geometry.l:g}_d{cfg.geometry.d:g}_{h}"


def run_single(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunRecord:
    """Biased ground state, quench, real-time evolution and analysis."""
    start = time.perf_counter()
    try:
        return _run_single(cfg, out_dir, start)
    except Exception as exc:
        ctx = (f"run V/V_c={cfg.protocol.V_over_Vc}, l={cfg.geometry.l}, "
               f"d={cfg.geometry.d}")
        raise RunError(f"{ctx}: {type(exc).__name__}: {exc}") from exc


def _run_single(cfg, out_dir, start) -> RunRecord:
    geom, grid, V_trap, V_bias = _setup(cfg)
    g = cfg.physics.g
    masks = reservoir_masks(geom, grid)
    gs = ground_state(V_trap + V_bias, g, grid, cfg.solver)
    eta0 = number_imbalance(gs.psi, masks, grid)
    e_init = total_energy(gs.psi, V_trap, g, grid)

    traj = evolve_real_time(
        gs.psi, V_trap, g, grid, cfg.solver,
        observers={"eta": lambda t, psi: number_imbalance(psi, masks, grid)},
        snapshot_times=cfg.protocol.snapshot_times)
    trace = ImbalanceTrace(traj.times, traj.records["eta"], eta0)
    e_final = total_energy(traj.psi_final, V_trap, g, grid)

    if cfg.analysis.window is not None:
        window = cfg.analysis.window
        fit = fit_sinusoid(trace, window)
        omega, A, I_max = fit.omega, fit.A, max_current(trace, window)
        D = dissipation_strength(eta0, fit)
    else:
        res = analyse_trace(trace)
        omega, A, I_max, D = res.omega, res.A, res.I_max, res.D
        if res.note:
            log.info("V/V_c=%g: %s", cfg.protocol.V_over_Vc, res.note)

    region = analysis_region(cfg, grid)
    vortices = {t: vortex_detect(psi, grid, cfg.analysis.density_floor, region, t=t)
                for t, psi in traj.snapshots.items()}
    n_pairs = max((count_vortex_pairs(v) for v in vortices.values()), default=0)

    record = RunRecord(config_hash=cfg.physics_hash(), l=geom.l, d=geom.d,
                       V_over_Vc=cfg.protocol.V_over_Vc, eta0=eta0, omega_fit=omega, A=A,
                       I_max=I_max, D=D, n_vortex_pairs=n_pairs, energy_initial=e_init,
                       energy_final=e_final, wall_time=time.perf_counter() - start,
                       trace=trace)
    if out_dir is not None:
        _persist(Path(out_dir), cfg, grid, record, traj.snapshots, vortices)
    return record


def _persist(out_dir, cfg, grid, record, snapshots, vortices) -> None:
    run_dir = _run_dir(out_dir, cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {"config": "config.ini", "trace": "trace.csv", "record": "record.json"}
    dump(cfg, run_dir / "config.ini")
    write_trace_csv(record.trace, run_dir / "trace.csv")
    for t, psi in sorted(snapshots.items()):
        name = f"snapshot_t{t:.3f}.gpe2"
        write_snapshot(run_dir / name, psi, grid.dx, grid.dy, t)
        artifacts[f"snapshot_t{t:.3f}"] = name
    with open(run_dir / "vortices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "charge"])
        for t, recs in sorted(vortices.items()):
            for r in recs:
                w.writerow([f"{t:.12g}", f"{r.x:.12g}", f"{r.y:.12g}", r.charge])
    artifacts["vortices"] = "vortices.csv"
    rec = {k: getattr(record, k) for k in RECORD_COLUMNS}
    rec["wall_time"] = record.wall_time
    (run_dir / "record.json").write_text(json.dumps(rec, indent=2, sort_keys=True))
    write_manifest(run_dir, record.config_hash, artifacts)


def write_manifest(directory: Path, config_hash: str, artifacts: dict[str, str]) -> None:
    manifest = {"config_hash": config_hash, "artifacts": dict(sorted(artifacts.items()))}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


# ------------------------------------------------------------------ tables

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.12g}"


@dataclass
class SweepTable:
    """Rows keyed by one or more swept columns; ``failures`` lists skipped keys."""

    key: tuple[str, ...]
    rows: list[dict]
    failures: list[tuple[tuple, str]] = field(default_factory=list)
    # optional time series keyed by bias / eta0 (never written to the table CSV)
    traces: dict = field(default_factory=dict, repr=False)
    params: CircuitParams | None = None

    @property
    def columns(self) -> list[str]:
        cols = list(self.key)
        for row in self.rows:
            cols += [c for c in row if c not in cols]
        return cols

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def check_monotone(self) -> None:
        keys = [tuple(row[k] for k in self.key) for row in self.rows]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValueError(f"key column(s) {self.key} not strictly increasing")

    def to_csv(self, path: str | Path) -> None:
        cols = self.columns
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                w.writerow([_fmt(row[c]) for c in cols])

    @classmethod
    def from_csv(cls, path: str | Path, key: Sequence[str]) -> "SweepTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [{k: _parse(v) for k, v in r.items()} for r in reader]
        return cls(tuple(key), rows)


def _parse(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _record_row(rec: RunRecord) -> dict:
    return {k: getattr(rec, k) for k in RECORD_COLUMNS}


def _run_many(configs: list[ExperimentConfig], workers: int, out_dir):
    """Run configs, in parallel when workers > 1; returns (record | exception) per config."""
    if workers <= 1 or len(configs) <= 1:
        results = []
        for c in configs:
            try:
                results.append(run_single(c, out_dir))
            except RunError as exc:
                results.append(exc)
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_single, c, out_dir) for c in configs]
        out = []
        for f in futures:
            try:
                out.append(f.result())
            except Exception as exc:  # noqa: BLE001 - reported per row
                out.append(exc)
        return out


def sweep_bias(cfg: ExperimentConfig, V_list: Iterable[float] | None = None,
               workers: int | None = None, out_dir: str | Path | None = None,
               keep_traces: bool = True) -> SweepTable:
    """One run per bias; rows carry V/V_c, eta0, omega, A, I_max, D, vortex pairs."""
    V_list = list(cfg.sweep.V_over_Vc if V_list is None else V_list)
    if any(not 0 <= v <= 1 for v in V_list):
        raise ValueError("biases must lie in [0, V_c]")
    V_list = sorted(set(V_list))
    workers = cfg.output.workers if workers is None else workers
    results = _run_many([cfg.with_bias(v) for v in V_list], workers, out_dir)
    rows, failures = [], []
    for v, res in zip(V_list, results):
        if isinstance(res, Exception):
            failures.append(((v,), str(res)))
            log.error("bias %g failed: %s", v, res)
            continue
        row = _record_row(res)
        if keep_traces:
            row["_trace"] = res.trace
        rows.append(row)
    traces = {row["V_over_Vc"]: row.pop("_trace") for row in rows if "_trace" in row}
    table = SweepTable(("V_over_Vc",), rows, failures, traces)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        table.to_csv(Path(out_dir) / "sweep_bias.csv")
    return table


def summarize_geometry(rows: list[dict], l: float, d: float, g: float, R: float) -> dict:
    """Per-geometry aggregates from an inner bias sweep."""
    eta0 = np.array([r["eta0"] for r in rows])
    omega = np.array([r["omega_fit"] for r in rows], dtype=float)
    good = np.isfinite(omega)
    w2 = omega[good] ** 2
    out = {
        "l": l, "d": d, "n_runs": len(rows),
        "omega_mean": float(np.mean(omega[good])) if good.any() else math.nan,
        "omega_sq": float(np.mean(w2)) if good.any() else math.nan,
        "omega_sq_err": float(np.ptp(w2) / 2) if good.any() else math.nan,
        "omega_inv_sq": float(np.mean(1 / w2)) if good.any() else math.nan,
        "omega_inv_sq_err": float(np.ptp(1 / w2) / 2) if good.any() else math.nan,
        "omega_eq3": analytic.eq3_frequency(g, R, l, d),
        "A_c": float(max(r["A"] for r in rows)),
        "I_c": float(np.nanmax([r["I_max"] for r in rows])),
        "I_L": analytic.landau_current(g, R, d) if d > analytic.critical_width(g, R) else 0.0,
    }
    D = [r["D"] for r in rows]
    jump = first_jump(eta0, D)
    d_eff = d - analytic.critical_width(g, R)
    eta_th = 2.0 * out["I_c"] / out["omega_mean"] if good.any() else None
    out["D_s"] = step_height(eta0, D, eta_th) if jump else math.nan
    if jump:
        e0 = float(eta0[jump[0]])
        ds = min(out["D_s"], e0)
        out["E_loss_per_N"] = analytic.tf_energy_loss(e0, ds, g, R, 1.0)
    else:
        out["E_loss_per_N"] = math.nan
    try:
        out["E_vp_per_N"] = analytic.vortex_pair_energy(d_eff, g, R, 1.0)
    except ValueError:
        out["E_vp_per_N"] = math.nan
    return out


def sweep_geometry(cfg: ExperimentConfig, ls: Sequence[float] | None = None,
                   ds: Sequence[float] | None = None, inner: Sequence[float] | None = None,
                   workers: int | None = None, out_dir: str | Path | None = None) -> SweepTable:
    """Inner bias sweep per (l, d); rows aggregate omega, A_c, I_c, D_s, energies."""
    ls = list(cfg.sweep.l if ls is None else ls) or [cfg.geometry.l]
    ds = list(cfg.sweep.d if ds is None else ds) or [cfg.geometry.d]
    inner = list(cfg.sweep.inner_V_over_Vc if inner is None else inner)
    workers = cfg.output.workers if workers is None else workers
    pairs = [(l, d) for l in ls for d in ds]
    configs = [cfg.with_geometry(l=l, d=d).with_bias(v) for l, d in pairs for v in inner]
    results = _run_many(configs, workers, out_dir)
    g, R = cfg.physics.g, cfg.geometry.R
    rows, failures = [], []
    for i, (l, d) in enumerate(pairs):
        chunk = results[i * len(inner):(i + 1) * len(inner)]
        ok = [_record_row(r) for r in chunk if not isinstance(r, Exception)]
        for v, r in zip(inner, chunk):
            if isinstance(r, Exception):
                failures.append(((l, d, v), str(r)))
        if ok:
            rows.append(summarize_geometry(ok, l, d, g, R))
    table = SweepTable(("l", "d"), rows, failures)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        table.to_csv(Path(out_dir) / "sweep_geometry.csv")
    return table


def fit_delta_coeff(table: SweepTable, g: float, R: float) -> float:
    """End-correction coefficient that best fits measured omega^2 to the frequency law."""
    l, d, w2 = table.column("l"), table.column("d"), table.column("omega_sq")
    good = np.isfinite(w2)
    l, d, w2 = l[good], d[good], w2[good]

    def resid(k):
        pred = np.array([analytic.eq3_frequency(g, R, li, di, k) ** 2 for li, di in zip(l, d)])
        return pred - w2

    sol = optimize.least_squares(lambda p: resid(p[0]), [analytic.DEFAULT_DELTA_COEFF],
                                 bounds=([0.0], [20.0]))
    return float(sol.x[0])


def critical_current_slope_ratio(table: SweepTable, g: float, R: float) -> float:
    """Slope of measured I_c against d over the Landau-current slope v_L * n."""
    d, I_c = table.column("d"), table.column("I_c")
    slope = np.polyfit(d, I_c, 1)[0]
    n = analytic.reservoir_density(R)
    return float(slope / (analytic.landau_velocity(g, n) * n))


# ----------------------------------------------------------- circuit overlay

def circuit_params_for(cfg: ExperimentConfig, table: SweepTable | None) -> CircuitParams:
    if cfg.circuit is not None:
        return cfg.circuit
    if table is None:
        return PAPER_PARAMS
    return calibrate(table.column("eta0"), table.column("omega_fit"),
                     table.column("I_max"), table.column("D"))


def compare_circuit(cfg: ExperimentConfig, table: SweepTable | None = None,
                    params: CircuitParams | None = None,
                    eta0_grid: Sequence[float] | None = None,
                    trace_biases: Sequence[float] = ()) -> SweepTable:
    """Circuit staircase on the GPE eta0 grid, side by side with GPE columns.

    Without a GPE table only the circuit columns are produced.  Circuit
    traces for ``trace_biases`` (eta0 values) are attached as ``traces``.
    """
    if params is None:
        params = circuit_params_for(cfg, table)
    if table is not None:
        eta0s = table.column("eta0")
    elif eta0_grid is not None:
        eta0s = np.asarray(eta0_grid, float)
    else:
        eta0s = np.linspace(0.0, 0.1, 51)
    rows = []
    for i, e in enumerate(eta0s):
        s = circuit_summary(params, max(float(e), 0.0))
        row = {"eta0": float(e)}
        if table is not None:
            src = table.rows[i]
            row.update(V_over_Vc=src["V_over_Vc"], A_gpe=src["A"], I_max_gpe=src["I_max"],
                       D_gpe=src["D"])
        row.update(A_circ=s.A, I_max_circ=s.I_max, D_circ=s.D, n_events=s.n_events)
        rows.append(row)
    T, h = cfg.solver.T, cfg.solver.dt * cfg.solver.sample_every
    traces = {float(e): simulate_circuit(params, e / 2.0, 0.0, T, h) for e in trace_biases}
    return SweepTable(("eta0",), rows, traces=traces, params=params)


def max_amplitude_deviation(table: SweepTable) -> float:
    return float(np.max(np.abs(table.column("A_gpe") - table.column("A_circ"))))


def circuit_calibration(table: SweepTable) -> CircuitParams | None:
    try:
        return calibrate(table.column("eta0"), table.column("omega_fit"),
                         table.column("I_max"), table.column("D"))
    except CalibrationImpossibleError:
        return None
