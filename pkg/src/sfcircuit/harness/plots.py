"""Per-figure CSV tables plus a tiny matplotlib script for each."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping

import numpy as np

from ..circuit import CircuitTrace
from ..observables import ImbalanceTrace
from .runner import SweepTable


class SchemaMismatchError(ValueError):
    pass


# figure id -> (source table columns, output header, x column, y columns)
TABLE_FIGURES = {
    "fig3a": (["d", "omega_sq", "omega_sq_err"], ["d", "omega_sq", "err"]),
    "fig3b": (["l", "omega_inv_sq", "omega_inv_sq_err"], ["l", "omega_inv_sq", "err"]),
    "fig4a": (["V_over_Vc", "A"], ["V_over_Vc", "A"]),
    "fig4b": (["V_over_Vc", "I_max"], ["V_over_Vc", "I_max"]),
    "fig4c": (["l", "d", "A_c"], ["l", "d", "A_c"]),
    "fig4d": (["l", "d", "I_c", "I_L"], ["l", "d", "I_c", "I_L"]),
    "fig5a": (["V_over_Vc", "D"], ["V_over_Vc", "D"]),
    "fig5f": (["l", "d", "D_s"], ["l", "d", "D_s"]),
    "fig5g": (["l", "d", "E_loss_per_N", "E_vp_per_N"], ["l", "d", "E_loss_per_N", "E_vp_per_N"]),
}
TRACE_FIGURES = ("fig2a", "fig6")
FIGURES = tuple(TABLE_FIGURES) + TRACE_FIGURES

_STUB = '''"""Plot {fig} from {csv_name}."""
import csv
import matplotlib.pyplot as plt

with open("{csv_name}") as fh:
    rows = list(csv.reader(fh))
header, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
cols = list(zip(*data))
for j in range(1, len(header)):
    plt.plot(cols[0], cols[j], {style}, label=header[j])
plt.xlabel(header[0])
plt.legend(fontsize="small")
plt.savefig("{fig}.png", dpi=150)
'''


def _write(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{float(v):.12g}" for v in r])


def _trace_columns(figure_id, traces):
    if not traces:
        raise SchemaMismatchError(f"{figure_id}: no traces given")
    keys = sorted(traces)
    first = traces[keys[0]]
    t = np.asarray(first.t)
    cols, header = [t], ["t"]
    for k in keys:
        tr = traces[k]
        if len(tr.t) != len(t) or not np.allclose(tr.t, t):
            raise SchemaMismatchError(f"{figure_id}: traces are not on a common time grid")
        if figure_id == "fig2a":
            if not isinstance(tr, ImbalanceTrace):
                raise SchemaMismatchError("fig2a needs ImbalanceTrace values")
            cols.append(tr.eta - tr.eta0)
            header.append(f"eta_shift_V{k:.4f}")
        else:
            if not isinstance(tr, CircuitTrace):
                raise SchemaMismatchError("fig6 needs CircuitTrace values")
            cols.append(tr.eta - tr.eta[0])
            header.append(f"eta_circuit_{k:.4f}")
    return header, list(zip(*cols))


def emit_plot_data(source: SweepTable | Mapping, figure_id: str,
                   out_dir: str | Path) -> list[Path]:
    """Write ``<figure_id>.csv`` and ``plot_<figure_id>.py`` into ``out_dir``.

    Table figures take a :class:`SweepTable`; ``fig2a`` takes a mapping of
    V/V_c to :class:`ImbalanceTrace` and ``fig6`` a mapping of eta0 to
    :class:`CircuitTrace`.
    """
    if figure_id not in FIGURES:
        raise SchemaMismatchError(f"unknown figure {figure_id!r}; known: {FIGURES}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if figure_id in TRACE_FIGURES:
        if not isinstance(source, Mapping):
            raise SchemaMismatchError(f"{figure_id} needs a mapping of traces")
        header, rows = _trace_columns(figure_id, source)
        style = '"-", lw=0.8'
    else:
        if not isinstance(source, SweepTable):
            raise SchemaMismatchError(f"{figure_id} needs a SweepTable")
        src_cols, header = TABLE_FIGURES[figure_id]
        if not source.rows:
            raise SchemaMismatchError(f"{figure_id}: empty table")
        missing = [c for c in src_cols if c not in source.columns]
        if missing:
            raise SchemaMismatchError(f"{figure_id}: table lacks columns {missing}")
        rows = [[row[c] for c in src_cols] for row in source.rows]
        style = '"o-"'
    csv_path = out_dir / f"{figure_id}.csv"
    _write(csv_path, header, rows)
    stub = out_dir / f"plot_{figure_id}.py"
    stub.write_text(_STUB.format(fig=figure_id, csv_name=csv_path.name, style=style))
    return [csv_path, stub]


def read_plot_data(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
