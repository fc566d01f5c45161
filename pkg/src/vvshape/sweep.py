"""BMI validation over an SNR x laser-linewidth grid with genie cycle-slip compensation."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelParams
from .demapper import bmi
from .rng import stream
from .system import System, simulate

HEADER = "linewidth mean stddev snr"


@dataclass(frozen=True)
class SweepGrid:
    snrs_db: tuple = (15.0, 17.0, 19.0)
    linewidths_hz: tuple = tuple(float(k) * 1e5 for k in range(11))
    reps: int = 8
    symbols_per_rep: int = 1 << 16
    seed: int = 0
    symbol_rate_baud: float = 32e9
    rep_seeds: tuple | None = None

    def __post_init__(self):
        if not self.snrs_db or not self.linewidths_hz:
            raise ValueError("SNR and linewidth lists must be non-empty")
        if self.reps < 2:
            raise ValueError("reps must be >= 2 for a standard deviation")
        if self.rep_seeds is not None and len(self.rep_seeds) != self.reps:
            raise ValueError("rep_seeds needs one seed per repetition")

    def cells(self):
        return [(float(s), float(l)) for s in self.snrs_db for l in self.linewidths_hz]

    def rng(self, snr_db: float, linewidth_hz: float, rep: int) -> np.random.Generator:
        seed = self.seed if self.rep_seeds is None else self.rep_seeds[rep]
        key = rep if self.rep_seeds is None else 0
        return stream(seed, "sweep", float(snr_db), float(linewidth_hz), key)


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    linewidth_hz: float
    bmi_mean: float
    bmi_stddev: float


@dataclass
class SweepResult:
    system_id: str
    rows: list = field(default_factory=list)

    def cell(self, snr_db: float, linewidth_hz: float) -> SweepRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.linewidth_hz == linewidth_hz:
                return r
        raise KeyError((snr_db, linewidth_hz))


def run_cell(system: System, grid: SweepGrid, snr_db: float, linewidth_hz: float):
    """BMI of every repetition of one grid cell."""
    params = ChannelParams(snr_db, linewidth_hz, grid.symbol_rate_baud)
    values = []
    for rep in range(grid.reps):
        bits, llrs = simulate(system, params, grid.symbols_per_rep,
                              grid.rng(snr_db, linewidth_hz, rep), initial_phase=None, csc=True)
        values.append(bmi(bits, llrs))
    return np.array(values)


def _cell_job(args):
    system, grid, snr, lw = args
    return run_cell(system, grid, snr, lw)


def run_sweep(system: System, grid: SweepGrid, workers: int = 1) -> SweepResult:
    """Mean/stddev BMI per cell; deterministic for a given grid seed.

    Each cell draws from its own stream keyed by ``(snr, linewidth, rep)``,
    so results do not depend on execution order or worker count.
    """
    if system.demapper is None and not system.hard_rings:
        raise ValueError(f"system {system.system_id!r} has no trained demapper")
    cells = grid.cells()
    jobs = [(system, grid, s, l) for s, l in cells]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            values = list(pool.map(_cell_job, jobs))
    else:
        values = [_cell_job(j) for j in jobs]
    rows = [SweepRow(s, l, float(np.mean(v)), float(np.std(v, ddof=1)))
            for (s, l), v in zip(cells, values)]
    return SweepResult(system.system_id, rows)


# --------------------------------------------------------------------------
# files

def _fmt_linewidth(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def export_results(result: SweepResult, path) -> None:
    """Space-separated ``linewidth mean stddev snr``; linewidth in Hz, SNR in dB."""
    lines = [HEADER]
    for r in result.rows:
        lines.append(f"{_fmt_linewidth(r.linewidth_hz)} {float(r.bmi_mean)!r} "
                     f"{float(r.bmi_stddev)!r} {r.snr_db:.2f}")
    Path(path).write_text("\n".join(lines) + "\n")


def import_results(path, system_id: str | None = None) -> SweepResult:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split() != HEADER.split():
        raise ValueError(f"{path}:1: expected header {HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        f = line.split()
        if len(f) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 columns")
        rows.append(SweepRow(float(f[3]), float(f[0]), float(f[1]), float(f[2])))
    return SweepResult(system_id or Path(path).stem, rows)


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, result: SweepResult, grid: SweepGrid, artifacts=(), extra=None) -> None:
    """JSON record of system id, grid, seeds and artifact hashes."""
    doc = {
        "system_id": result.system_id,
        "grid": asdict(grid),
        "artifacts": {str(p): file_hash(p) for p in artifacts},
        "llr_convention": "llr>0 means bit=1",
    }
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
