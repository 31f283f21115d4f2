"""Deterministic (N, eta) grid evaluation with CSV persistence and resume.

Every cell is evaluated independently (steady state, collective spin
numbers, regime label, optional linewidth and closed-form predictions)
and written as one CSV row in a fixed sort order with fixed formatting,
so identical configs always produce byte-identical files.  An existing
output file is treated as a checkpoint: completed ok rows are kept,
corrupt lines are quarantined to a sidecar, and only the complement is
recomputed.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytic import AnalyticInputs, crossover_linewidth, tieri_linewidth
from .cumulant import steady_state
from .dicke import classify_regime, dicke_numbers
from .errors import BelowThresholdError, FitError, ProbeError, SimulationError
from .model import SystemParams, from_hz, params_to_config, to_hz
from .spectrum import linewidth

COLUMNS = (
    "n_atoms", "eta_hz", "photon_number", "inversion", "pair_corr_re",
    "j_eff", "m_eff", "j_over_n", "m_over_n", "regime",
    "delta_nu_hz", "delta_nu_eq3_hz", "delta_nu_eq4_hz", "status",
)
STATUS_VALUES = ("ok", "solver_error", "fit_error")

# 9 significant digits, scientific: deterministic across platforms and
# exactly round-trippable through float().
_FMT = "%.8e"


@dataclass(frozen=True)
class EtaGrid:
    """Pump-rate scan axis, external units (Hz)."""

    min_hz: float
    max_hz: float
    points: int
    spacing: str = "log"

    def __post_init__(self) -> None:
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"spacing must be 'log' or 'linear', got {self.spacing!r}")
        if self.points < 1:
            raise ValueError("points must be >= 1")
        if self.points == 1 and self.min_hz != self.max_hz:
            raise ValueError("a single-point grid requires min_hz == max_hz")
        if self.max_hz < self.min_hz:
            raise ValueError("max_hz must be >= min_hz")
        if self.spacing == "log" and self.min_hz <= 0.0:
            raise ValueError("log spacing requires min_hz > 0")

    def values_hz(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.min_hz])
        if self.spacing == "log":
            return np.geomspace(self.min_hz, self.max_hz, self.points)
        return np.linspace(self.min_hz, self.max_hz, self.points)


@dataclass(frozen=True)
class Observables:
    """Which per-cell quantities to evaluate and emit."""

    photons: bool = True
    dicke: bool = True
    linewidth: bool = False
    analytic: bool = False


@dataclass(frozen=True)
class SweepConfig:
    base: SystemParams
    n_list: tuple
    eta_grid: EtaGrid
    observables: Observables = Observables()
    output_path: str = "sweep.csv"
    workers: int = 1

    def __post_init__(self) -> None:
        n_list = tuple(int(n) for n in self.n_list)
        if len(n_list) == 0:
            raise ValueError("n_list must not be empty")
        if any(n < 1 for n in n_list):
            raise ValueError("all atom numbers must be >= 1")
        object.__setattr__(self, "n_list", n_list)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def config_hash(self) -> str:
        """Identity of the physics config; excludes output path and workers."""
        payload = {
            "base": params_to_config(self.base),
            "n_list": list(self.n_list),
            "eta_grid": {
                "min_hz": self.eta_grid.min_hz, "max_hz": self.eta_grid.max_hz,
                "points": self.eta_grid.points, "spacing": self.eta_grid.spacing,
            },
            "observables": {
                "photons": self.observables.photons,
                "dicke": self.observables.dicke,
                "linewidth": self.observables.linewidth,
                "analytic": self.observables.analytic,
            },
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class SweepRow:
    n_atoms: int
    eta_hz: float
    photon_number: float | None
    inversion: float | None
    pair_corr_re: float | None
    j_eff: float | None
    m_eff: float | None
    j_over_n: float | None
    m_over_n: float | None
    regime: str | None
    delta_nu_hz: float | None
    delta_nu_eq3_hz: float | None
    delta_nu_eq4_hz: float | None
    status: str


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return _FMT % value


def row_to_line(row: SweepRow) -> str:
    cells = [str(row.n_atoms), _FMT % row.eta_hz]
    cells += [_fmt_cell(getattr(row, name)) for name in COLUMNS[2:13]]
    cells.append(row.status)
    return ",".join(cells)


def _parse_opt(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def parse_row(line: str) -> SweepRow:
    """Strict single-line parse; any malformation raises ValueError."""
    cells = line.split(",")
    if len(cells) != len(COLUMNS):
        raise ValueError(f"expected {len(COLUMNS)} fields, got {len(cells)}")
    if cells[13] not in STATUS_VALUES:
        raise ValueError(f"bad status {cells[13]!r}")
    regime = cells[9] if cells[9] != "" else None
    if regime is not None and not regime.replace("-", "_").replace("_", "").isalpha():
        raise ValueError(f"bad regime label {cells[9]!r}")
    return SweepRow(
        n_atoms=int(cells[0]), eta_hz=float(cells[1]),
        photon_number=_parse_opt(cells[2]), inversion=_parse_opt(cells[3]),
        pair_corr_re=_parse_opt(cells[4]), j_eff=_parse_opt(cells[5]),
        m_eff=_parse_opt(cells[6]), j_over_n=_parse_opt(cells[7]),
        m_over_n=_parse_opt(cells[8]), regime=regime,
        delta_nu_hz=_parse_opt(cells[10]), delta_nu_eq3_hz=_parse_opt(cells[11]),
        delta_nu_eq4_hz=_parse_opt(cells[12]), status=cells[13],
    )


def _cell_key(n_atoms: int, eta_hz: float) -> tuple:
    return (int(n_atoms), _FMT % eta_hz)


def evaluate_cell(base: SystemParams, n_atoms: int, eta_hz: float,
                  obs: Observables) -> SweepRow:
    """One grid cell; failures are recorded in the row, never raised."""
    params = base.updated(n_atoms=int(n_atoms), eta=from_hz(eta_hz))
    empty = dict(photon_number=None, inversion=None, pair_corr_re=None,
                 j_eff=None, m_eff=None, j_over_n=None, m_over_n=None,
                 regime=None, delta_nu_hz=None, delta_nu_eq3_hz=None,
                 delta_nu_eq4_hz=None)
    try:
        state = steady_state(params)
    except SimulationError:
        return SweepRow(n_atoms=int(n_atoms), eta_hz=eta_hz,
                        status="solver_error", **empty)

    point = dicke_numbers(state, params)
    fields = dict(empty)
    status = "ok"
    if obs.photons:
        fields.update(photon_number=state.photon_number,
                      inversion=state.inversion,
                      pair_corr_re=state.pair_corr.real)
    if obs.dicke:
        fields.update(j_eff=point.j_eff, m_eff=point.m_eff,
                      j_over_n=point.j_over_n, m_over_n=point.m_over_n,
                      regime=classify_regime(state, params).label)
    if obs.analytic:
        inputs = AnalyticInputs.from_params(params, m_eff=point.m_eff)
        try:
            eq3 = to_hz(tieri_linewidth(inputs, eta=params.eta, gamma=params.gamma))
        except BelowThresholdError:
            eq3 = float("nan")
        try:
            eq4 = to_hz(crossover_linewidth(inputs))
        except ValueError:
            eq4 = float("nan")
        fields.update(delta_nu_eq3_hz=eq3, delta_nu_eq4_hz=eq4)
    if obs.linewidth:
        try:
            fields.update(delta_nu_hz=to_hz(linewidth(params, base=state).delta_nu))
        except (SimulationError, FitError, ProbeError):
            status = "fit_error"
    return SweepRow(n_atoms=int(n_atoms), eta_hz=eta_hz, status=status, **fields)


def _cell_worker(args) -> SweepRow:
    return evaluate_cell(*args)


def load_checkpoint(path: Path):
    """Split an existing CSV into reusable ok rows and quarantined lines.

    Returns (ok_lines keyed by cell, quarantined raw lines).  Valid rows
    with non-ok status are simply dropped so they get recomputed.
    """
    kept: dict = {}
    quarantined: list[str] = []
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        return kept, quarantined
    start = 1 if lines[0] == ",".join(COLUMNS) else 0
    for line in lines[start:]:
        if line == "":
            continue
        try:
            row = parse_row(line)
        except (ValueError, IndexError):
            quarantined.append(line)
            continue
        key = _cell_key(row.n_atoms, row.eta_hz)
        if key in kept:
            quarantined.append(line)
        elif row.status == "ok":
            kept[key] = line
    return kept, quarantined


def _package_version() -> str:
    try:
        from importlib.metadata import version
        return version("srlaser")
    except Exception:
        return "unknown"


def run_grid(cfg: SweepConfig) -> list[SweepRow]:
    """Evaluate the full grid, honoring any checkpoint at the output path.

    Rows come back (and are written) sorted by (n_atoms, eta_hz)
    regardless of execution order or worker count.  A JSON sidecar
    records the config hash, code version and wall time; those never
    enter the CSV itself.
    """
    t0 = time.monotonic()
    out = Path(cfg.output_path)
    if not out.parent.is_dir():
        raise OSError(f"output directory {out.parent} does not exist")
    try:
        with open(out, "a"):
            pass
    except OSError as exc:
        raise OSError(f"output path {out} is not writable: {exc}") from exc

    kept: dict = {}
    quarantined: list[str] = []
    if out.stat().st_size > 0:
        kept, quarantined = load_checkpoint(out)

    eta_values = cfg.eta_grid.values_hz()
    cells = [(n, float(eta)) for n in cfg.n_list for eta in eta_values]
    wanted = {_cell_key(n, eta) for n, eta in cells}
    kept = {k: v for k, v in kept.items() if k in wanted}
    pending = [(cfg.base, n, eta, cfg.observables)
               for n, eta in cells if _cell_key(n, eta) not in kept]

    if cfg.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            computed = list(pool.map(_cell_worker, pending, chunksize=1))
    else:
        computed = [_cell_worker(args) for args in pending]

    lines = dict(kept)
    for row in computed:
        lines[_cell_key(row.n_atoms, row.eta_hz)] = row_to_line(row)
    ordered_keys = sorted(lines, key=lambda k: (k[0], float(k[1])))

    tmp = out.with_name(out.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for key in ordered_keys:
            fh.write(lines[key] + "\n")
    os.replace(tmp, out)

    if quarantined:
        with open(str(out) + ".quarantine", "a") as fh:
            for line in quarantined:
                fh.write(line + "\n")

    meta = {
        "config_hash": cfg.config_hash(),
        "code_version": _package_version(),
        "wall_time_s": time.monotonic() - t0,
        "rows": len(ordered_keys),
        "computed": len(computed),
        "resumed": len(kept),
        "quarantined": len(quarantined),
        "columns": list(COLUMNS),
    }
    with open(str(out) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return [parse_row(lines[key]) for key in ordered_keys]
