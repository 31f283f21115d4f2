"""Steady-state simulator for lasing in the superradiant crossover regime.

Second-order moment-closure dynamics of N atoms in a lossy cavity, filter
cavity emission spectra, closed-form linewidth predictions, collective
spin (Dicke) diagnostics, an exact small-N master-equation reference
solver, and a deterministic parameter-sweep runner.  All internal rates
are angular frequencies (rad/s); external interfaces use Hz.
"""

__version__ = "0.1.0"

from .analytic import (AnalyticInputs, LimitLinewidths, crossover_linewidth,
                       limit_linewidths, tieri_linewidth)
from .cumulant import (MomentState, SolverConfig, initial_state, integrate,
                       rhs, steady_state)
from .dicke import (BranchRates, DickePoint, Regime, classify_regime,
                    collective_threshold, dicke_numbers, lowering_amplitude,
                    pump_branching)
from .errors import (BelowThresholdError, ConvergenceError, CutoffError,
                     FitError, MemoryBudgetError, PhysicalityWarning,
                     ProbeError, SimulationError, StiffIntegrationError)
from .model import (ETA_EXP, PRESET_NAMES, DerivedRates, SystemParams,
                    derived, from_hz, load_config, params_to_config, preset,
                    to_hz)
from .oracle import (oracle_spectrum, oracle_steady_state, product_state,
                     moment_derivatives)
from .spectrum import (FilterProbe, LinewidthResult, LorentzianFit,
                       SpectrumScan, auto_probe, closed_form_point,
                       fit_lorentzian, linewidth, scan)
from .sweep import EtaGrid, Observables, SweepConfig, SweepRow, run_grid

__all__ = [
    "__version__",
    "AnalyticInputs", "LimitLinewidths", "crossover_linewidth",
    "limit_linewidths", "tieri_linewidth",
    "MomentState", "SolverConfig", "initial_state", "integrate", "rhs",
    "steady_state",
    "BranchRates", "DickePoint", "Regime", "classify_regime",
    "collective_threshold", "dicke_numbers", "lowering_amplitude",
    "pump_branching",
    "BelowThresholdError", "ConvergenceError", "CutoffError", "FitError",
    "MemoryBudgetError", "PhysicalityWarning", "ProbeError",
    "SimulationError", "StiffIntegrationError",
    "ETA_EXP", "PRESET_NAMES", "DerivedRates", "SystemParams", "derived",
    "from_hz", "load_config", "params_to_config", "preset", "to_hz",
    "oracle_spectrum", "oracle_steady_state", "product_state",
    "moment_derivatives",
    "FilterProbe", "LinewidthResult", "LorentzianFit", "SpectrumScan",
    "auto_probe", "closed_form_point", "fit_lorentzian", "linewidth", "scan",
    "EtaGrid", "Observables", "SweepConfig", "SweepRow", "run_grid",
]
