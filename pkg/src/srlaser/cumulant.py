"""Second-order moment-closure dynamics of the atom-cavity laser.

Tracks the closed set {<a^dag a>, <a sigma_1^+>, <sigma_1^z>,
<sigma_1^+ sigma_2^->} under permutation symmetry.  Third-order cumulants
are dropped and first moments of a and sigma^+- vanish identically, which
closes the hierarchy; the right-hand side below is the result of that
closure applied to the exact master equation (the oracle module checks it
term by term).

State vector layout used by the solvers:
x = (n, Re c, Im c, s, Re p, Im p).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, PhysicalityWarning, StiffIntegrationError
from .model import SystemParams

_PHYS_EPS = 1e-9


@dataclass(frozen=True)
class MomentState:
    """Second-order moments of the permutation-symmetric state.

    photon_number = <a^dag a>, atom_photon = <a sigma^+> (any atom),
    inversion = <sigma^z>, pair_corr = <sigma_i^+ sigma_j^-> for i != j.
    """

    photon_number: float
    atom_photon: complex
    inversion: float
    pair_corr: complex

    def as_vector(self) -> np.ndarray:
        return np.array([
            self.photon_number,
            self.atom_photon.real, self.atom_photon.imag,
            self.inversion,
            self.pair_corr.real, self.pair_corr.imag,
        ])

    @staticmethod
    def from_vector(x) -> "MomentState":
        x = np.asarray(x, dtype=float)
        return MomentState(
            photon_number=float(x[0]),
            atom_photon=complex(x[1], x[2]),
            inversion=float(x[3]),
            pair_corr=complex(x[4], x[5]),
        )

    def validate(self, eps: float = _PHYS_EPS) -> None:
        vec = self.as_vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite moment state: {self}")
        if self.photon_number < -eps:
            raise ValueError(f"photon_number {self.photon_number} < 0")
        if abs(self.inversion) > 1.0 + eps:
            raise ValueError(f"inversion {self.inversion} outside [-1, 1]")

    def cauchy_schwarz_delta(self) -> float:
        """Fractional excess of |c|^2 over n (1+s)/2; diagnostic only."""
        bound = self.photon_number * 0.5 * (1.0 + self.inversion)
        excess = abs(self.atom_photon) ** 2
        if excess == 0.0:
            return 0.0
        if bound <= 0.0:
            return math.inf
        return excess / bound - 1.0


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    t_max: float | None = None
    newton_tol: float | None = None  # None -> 1e-10 * max(1, kappa)
    newton_max_iter: int = 60


@dataclass(frozen=True)
class SteadyStateInfo:
    scaled_residual: float
    newton_converged: bool
    used_continuation: bool
    relaxed_fallback: bool


def initial_state(params: SystemParams) -> MomentState:
    """Vacuum cavity, all atoms in the ground state, no correlations."""
    return MomentState(0.0, 0.0 + 0.0j, -1.0, 0.0 + 0.0j)


def _rates(params: SystemParams):
    gamma_c = 0.5 * (params.kappa + params.gamma + params.eta) + 2.0 * params.chi
    gamma_p = params.gamma + params.eta + 4.0 * params.chi
    return gamma_c, gamma_p


def _rhs_vec(x: np.ndarray, params: SystemParams) -> np.ndarray:
    n, cr, ci, s, pr, pi = x
    g, kappa = params.g, params.kappa
    gamma, eta = params.gamma, params.eta
    nn = params.n_atoms
    delta = params.detuning
    gamma_c, gamma_p = _rates(params)
    source = s * n + (nn - 1) * pr + 0.5 * (1.0 + s)
    return np.array([
        -2.0 * g * nn * ci - kappa * n,
        -delta * ci - gamma_c * cr + g * (nn - 1) * pi,
        delta * cr - gamma_c * ci - g * source,
        4.0 * g * ci - gamma * (1.0 + s) + eta * (1.0 - s),
        -2.0 * g * s * ci - gamma_p * pr,
        -gamma_p * pi,
    ])


def _jacobian(x: np.ndarray, params: SystemParams) -> np.ndarray:
    n, _, ci, s, _, _ = x
    g = params.g
    nn = params.n_atoms
    delta = params.detuning
    gamma_c, gamma_p = _rates(params)
    jac = np.zeros((6, 6))
    jac[0, 0] = -params.kappa
    jac[0, 2] = -2.0 * g * nn
    jac[1, 1] = -gamma_c
    jac[1, 2] = -delta
    jac[1, 5] = g * (nn - 1)
    jac[2, 0] = -g * s
    jac[2, 1] = delta
    jac[2, 2] = -gamma_c
    jac[2, 3] = -g * (n + 0.5)
    jac[2, 4] = -g * (nn - 1)
    jac[3, 2] = 4.0 * g
    jac[3, 3] = -(params.gamma + params.eta)
    jac[4, 2] = -2.0 * g * s
    jac[4, 3] = -2.0 * g * ci
    jac[4, 4] = -gamma_p
    jac[5, 5] = -gamma_p
    return jac


def rhs(state: MomentState, params: SystemParams) -> MomentState:
    """Time derivative of the tracked moments."""
    x = state.as_vector()
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite moment state: {state}")
    return MomentState.from_vector(_rhs_vec(x, params))


def scaled_residual(x: np.ndarray, params: SystemParams) -> float:
    """max_i |rhs_i| / max(1, |x_i|): a rad/s-valued stationarity measure."""
    r = _rhs_vec(x, params)
    return float(np.max(np.abs(r) / np.maximum(1.0, np.abs(x))))


def _newton_tol(params: SystemParams, cfg: SolverConfig) -> float:
    if cfg.newton_tol is not None:
        return cfg.newton_tol
    return 1e-10 * max(1.0, params.kappa)


def _fast_rate(params: SystemParams) -> float:
    return max(
        params.kappa,
        params.gamma,
        params.eta,
        2.0 * params.chi,
        2.0 * math.sqrt(params.n_atoms) * params.g,
        abs(params.detuning),
        1e-300,
    )


def _slow_rate(params: SystemParams) -> float:
    rates = [r for r in (params.kappa, params.gamma, params.eta,
                         2.0 * params.chi, params.g) if r > 0.0]
    return min(rates) if rates else 0.0


def default_t_max(params: SystemParams) -> float:
    slow = _slow_rate(params)
    return 1e3 / slow if slow > 0.0 else 1.0


def fixed_point_g0(params: SystemParams, s_fallback: float = -1.0) -> MomentState:
    """Closed-form steady state of the decoupled (g = 0) system."""
    total = params.gamma + params.eta
    s = (params.eta - params.gamma) / total if total > 0.0 else s_fallback
    return MomentState(0.0, 0.0 + 0.0j, s, 0.0 + 0.0j)


def _integrate_raw(x0, params, t_final, cfg):
    # trial steps may transiently overflow on stiff points; they get rejected
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            lambda _, y: _rhs_vec(y, params),
            (0.0, t_final), x0, method="DOP853",
            rtol=cfg.rel_tol, atol=cfg.abs_tol, dense_output=False,
        )
    if not sol.success:
        raise StiffIntegrationError(
            f"explicit integration failed ({sol.message}); the problem is "
            "likely stiff on this horizon, use the Newton steady-state path"
        )
    return sol


def integrate(state0: MomentState, params: SystemParams,
              cfg: SolverConfig | None = None) -> list[tuple[float, MomentState]]:
    """Adaptive explicit time integration from state0.

    Returns the solver's accepted steps as (t, MomentState) pairs.  The
    horizon is cfg.t_max, defaulting to 1e3 over the slowest nonzero rate.
    """
    cfg = cfg or SolverConfig()
    state0.validate()
    t_final = cfg.t_max if cfg.t_max is not None else default_t_max(params)
    sol = _integrate_raw(state0.as_vector(), params, t_final, cfg)
    return [(float(t), MomentState.from_vector(y)) for t, y in zip(sol.t, sol.y.T)]


def _is_physical(x: np.ndarray, eps: float = _PHYS_EPS) -> bool:
    return (
        bool(np.all(np.isfinite(x)))
        and x[0] >= -eps * max(1.0, abs(x[0]))
        and abs(x[3]) <= 1.0 + eps
    )


def _polish(x, params, res):
    """Full Newton steps past the tolerance, down to round-off."""
    for _ in range(4):
        try:
            step = np.linalg.solve(_jacobian(x, params), -_rhs_vec(x, params))
        except np.linalg.LinAlgError:
            break
        trial = x + step
        if not np.all(np.isfinite(trial)):
            break
        trial_res = scaled_residual(trial, params)
        if trial_res >= res:
            break
        x, res = trial, trial_res
    return x, res


def _newton(x0, params, tol, max_iter):
    with np.errstate(over="ignore", invalid="ignore"):
        return _newton_loop(x0, params, tol, max_iter)


def _newton_loop(x0, params, tol, max_iter):
    x = np.array(x0, dtype=float)
    best = x.copy()
    best_res = scaled_residual(x, params)
    for _ in range(max_iter):
        res = scaled_residual(x, params)
        if res < best_res:
            best, best_res = x.copy(), res
        if res < tol:
            x, res = _polish(x, params, res)
            return x, res, True
        try:
            step = np.linalg.solve(_jacobian(x, params), -_rhs_vec(x, params))
        except np.linalg.LinAlgError:
            return best, best_res, False
        lam = 1.0
        accepted = False
        while lam >= 1.0 / 1024.0:
            trial = x + lam * step
            if np.all(np.isfinite(trial)):
                trial_res = scaled_residual(trial, params)
                if trial_res < res:
                    x = trial
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            return best, best_res, False
    res = scaled_residual(x, params)
    return x, res, res < tol


def _resonant_roots(params: SystemParams) -> list[np.ndarray]:
    """Exact fixed points on resonance, where cr = pi = 0.

    Eliminating n, ci and pr from the stationarity conditions leaves a
    quadratic in the inversion s; each admissible root is expanded back
    into a full state vector.
    """
    g = params.g
    _, gamma_p = _rates(params)
    if g <= 0.0 or params.detuning != 0.0 or params.kappa <= 0.0 or gamma_p <= 0.0:
        return []
    gamma_c = _rates(params)[0]
    nn = params.n_atoms
    a_lin = params.gamma - params.eta
    b_lin = params.gamma + params.eta
    k_gain = 2.0 * g * g * nn / params.kappa + 2.0 * g * g * (nn - 1) / gamma_p
    qa = k_gain * b_lin
    qb = k_gain * a_lin - gamma_c * b_lin - 2.0 * g * g
    qc = -(gamma_c * a_lin + 2.0 * g * g)
    if qa == 0.0:
        s_candidates = [-qc / qb] if qb != 0.0 else []
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0.0:
            return []
        root = math.sqrt(disc)
        s_candidates = [(-qb + root) / (2.0 * qa), (-qb - root) / (2.0 * qa)]
    out = []
    for s in s_candidates:
        if abs(s) > 1.0 + 1e-9:
            continue
        ci = (a_lin + b_lin * s) / (4.0 * g)
        if ci > 1e-300:
            continue
        n = -2.0 * g * nn * ci / params.kappa
        pr = -2.0 * g * s * ci / gamma_p
        out.append(np.array([n, 0.0, ci, s, pr, 0.0]))
    return out


def _resonant_seed(params: SystemParams) -> np.ndarray | None:
    """The dynamically stable physical resonant fixed point, if any."""
    roots = _resonant_roots(params)
    if not roots:
        return None
    best, best_growth = None, math.inf
    for x in roots:
        if not _is_physical(x):
            continue
        growth = float(np.max(np.linalg.eigvals(_jacobian(x, params)).real))
        if growth < best_growth:
            best, best_growth = x, growth
    return best


def _continuation(params, tol, max_iter):
    x = fixed_point_g0(params).as_vector()
    if params.g == 0.0:
        return _newton(x, params, tol, max_iter)
    for g_step in np.geomspace(params.g / 1e3, params.g, 10):
        stepped = params.updated(g=g_step)
        x, res, ok = _newton(x, stepped, tol, max_iter)
        if not ok or not _is_physical(x, eps=1e-6):
            return x, res, False
    return x, scaled_residual(x, params), _is_physical(x)


_RELAX_HORIZONS = (30.0, 150.0, 750.0, 4e3, 2e4, 1e5, 3e5)


def _relax(params, cfg):
    """Integrate the fast transient away; stop on residual drop or plateau."""
    x = initial_state(params).as_vector()
    r0 = scaled_residual(x, params)
    if r0 == 0.0:
        return x, 0.0, r0
    tau = 1.0 / _fast_rate(params)
    t_cap = cfg.t_max if cfg.t_max is not None else default_t_max(params)
    t_done = 0.0
    res = r0
    for horizon in _RELAX_HORIZONS:
        t_target = min(horizon * tau, t_cap)
        if t_target <= t_done:
            continue
        sol = _integrate_raw(x, params, t_target - t_done, cfg)
        x = sol.y[:, -1]
        t_done = t_target
        new_res = scaled_residual(x, params)
        if new_res < 1e-6 * r0:
            return x, new_res, r0
        if new_res > 0.9 * res:  # stalled: slow manifold reached
            return x, new_res, r0
        res = new_res
        if t_done >= t_cap:
            break
    return x, scaled_residual(x, params), r0


def steady_state(params: SystemParams, cfg: SolverConfig | None = None,
                 return_info: bool = False):
    """Stationary moments via relaxation plus damped Newton.

    Integrates the transient away on the fast time scale, then polishes
    with Newton on the analytic Jacobian down to the scaled-residual
    tolerance.  If Newton fails or lands on an unphysical root, the exact
    resonant fixed point (stable root of the reduced quadratic) is used
    as a fresh Newton seed, then a continuation in g from the closed-form
    g = 0 solution; as a last resort a well-relaxed physical state is
    returned with a warning.
    """
    cfg = cfg or SolverConfig()
    tol = _newton_tol(params, cfg)
    x_relax, res_relax, res_start = _relax(params, cfg)

    used_continuation = False
    x, res, ok = _newton(x_relax, params, tol, cfg.newton_max_iter)
    if not ok or not _is_physical(x):
        ok = False
        seed = _resonant_seed(params)
        if seed is not None:
            x_seed, res_seed, ok_seed = _newton(seed, params, tol, cfg.newton_max_iter)
            if ok_seed and _is_physical(x_seed):
                x, res, ok = x_seed, res_seed, True
    if not ok:
        used_continuation = True
        x_cont, res_cont, ok_cont = _continuation(params, tol, cfg.newton_max_iter)
        if ok_cont and _is_physical(x_cont):
            x, res, ok = x_cont, res_cont, True

    relaxed_fallback = False
    if not ok:
        relax_ok = res_relax < 1e-6 * res_start or res_relax < tol * 1e6
        if _is_physical(x_relax) and relax_ok:
            warnings.warn(
                "Newton refinement failed; returning the relaxation result "
                f"(scaled residual {res_relax:.3e})",
                PhysicalityWarning,
            )
            x, res = x_relax, res_relax
            relaxed_fallback = True
        else:
            raise ConvergenceError(
                f"no physical steady state found (best scaled residual {res:.3e})",
                best_residual=res,
            )

    state = MomentState.from_vector(x)
    if return_info:
        return state, SteadyStateInfo(
            scaled_residual=res,
            newton_converged=ok and not relaxed_fallback,
            used_continuation=used_continuation,
            relaxed_fallback=relaxed_fallback,
        )
    return state


def trajectory_to_rows(trajectory) -> list[dict]:
    """Flatten an integrate() trajectory for CSV/JSON export."""
    rows = []
    for t, state in trajectory:
        rows.append({
            "t_s": t,
            "photon_number": state.photon_number,
            "atom_photon_re": state.atom_photon.real,
            "atom_photon_im": state.atom_photon.imag,
            "inversion": state.inversion,
            "pair_corr_re": state.pair_corr.real,
            "pair_corr_im": state.pair_corr.imag,
        })
    return rows
