"""Moment-closure solver: exact limits, oracle agreement, solver plumbing."""
from __future__ import annotations

import numpy as np
import pytest

from srlaser.cumulant import (
    MomentState,
    SolverConfig,
    _jacobian,
    fixed_point_g0,
    initial_state,
    integrate,
    rhs,
    scaled_residual,
    steady_state,
    trajectory_to_rows,
)
from srlaser.model import SystemParams, preset
from srlaser.oracle import derivative_match_error, oracle_steady_state

from conftest import rel_err


# ------------------------------------------------------------- exact g=0 limit

@pytest.mark.parametrize("gamma,eta,chi", [
    (0.3, 0.7, 0.0),
    (0.0, 0.5, 0.2),
    (0.4, 0.0, 0.1),
    (0.25, 0.25, 0.0),
    (1.3, 0.01, 0.05),
])
def test_decoupled_steady_state_is_closed_form(gamma, eta, chi):
    params = SystemParams(n_atoms=5, g=0.0, kappa=1.0, gamma=gamma, eta=eta,
                          chi=chi)
    solved = steady_state(params).as_vector()
    exact = fixed_point_g0(params).as_vector()
    assert np.max(np.abs(solved - exact)) < 1e-12


def test_fixed_point_g0_population_balance():
    params = SystemParams(n_atoms=2, g=0.0, kappa=1.0, gamma=0.3, eta=0.7)
    state = fixed_point_g0(params)
    assert abs(state.inversion - 0.4) < 1e-15
    assert state.photon_number == 0.0
    dead = SystemParams(n_atoms=2, g=0.0, kappa=1.0, gamma=0.0, eta=0.0)
    assert fixed_point_g0(dead).inversion == -1.0
    assert fixed_point_g0(dead, s_fallback=0.25).inversion == 0.25


def test_empty_cavity_decays_at_kappa():
    params = SystemParams(n_atoms=1, g=0.0, kappa=0.7, gamma=0.0, eta=0.0)
    start = MomentState(2.0, 0.0 + 0.0j, -1.0, 0.0 + 0.0j)
    trajectory = integrate(start, params, SolverConfig(t_max=5.0))
    for t, state in trajectory:
        expected = 2.0 * np.exp(-params.kappa * t)
        assert abs(state.photon_number - expected) < 1e-6 * expected
        assert state.inversion == pytest.approx(-1.0, abs=1e-9)


# ------------------------------------------------------------ oracle agreement

@pytest.mark.parametrize("n_atoms", [3, 4])
def test_rhs_matches_exact_derivatives_with_dephasing(n_atoms):
    # product states factorize exactly, pinning every sign including chi
    params = SystemParams(n_atoms=n_atoms, g=0.25, kappa=1.0, gamma=0.01,
                          eta=0.2, chi=0.03)
    assert derivative_match_error(params, n_states=5) < 1e-10


def test_steady_photon_number_tracks_oracle(desk_params_n4):
    exact = oracle_steady_state(desk_params_n4, n_max=6).moments.photon_number
    closed = steady_state(desk_params_n4).photon_number
    assert rel_err(closed, exact) < 0.2


# ----------------------------------------------------------- solver behaviour

def test_long_integration_reaches_newton_fixed_point(desk_params):
    target = steady_state(desk_params)
    trajectory = integrate(initial_state(desk_params), desk_params,
                           SolverConfig(t_max=3000.0))
    _, last = trajectory[-1]
    assert rel_err(last.photon_number, target.photon_number) < 1e-6
    assert rel_err(last.inversion, target.inversion) < 1e-6


def test_flagship_point_relaxes_to_steady_state():
    params = preset("sr88", n_atoms=100)
    params = params.updated(eta=10.0 * params.gamma)
    target = steady_state(params)
    trajectory = integrate(initial_state(params), params,
                           SolverConfig(t_max=40.0 / params.gamma))
    _, last = trajectory[-1]
    assert rel_err(last.photon_number, target.photon_number) < 1e-6


def test_steady_state_reports_converged_info(desk_params):
    state, info = steady_state(desk_params, return_info=True)
    assert info.newton_converged
    assert not info.used_continuation
    assert not info.relaxed_fallback
    assert info.scaled_residual < 1e-9
    assert scaled_residual(state.as_vector(), desk_params) == info.scaled_residual


def test_steady_state_is_linearly_stable(desk_params):
    state = steady_state(desk_params)
    eig = np.linalg.eigvals(_jacobian(state.as_vector(), desk_params))
    assert np.max(eig.real) < 0.0


def test_frozen_steady_state_regression_values():
    p88 = preset("sr88", n_atoms=100)
    p88 = p88.updated(eta=10.0 * p88.gamma)
    s88 = steady_state(p88)
    assert rel_err(s88.photon_number, 1.3878641072e1) < 1e-8
    assert rel_err(s88.inversion, 2.7985877052e-1) < 1e-8

    p87 = preset("sr87", n_atoms=100000)
    p87 = p87.updated(eta=100.0 * p87.gamma)
    s87 = steady_state(p87)
    assert rel_err(s87.photon_number, 3.0718281824e-2) < 1e-8
    assert rel_err(s87.inversion, 6.9455263743e-3) < 1e-8


# -------------------------------------------------------------- state plumbing

def test_moment_state_vector_round_trip():
    state = MomentState(1.5, 0.2 - 0.3j, -0.4, 0.01 + 0.02j)
    again = MomentState.from_vector(state.as_vector())
    assert again == state


def test_moment_state_validation():
    MomentState(0.0, 0.0 + 0.0j, -1.0, 0.0 + 0.0j).validate()
    with pytest.raises(ValueError, match="photon_number"):
        MomentState(-1.0, 0j, 0.0, 0j).validate()
    with pytest.raises(ValueError, match="inversion"):
        MomentState(0.1, 0j, 1.5, 0j).validate()
    with pytest.raises(ValueError, match="non-finite"):
        MomentState(float("nan"), 0j, 0.0, 0j).validate()


def test_cauchy_schwarz_diagnostic():
    assert MomentState(1.0, 0j, 0.0, 0j).cauchy_schwarz_delta() == 0.0
    assert MomentState(0.0, 0.1 + 0j, -1.0, 0j).cauchy_schwarz_delta() == np.inf
    # |c|^2 = 0.04 against bound n (1+s)/2 = 0.08: 50% slack
    delta = MomentState(0.2, 0.2 + 0.0j, -0.2, 0j).cauchy_schwarz_delta()
    assert delta == pytest.approx(-0.5)


def test_rhs_rejects_non_finite_state(desk_params):
    with pytest.raises(ValueError, match="non-finite"):
        rhs(MomentState(float("inf"), 0j, 0.0, 0j), desk_params)


def test_integrate_validates_initial_state(desk_params):
    with pytest.raises(ValueError, match="photon_number"):
        integrate(MomentState(-2.0, 0j, 0.0, 0j), desk_params)


def test_trajectory_rows_mirror_states(desk_params):
    trajectory = integrate(initial_state(desk_params), desk_params,
                           SolverConfig(t_max=5.0))
    rows = trajectory_to_rows(trajectory)
    assert len(rows) == len(trajectory)
    t3, state3 = trajectory[3]
    assert rows[3]["t_s"] == t3
    assert rows[3]["photon_number"] == state3.photon_number
    assert rows[3]["atom_photon_im"] == state3.atom_photon.imag
    assert rows[3]["pair_corr_re"] == state3.pair_corr.real
