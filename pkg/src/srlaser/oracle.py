"""Brute-force master-equation reference solver for small atom numbers.

Builds the exact Liouvillian of N two-level atoms coupled to a truncated
cavity mode (optionally plus a weak filter mode), finds its stationary
density matrix, evaluates exact moment derivatives for arbitrary states,
and computes emission spectra through the quantum regression theorem.
Everything here is deliberately direct and unoptimised: this module is
the trust anchor the fast moment-closure solver is checked against, and
the two routes must stay independent.

Hilbert-space ordering is cavity (x) [filter] (x) atom_1 ... atom_N with
the atomic basis |ground> = index 0, |excited> = index 1, and density
matrices are vectorised row-major.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CutoffError, MemoryBudgetError, SimulationError
from .model import SystemParams

MAX_ATOMS = 6
MAX_SUPEROP_DIM = 2**20  # cap on d^2 for the vectorised Liouvillian

_SM = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|
_SP = _SM.conj().T
_SZ = np.diag([-1.0, 1.0]).astype(complex)
_ID2 = np.eye(2, dtype=complex)


def _destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


class HilbertSpace:
    """Operator factory for the composite space.

    Parameters
    ----------
    n_atoms : number of atoms (<= MAX_ATOMS)
    n_max : cavity Fock cutoff (highest retained Fock state)
    m_max : filter Fock cutoff, or None for no filter mode
    """

    def __init__(self, n_atoms: int, n_max: int, m_max: int | None = None):
        if n_atoms < 1 or n_atoms > MAX_ATOMS:
            raise ValueError(f"n_atoms must be in 1..{MAX_ATOMS}, got {n_atoms}")
        if n_max < 0 or (m_max is not None and m_max < 0):
            raise ValueError("Fock cutoffs must be >= 0")
        self.n_atoms = n_atoms
        self.n_max = n_max
        self.m_max = m_max
        self.dims = [n_max + 1]
        if m_max is not None:
            self.dims.append(m_max + 1)
        self.dims.extend([2] * n_atoms)
        self.dim = int(np.prod(self.dims))
        if self.dim**2 > MAX_SUPEROP_DIM:
            raise MemoryBudgetError(
                f"superoperator dimension {self.dim}^2 exceeds budget {MAX_SUPEROP_DIM}"
            )
        self._atom_offset = 1 if m_max is None else 2
        self.a = self._lift(_destroy(n_max + 1), 0)
        self.ad = self.a.conj().T
        if m_max is not None:
            self.f = self._lift(_destroy(m_max + 1), 1)
            self.fd = self.f.conj().T
        else:
            self.f = self.fd = None
        self.sm = [self._lift(_SM, self._atom_offset + i) for i in range(n_atoms)]
        self.sp = [op.conj().T for op in self.sm]
        self.sz = [self._lift(_SZ, self._atom_offset + i) for i in range(n_atoms)]

    def _lift(self, op: np.ndarray, site: int) -> np.ndarray:
        out = np.eye(1, dtype=complex)
        for k, d in enumerate(self.dims):
            out = np.kron(out, op if k == site else np.eye(d, dtype=complex))
        return out

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


def build_space(params: SystemParams, n_max: int, m_max: int | None = None) -> HilbertSpace:
    return HilbertSpace(params.n_atoms, n_max, m_max)


def hamiltonian(space: HilbertSpace, params: SystemParams,
                probe=None) -> np.ndarray:
    """H with the atomic energy written as (omega_a / 2) sum sigma_z."""
    h = params.omega_c * (space.ad @ space.a)
    for i in range(space.n_atoms):
        h = h + 0.5 * params.omega_a * space.sz[i]
        h = h + params.g * (space.ad @ space.sm[i] + space.a @ space.sp[i])
    if probe is not None:
        if space.f is None:
            raise ValueError("probe given but space was built without a filter mode")
        h = h + probe.omega_f * (space.fd @ space.f)
        h = h + probe.big_g * (space.ad @ space.f + space.a @ space.fd)
    return h


def lindblad_channels(space: HilbertSpace, params: SystemParams,
                      probe=None) -> list[tuple[float, np.ndarray]]:
    """(rate, collapse operator) pairs; chi multiplies the sigma_z channel."""
    channels = [(params.kappa, space.a)]
    for i in range(space.n_atoms):
        if params.gamma > 0.0:
            channels.append((params.gamma, space.sm[i]))
        if params.eta > 0.0:
            channels.append((params.eta, space.sp[i]))
        if params.chi > 0.0:
            channels.append((params.chi, space.sz[i]))
    if probe is not None:
        channels.append((probe.beta, space.f))
    return [(r, c) for r, c in channels if r > 0.0]


def apply_liouvillian(rho: np.ndarray, h: np.ndarray,
                      channels: list[tuple[float, np.ndarray]]) -> np.ndarray:
    """Matrix-form action of the Liouvillian on a density matrix."""
    out = -1j * (h @ rho - rho @ h)
    for rate, c in channels:
        cd = c.conj().T
        cdc = cd @ c
        out = out + rate * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
    return out


def build_liouvillian(params: SystemParams, n_max: int, probe=None,
                      m_max: int | None = None) -> sp.csr_matrix:
    """Vectorised (row-major) Liouvillian as a sparse matrix."""
    if probe is not None and m_max is None:
        raise ValueError("a filter probe requires an explicit m_max cutoff")
    space = build_space(params, n_max, m_max)
    return _superoperator(space, params, probe)


def _superoperator(space: HilbertSpace, params: SystemParams, probe=None) -> sp.csr_matrix:
    d = space.dim
    ident = sp.identity(d, dtype=complex, format="csr")
    h = sp.csr_matrix(hamiltonian(space, params, probe))
    liouv = -1j * (sp.kron(h, ident) - sp.kron(ident, h.T))
    for rate, c in lindblad_channels(space, params, probe):
        c = sp.csr_matrix(c)
        cd = c.conj().T
        cdc = (cd @ c).tocsr()
        liouv = liouv + rate * (
            sp.kron(c, c.conj())
            - 0.5 * (sp.kron(cdc, ident) + sp.kron(ident, cdc.T))
        )
    return liouv.tocsr()


@dataclass(frozen=True)
class OracleMoments:
    photon_number: float
    atom_photon: complex
    inversion: float
    pair_corr: complex
    zz_corr: float
    j_squared: float
    filter_number: float | None = None
    cross_photon: complex | None = None
    cross_atom: complex | None = None

    def as_dict(self) -> dict:
        out = {
            "photon_number": self.photon_number,
            "atom_photon": self.atom_photon,
            "inversion": self.inversion,
            "pair_corr": self.pair_corr,
            "zz_corr": self.zz_corr,
            "j_squared": self.j_squared,
        }
        if self.filter_number is not None:
            out.update(
                filter_number=self.filter_number,
                cross_photon=self.cross_photon,
                cross_atom=self.cross_atom,
            )
        return out


@dataclass
class OracleResult:
    rho: np.ndarray
    space: HilbertSpace
    moments: OracleMoments
    n_max: int
    residual: float
    eigmin: float


def _expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))


def collective_ops(space: HilbertSpace) -> dict[str, np.ndarray]:
    """Collective spin operators J+-, Jz, J^2 lifted to the full space."""
    jp = sum(space.sp)
    jm = sum(space.sm)
    jz = 0.5 * sum(space.sz)
    j2 = 0.5 * (jp @ jm + jm @ jp) + jz @ jz
    return {"jp": jp, "jm": jm, "jz": jz, "j2": j2}


def moments_from_rho(space: HilbertSpace, rho: np.ndarray) -> OracleMoments:
    n = _expect(space.ad @ space.a, rho).real
    c = _expect(space.a @ space.sp[0], rho)
    s = _expect(space.sz[0], rho).real
    if space.n_atoms >= 2:
        p = _expect(space.sp[0] @ space.sm[1], rho)
        zz = _expect(space.sz[0] @ space.sz[1], rho).real
    else:
        p = 0.0 + 0.0j
        zz = 1.0
    j2 = _expect(collective_ops(space)["j2"], rho).real
    extra = {}
    if space.f is not None:
        extra = {
            "filter_number": _expect(space.fd @ space.f, rho).real,
            "cross_photon": _expect(space.a @ space.fd, rho),
            "cross_atom": _expect(space.sm[0] @ space.fd, rho),
        }
    return OracleMoments(
        photon_number=n, atom_photon=c, inversion=s, pair_corr=p,
        zz_corr=zz, j_squared=j2, **extra,
    )


def _solve_stationary(liouv: sp.csr_matrix, d: int) -> np.ndarray:
    """Stationary vec(rho): replace one row with the trace functional."""
    size = d * d
    trace_idx = np.arange(d) * (d + 1)
    b = np.zeros(size, dtype=complex)
    b[0] = 1.0
    if size <= 4096:
        mat = liouv.toarray()
        mat[0, :] = 0.0
        mat[0, trace_idx] = 1.0
        x = np.linalg.solve(mat, b)
    else:
        mat = liouv.tolil(copy=True)
        mat[0, :] = 0.0
        mat[0, trace_idx] = 1.0
        x = spla.splu(mat.tocsc()).solve(b)
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    return rho


def _steady_once(params: SystemParams, n_max: int, probe=None,
                 m_max: int | None = None) -> OracleResult:
    space = build_space(params, n_max, m_max)
    rho = _solve_stationary(_superoperator(space, params, probe), space.dim)
    h = hamiltonian(space, params, probe)
    channels = lindblad_channels(space, params, probe)
    drho = apply_liouvillian(rho, h, channels)
    residual = float(np.max(np.abs(drho)))
    eigmin = float(np.linalg.eigvalsh(rho)[0])
    return OracleResult(
        rho=rho, space=space, moments=moments_from_rho(space, rho),
        n_max=n_max, residual=residual, eigmin=eigmin,
    )


def _moment_drift(a: OracleMoments, b: OracleMoments) -> float:
    drift = 0.0
    for key, va in a.as_dict().items():
        vb = b.as_dict()[key]
        scale = max(abs(va), abs(vb), 1e-12)
        drift = max(drift, abs(va - vb) / scale)
    return drift


def oracle_steady_state(params: SystemParams, n_max: int = 6, probe=None,
                        m_max: int | None = None, max_rounds: int = 3,
                        drift_tol: float = 1e-6) -> OracleResult:
    """Stationary state with automatic Fock-cutoff convergence.

    Solves at n_max and n_max + 2 and requires every reported moment to
    agree to drift_tol relative; otherwise the cutoff is raised, at most
    max_rounds times.
    """
    cutoff = n_max
    drift = math.inf
    for _ in range(max_rounds):
        low = _steady_once(params, cutoff, probe, m_max)
        high = _steady_once(params, cutoff + 2, probe, m_max)
        drift = _moment_drift(low.moments, high.moments)
        if drift < drift_tol:
            return high
        cutoff += 2
    raise CutoffError(
        f"moments still drift {drift:.2e} (> {drift_tol:.0e}) at n_max={cutoff + 2}",
        drift=drift,
    )


_TRACKED = ("photon_number", "atom_photon", "inversion", "pair_corr")
_TRACKED_FILTER = _TRACKED + ("filter_number", "cross_photon", "cross_atom")


def moment_derivatives(params: SystemParams, rho: np.ndarray,
                       space: HilbertSpace, probe=None) -> dict[str, complex]:
    """Exact d<O>/dt for every tracked moment, for an arbitrary state."""
    if rho.shape != (space.dim, space.dim):
        raise ValueError(
            f"state dimension {rho.shape} does not match space ({space.dim})"
        )
    drho = apply_liouvillian(
        rho, hamiltonian(space, params, probe), lindblad_channels(space, params, probe)
    )
    ops = {
        "photon_number": space.ad @ space.a,
        "atom_photon": space.a @ space.sp[0],
        "inversion": space.sz[0],
    }
    if space.n_atoms >= 2:
        ops["pair_corr"] = space.sp[0] @ space.sm[1]
    if space.f is not None:
        ops["filter_number"] = space.fd @ space.f
        ops["cross_photon"] = space.a @ space.fd
        ops["cross_atom"] = space.sm[0] @ space.fd
    return {name: _expect(op, drho) for name, op in ops.items()}


def product_state(space: HilbertSpace, cavity_amps, bloch,
                  filter_amps=None) -> np.ndarray:
    """Uncorrelated state: pure cavity (x) [pure filter] (x) identical atoms.

    cavity_amps are Fock amplitudes (padded / truncated to the cutoff and
    normalised); bloch = (rx, ry, rz) fixes each atom's density matrix
    (I + r . sigma) / 2.
    """
    def _pure(amps, dim):
        vec = np.zeros(dim, dtype=complex)
        amps = np.asarray(amps, dtype=complex)
        vec[: len(amps)] = amps[:dim]
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ValueError("state amplitudes are all zero")
        vec = vec / norm
        return np.outer(vec, vec.conj())

    rho = _pure(cavity_amps, space.n_max + 1)
    if space.f is not None:
        if filter_amps is None:
            filter_amps = [1.0]
        rho = np.kron(rho, _pure(filter_amps, space.m_max + 1))
    elif filter_amps is not None:
        raise ValueError("filter amplitudes given but space has no filter mode")
    rx, ry, rz = bloch
    if rx * rx + ry * ry + rz * rz > 1.0 + 1e-12:
        raise ValueError("Bloch vector must satisfy |r| <= 1")
    sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    sy = np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)
    atom = 0.5 * (_ID2 + rx * sx + ry * sy + rz * _SZ)
    for _ in range(space.n_atoms):
        rho = np.kron(rho, atom)
    return rho


def oracle_spectrum(params: SystemParams, n_max: int, omega_grid,
                    decay_cut: float = 1e-6, max_windows: int = 40):
    """Emission spectrum via the quantum regression theorem.

    Propagates X(tau) = exp(L tau)[a rho_ss] with a sparse
    exponential-action integrator, samples C(tau) = Tr[a^dag X(tau)]
    until the envelope has decayed below decay_cut of C(0), and Fourier
    transforms Re integral_0^T C(tau) e^{i omega tau} d tau on the given
    grid.  Returns a unit-peak-normalised SpectrumScan.
    """
    from .spectrum import SpectrumScan  # local import to keep layering one-way

    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.ndim != 1 or omega_grid.size < 2:
        raise ValueError("omega_grid must be a 1-d grid with >= 2 points")
    result = oracle_steady_state(params, n_max=n_max)
    space = result.space
    liouv = _superoperator(space, params)
    x = (space.a @ result.rho).reshape(-1)
    ad_vec = space.ad.T.reshape(-1)  # Tr[ad X] = sum(ad.T * X)

    c0 = ad_vec @ x
    if abs(c0) < 1e-14:
        return SpectrumScan(
            omega=omega_grid, intensity=np.zeros_like(omega_grid), method="oracle"
        )

    rate_fast = max(
        params.kappa,
        params.gamma + params.eta + 4.0 * params.chi,
        math.sqrt(params.n_atoms) * params.g,
        abs(params.detuning),
        1e-300,
    )
    dtau = min(0.1 / rate_fast, math.pi / (8.0 * max(np.max(np.abs(omega_grid)), 0.1 * rate_fast)))
    window = 40.0 * (1.0 / rate_fast)
    samples = [c0]
    taus = [0.0]
    t0 = 0.0
    for _ in range(max_windows):
        num = max(int(math.ceil(window / dtau)), 8) + 1
        states = spla.expm_multiply(liouv, x, start=0.0, stop=window, num=num, endpoint=True)
        corr = states @ ad_vec
        step = window / (num - 1)
        taus.extend(t0 + step * np.arange(1, num))
        samples.extend(corr[1:])
        x = states[-1]
        t0 += window
        if np.max(np.abs(corr[1:])) < decay_cut * abs(c0):
            break
        window *= 1.5
    else:
        raise SimulationError(
            "correlation function had not decayed after the propagation budget"
        )

    taus = np.asarray(taus)
    samples = np.asarray(samples)
    # trapezoid weights on the (non-uniform across windows) tau grid
    weights = np.empty_like(taus)
    weights[0] = 0.5 * (taus[1] - taus[0])
    weights[-1] = 0.5 * (taus[-1] - taus[-2])
    weights[1:-1] = 0.5 * (taus[2:] - taus[:-2])
    phases = np.exp(1j * np.outer(omega_grid, taus))
    intensity = (phases @ (weights * samples)).real
    peak = np.max(intensity)
    if peak <= 0.0:
        raise SimulationError("spectrum has no positive peak; grid may miss the line")
    return SpectrumScan(omega=omega_grid, intensity=intensity / peak, method="oracle")


def _random_product_inputs(rng, support: int = 4):
    """Seeded cavity amplitudes and Bloch vector for a derivative check."""
    amps = rng.normal(size=support) + 1j * rng.normal(size=support)
    r = rng.normal(size=3)
    r = r / np.linalg.norm(r) * rng.uniform(0.1, 0.9)
    return amps, tuple(r)


def derivative_match_error(params: SystemParams, n_states: int = 25,
                           seed: int = 7, n_max: int = 6) -> float:
    """Worst relative mismatch between the moment-closure right-hand side
    and the exact derivatives, over seeded uncorrelated product states.

    On such states every factorization used by the closure is an exact
    identity, so the two must agree to round-off; this pins every sign
    and rate convention in the moment equations.
    """
    from .cumulant import MomentState, rhs

    rng = np.random.default_rng(seed)
    space = build_space(params, n_max)
    worst = 0.0
    for _ in range(n_states):
        amps, bloch = _random_product_inputs(rng)
        rho = product_state(space, amps, bloch)
        mom = moments_from_rho(space, rho)
        exact = moment_derivatives(params, rho, space)
        approx = rhs(
            MomentState(
                photon_number=mom.photon_number, atom_photon=mom.atom_photon,
                inversion=mom.inversion, pair_corr=mom.pair_corr,
            ),
            params,
        )
        pairs = [
            (exact["photon_number"], complex(approx.photon_number)),
            (exact["atom_photon"], approx.atom_photon),
            (exact["inversion"], complex(approx.inversion)),
        ]
        if params.n_atoms >= 2:
            pairs.append((exact["pair_corr"], approx.pair_corr))
        floor = 1e-3 * max(max(abs(a), abs(b)) for a, b in pairs)
        for a, b in pairs:
            worst = max(worst, abs(a - b) / max(abs(a), abs(b), floor, 1e-300))
    return worst


def consistency_report(seed: int = 7) -> list[dict]:
    """Cross-validation suite between this solver and the moment closure.

    Returns one record {test, max_error, pass} per check; meant for the
    oracle-check CLI subcommand.
    """
    report = []
    desk = dict(g=0.25, kappa=1.0, gamma=0.01, eta=0.2, chi=0.03)
    for n_atoms, n_states in ((2, 10), (3, 8), (4, 5)):
        err = derivative_match_error(
            SystemParams(n_atoms=n_atoms, **desk), n_states=n_states, seed=seed
        )
        report.append({
            "test": f"derivative_match_n{n_atoms}",
            "max_error": err, "pass": bool(err < 1e-10),
        })

    params2 = SystemParams(n_atoms=2, g=0.25, kappa=1.0, gamma=0.01, eta=0.2)
    result = oracle_steady_state(params2, n_max=6)
    trace_err = abs(np.trace(result.rho) - 1.0)
    herm_err = float(np.max(np.abs(result.rho - result.rho.conj().T)))
    neg = max(0.0, -result.eigmin)
    report.append({
        "test": "steady_state_validity_n2",
        "max_error": float(max(trace_err, herm_err, neg)),
        "pass": bool(trace_err < 1e-10 and herm_err < 1e-10 and neg < 1e-8),
    })

    from .cumulant import steady_state

    params3 = SystemParams(n_atoms=3, g=0.25, kappa=1.0, gamma=0.01, eta=0.2)
    exact_n = oracle_steady_state(params3, n_max=6).moments.photon_number
    closed_n = steady_state(params3).photon_number
    rel = abs(closed_n - exact_n) / abs(exact_n)
    report.append({
        "test": "steady_photon_closure_n3",
        "max_error": float(rel), "pass": bool(rel < 0.2),
    })

    decoupled = SystemParams(n_atoms=2, g=0.0, kappa=1.0, gamma=0.05, eta=0.1)
    pair = abs(oracle_steady_state(decoupled, n_max=2).moments.pair_corr)
    report.append({
        "test": "uncoupled_pair_corr_zero",
        "max_error": float(pair), "pass": bool(pair < 1e-12),
    })
    return report


# Pure atomic-space helpers for collective-spin tests -----------------------

def atomic_collective_ops(n_atoms: int) -> dict[str, np.ndarray]:
    """J operators on the bare 2^N atomic space (no cavity factor)."""
    dims = [2] * n_atoms

    def lift(op, site):
        out = np.eye(1, dtype=complex)
        for k, d in enumerate(dims):
            out = np.kron(out, op if k == site else np.eye(d, dtype=complex))
        return out

    jp = sum(lift(_SP, i) for i in range(n_atoms))
    jm = sum(lift(_SM, i) for i in range(n_atoms))
    jz = 0.5 * sum(lift(_SZ, i) for i in range(n_atoms))
    j2 = 0.5 * (jp @ jm + jm @ jp) + jz @ jz
    singles = {
        "sz": [lift(_SZ, i) for i in range(n_atoms)],
        "sp": [lift(_SP, i) for i in range(n_atoms)],
        "sm": [lift(_SM, i) for i in range(n_atoms)],
    }
    return {"jp": jp, "jm": jm, "jz": jz, "j2": j2, **singles}


def dicke_basis(n_atoms: int) -> list[tuple[float, float, np.ndarray]]:
    """Simultaneous (J, M) eigenvectors of J^2 and Jz on 2^N atoms."""
    ops = atomic_collective_ops(n_atoms)
    evals, evecs = np.linalg.eigh(ops["j2"].real)
    out = []
    used = np.zeros(len(evals), dtype=bool)
    jj_values = np.round(2.0 * ((np.sqrt(1.0 + 4.0 * evals) - 1.0) / 2.0)) / 2.0
    for jj in sorted(set(jj_values)):
        block = np.where((~used) & (np.abs(jj_values - jj) < 1e-6))[0]
        used[block] = True
        basis = evecs[:, block]
        jz_block = basis.conj().T @ ops["jz"].real @ basis
        m_vals, m_vecs = np.linalg.eigh(jz_block)
        for m, col in zip(m_vals, m_vecs.T):
            vec = basis @ col
            out.append((float(jj), float(np.round(2.0 * m) / 2.0), vec))
    return out
