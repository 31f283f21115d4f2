"""Parameter records, presets and unit handling for the atom-cavity model.

Every rate and frequency inside the package is an angular frequency in
rad/s.  The external surface (JSON configs, CSV output, CLI flags) speaks
ordinary frequency in Hz; the conversion happens exactly once, here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

TWO_PI = 2.0 * math.pi

#: Pump rate used for the flagship strontium-88 operating point, rad/s.
ETA_EXP = TWO_PI * 23.87e3

_RATE_FIELDS = ("g", "kappa", "gamma", "eta", "chi")


def from_hz(value: float) -> float:
    """Ordinary frequency in Hz -> angular frequency in rad/s."""
    return TWO_PI * value


def to_hz(value: float) -> float:
    """Angular frequency in rad/s -> ordinary frequency in Hz."""
    return value / TWO_PI


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of N identical two-level atoms in a lossy cavity.

    Attributes
    ----------
    n_atoms : number of atoms N (>= 1)
    g : single-atom coupling to the cavity mode, rad/s
    kappa : cavity field decay rate, rad/s
    gamma : atomic spontaneous emission rate, rad/s
    eta : incoherent pump (repump) rate per atom, rad/s
    chi : atomic dephasing rate multiplying the sigma_z channel, rad/s
    omega_a, omega_c : atomic / cavity frequencies in the rotating frame
    """

    n_atoms: int
    g: float
    kappa: float
    gamma: float
    eta: float = 0.0
    chi: float = 0.0
    omega_a: float = 0.0
    omega_c: float = 0.0

    def __post_init__(self) -> None:
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms}")
        for name in _RATE_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        for name in ("omega_a", "omega_c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def detuning(self) -> float:
        """Atom-cavity detuning omega_a - omega_c, rad/s."""
        return self.omega_a - self.omega_c

    def updated(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedRates:
    """Rates derived from :class:`SystemParams`; all rad/s except d0.

    purcell is the single-atom cavity-enhanced decay rate 4 g^2 / kappa,
    big_gamma the total single-atom decoherence rate eta + gamma + 2 chi,
    c_collective = N * purcell, d0 the bare steady inversion
    (eta - gamma)/(eta + gamma) (None when the denominator vanishes) and
    collective_coupling = sqrt(N) * g.
    """

    purcell: float
    big_gamma: float
    c_collective: float
    d0: float | None
    collective_coupling: float


def derived(params: SystemParams) -> DerivedRates:
    if params.kappa > 0.0:
        purcell = 4.0 * params.g**2 / params.kappa
    else:
        purcell = math.inf if params.g > 0.0 else 0.0
    pump_total = params.eta + params.gamma
    d0 = (params.eta - params.gamma) / pump_total if pump_total > 0.0 else None
    return DerivedRates(
        purcell=purcell,
        big_gamma=params.eta + params.gamma + 2.0 * params.chi,
        c_collective=params.n_atoms * purcell,
        d0=d0,
        collective_coupling=math.sqrt(params.n_atoms) * params.g,
    )


# Preset transitions.  Values are ordinary frequencies in Hz and converted
# once; eta and n_atoms are left at the caller defaults (0, 1).
_PRESETS_HZ = {
    "sr88": {"gamma": 7.5e3, "kappa": 160e3, "g": 10.6e3},
    "sr87": {"gamma": 1e-3, "kappa": 160e3, "g": 2.41},
}

PRESET_NAMES = tuple(sorted(_PRESETS_HZ))


def preset(name: str, **overrides) -> SystemParams:
    """Return a named parameter preset, optionally updated via keywords."""
    try:
        base = _PRESETS_HZ[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        ) from None
    params = SystemParams(
        n_atoms=1,
        g=from_hz(base["g"]),
        kappa=from_hz(base["kappa"]),
        gamma=from_hz(base["gamma"]),
    )
    return params.updated(**overrides) if overrides else params


_CONFIG_KEYS = {
    "preset",
    "n_atoms",
    "g_hz",
    "kappa_hz",
    "gamma_hz",
    "eta_hz",
    "chi_hz",
    "detuning_hz",
}


def load_config(config: dict) -> SystemParams:
    """Build :class:`SystemParams` from a JSON-style mapping (Hz units).

    A ``preset`` entry supplies g/kappa/gamma defaults; explicit ``*_hz``
    entries override it.  Unknown keys raise, to catch typos early.
    """
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "preset" in config:
        params = preset(config["preset"])
        fields = {
            "g": params.g,
            "kappa": params.kappa,
            "gamma": params.gamma,
        }
    else:
        fields = {}
        for key in ("g_hz", "kappa_hz", "gamma_hz"):
            if key not in config:
                raise ValueError(f"config without preset requires {key}")
        fields = {
            "g": from_hz(config["g_hz"]),
            "kappa": from_hz(config["kappa_hz"]),
            "gamma": from_hz(config["gamma_hz"]),
        }
    for key, field in (("g_hz", "g"), ("kappa_hz", "kappa"), ("gamma_hz", "gamma")):
        if key in config:
            fields[field] = from_hz(config[key])
    detuning = from_hz(config.get("detuning_hz", 0.0))
    return SystemParams(
        n_atoms=int(config.get("n_atoms", 1)),
        eta=from_hz(config.get("eta_hz", 0.0)),
        chi=from_hz(config.get("chi_hz", 0.0)),
        omega_a=detuning,
        omega_c=0.0,
        **fields,
    )


def params_to_config(params: SystemParams) -> dict:
    """Inverse of :func:`load_config`; external Hz units."""
    return {
        "n_atoms": params.n_atoms,
        "g_hz": to_hz(params.g),
        "kappa_hz": to_hz(params.kappa),
        "gamma_hz": to_hz(params.gamma),
        "eta_hz": to_hz(params.eta),
        "chi_hz": to_hz(params.chi),
        "detuning_hz": to_hz(params.detuning),
    }
