"""Lattice model: parameters, pump profiles, detunings and configuration I/O.

Units: hbar = 1 and every energy is measured in units of the hopping J,
times in units of 1/J.  Sites are labelled symmetrically,
``j = -(L-1)/2, ..., (L-1)/2`` with ``L`` odd.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "LatticeParams",
    "PumpProfile",
    "RunSettings",
    "check",
    "config_from_mapping",
    "detuning",
    "detunings",
    "dump_config",
    "load_config",
    "site_indices",
    "validate",
]


class ConfigError(ValueError):
    """Raised for unreadable, malformed or invalid configuration documents."""


def site_indices(sites: int) -> np.ndarray:
    """Symmetric integer site labels ``-(L-1)/2 .. (L-1)/2``."""
    half = (sites - 1) // 2
    return np.arange(-half, sites - half)


@dataclass(frozen=True)
class PumpProfile:
    """Coherent pump amplitudes ``eta_j`` keyed by site label.

    Stored as a sorted tuple of ``(site, amplitude)`` pairs so that the
    profile is hashable and immutable. Sites not listed are undriven.
    """

    amplitudes: tuple[tuple[int, float], ...] = ((0, 1.0),)

    @classmethod
    def single_site(cls, amplitude: float = 1.0, site: int = 0) -> "PumpProfile":
        return cls(((int(site), float(amplitude)),))

    @classmethod
    def from_mapping(cls, table: Mapping[int, float]) -> "PumpProfile":
        return cls(tuple(sorted((int(j), float(v)) for j, v in table.items())))

    def as_dict(self) -> dict[int, float]:
        return dict(self.amplitudes)

    def as_array(self, sites: int) -> np.ndarray:
        """Dense real vector of pump amplitudes over the lattice."""
        out = np.zeros(sites)
        half = (sites - 1) // 2
        for j, eta in self.amplitudes:
            out[j + half] += eta
        return out


@dataclass(frozen=True)
class LatticeParams:
    """All constants of the tilted, driven-dissipative Kerr-cavity lattice.

    Parameters
    ----------
    sites : int
        Number of cavities ``L`` (odd, >= 3).
    hopping : float
        Nearest-neighbour tunnelling ``J``.
    tilt : float
        Frequency step per site ``dw`` (> 0).
    pump_center : float
        ``j0``; the detuning is ``dw * (j - j0)``.
    kerr : float
        On-site interaction ``chi``.
    loss : float
        Amplitude decay rate ``kappa`` (photon number decays at ``2 kappa``).
    pump : PumpProfile
        Coherent drive amplitudes.
    """

    sites: int = 41
    hopping: float = 1.0
    tilt: float = 0.5
    pump_center: float = 0.0
    kerr: float = 0.01
    loss: float = 0.01
    pump: PumpProfile = field(default_factory=PumpProfile)

    @property
    def gamma(self) -> float:
        """Dimensionless Wannier-Stark width ``2J/dw``."""
        return 2.0 * self.hopping / self.tilt

    @property
    def half_width(self) -> int:
        return (self.sites - 1) // 2

    @property
    def site_labels(self) -> np.ndarray:
        return site_indices(self.sites)

    def eta(self) -> np.ndarray:
        return self.pump.as_array(self.sites)

    def with_(self, **changes: Any) -> "LatticeParams":
        return replace(self, **changes)


def detuning(params: LatticeParams, j: int) -> float:
    """Cavity-pump detuning ``dw * (j - j0)`` of site ``j``."""
    half = params.half_width
    if not -half <= j <= params.sites - 1 - half:
        raise IndexError(f"site {j} outside lattice [{-half}, {params.sites - 1 - half}]")
    return params.tilt * (j - params.pump_center)


def detunings(params: LatticeParams) -> np.ndarray:
    return params.tilt * (params.site_labels - params.pump_center)


def validate(params: LatticeParams) -> list[str]:
    """Return every invariant violation of ``params``; empty means valid."""
    problems: list[str] = []
    L = params.sites
    if not isinstance(L, (int, np.integer)) or isinstance(L, bool):
        problems.append("L must be an integer")
    else:
        if L % 2 == 0:
            problems.append("L must be odd")
        if L < 3:
            problems.append("L must be at least 3")
    for name in ("hopping", "tilt", "pump_center", "kerr", "loss"):
        value = getattr(params, name)
        if not math.isfinite(value):
            problems.append(f"{name} must be finite")
    if math.isfinite(params.tilt) and params.tilt <= 0:
        problems.append("tilt must be positive")
    for name in ("hopping", "kerr", "loss"):
        value = getattr(params, name)
        if math.isfinite(value) and value < 0:
            problems.append(f"{name} must be non-negative")
    if isinstance(L, (int, np.integer)) and L >= 1:
        half = (L - 1) // 2
        for j, eta in params.pump.amplitudes:
            if not -half <= j <= L - 1 - half:
                problems.append(f"pump site {j} outside lattice")
            if not math.isfinite(eta):
                problems.append(f"pump amplitude at site {j} must be finite")
        if len({j for j, _ in params.pump.amplitudes}) != len(params.pump.amplitudes):
            problems.append("pump sites must be unique")
    return problems


def check(params: LatticeParams) -> LatticeParams:
    """Raise :class:`ValueError` listing all violations, else return ``params``."""
    problems = validate(params)
    if problems:
        raise ValueError("invalid lattice parameters: " + "; ".join(problems))
    return params


@dataclass(frozen=True)
class RunSettings:
    """Integration, sampling and classification settings for one run.

    ``t_end`` and ``window_start`` default to ``12/kappa`` and ``6/kappa``
    when left as ``None`` (see :meth:`resolved`).
    """

    method: str = "meanfield"
    t_end: float | None = None
    window_start: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    sample_dt: float = 0.5
    snapshot_stride: int = 0
    seed_amplitude: float = 0.0
    seed: int = 0
    steady_eps: float = 1e-3
    stationary_threshold: float = 0.01
    peak_fraction: float = 0.6
    min_periods: float = 10.0

    def resolved(self, params: LatticeParams) -> "RunSettings":
        rate = params.loss if params.loss > 0 else 0.01
        t_end = self.t_end if self.t_end is not None else 12.0 / rate
        start = self.window_start if self.window_start is not None else 6.0 / rate
        return replace(self, t_end=float(t_end), window_start=float(min(start, t_end)))


_ALIASES = {
    "l": "sites", "j": "hopping", "deltaomega": "tilt", "delta_omega": "tilt",
    "j0": "pump_center", "chi": "kerr", "kappa": "loss",
}
_LATTICE_TYPES = {"sites": int, "hopping": float, "tilt": float,
                  "pump_center": float, "kerr": float, "loss": float}
_RUN_TYPES = {f.name: f.type for f in fields(RunSettings)}


def _coerce(section: str, key: str, value: Any, kind: Any) -> Any:
    where = f"[{section}] {key}"
    if kind in (int, "int"):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if kind in (float, "float", "float | None"):
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if kind in (str, "str"):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _parse_pump(table: Mapping[str, Any]) -> PumpProfile:
    known = {"amplitude", "site", "amplitudes"}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[pump]: unknown keys {sorted(unknown)}")
    if "amplitudes" in table:
        if "amplitude" in table or "site" in table:
            raise ConfigError("[pump]: give either 'amplitudes' or 'amplitude'/'site', not both")
        entries = {}
        for key, value in table["amplitudes"].items():
            try:
                j = int(key)
            except ValueError:
                raise ConfigError(f"[pump.amplitudes] {key}: site label must be an integer") from None
            entries[j] = _coerce("pump.amplitudes", key, value, float)
        return PumpProfile.from_mapping(entries)
    amplitude = _coerce("pump", "amplitude", table.get("amplitude", 1.0), float)
    site = _coerce("pump", "site", table.get("site", 0), int)
    return PumpProfile.single_site(amplitude, site)


def load_config(text: str) -> tuple[LatticeParams, RunSettings]:
    """Parse a TOML configuration document.

    Unspecified values take the defaults of :class:`LatticeParams` and
    :class:`RunSettings`. Raises :class:`ConfigError` naming the offending
    line or field on malformed input and on invariant violations.
    """
    return config_from_mapping(parse_toml(text))


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None


def config_from_mapping(doc: Mapping[str, Any]) -> tuple[LatticeParams, RunSettings]:
    """Build parameters from an already parsed document (see :func:`load_config`)."""
    unknown_sections = set(doc) - {"lattice", "pump", "run"}
    if unknown_sections:
        raise ConfigError(f"unknown sections {sorted(unknown_sections)}")

    lattice: dict[str, Any] = {}
    for key, value in doc.get("lattice", {}).items():
        name = _ALIASES.get(key.lower(), key)
        if name not in _LATTICE_TYPES:
            raise ConfigError(f"[lattice] {key}: unknown key")
        lattice[name] = _coerce("lattice", key, value, _LATTICE_TYPES[name])
    lattice["pump"] = _parse_pump(doc.get("pump", {}))
    params = LatticeParams(**lattice)

    run: dict[str, Any] = {}
    for key, value in doc.get("run", {}).items():
        if key not in _RUN_TYPES:
            raise ConfigError(f"[run] {key}: unknown key")
        run[key] = _coerce("run", key, value, _RUN_TYPES[key])
    settings = RunSettings(**run)
    if settings.method not in ("meanfield", "cumulant2"):
        raise ConfigError(f"[run] method: expected 'meanfield' or 'cumulant2', got {settings.method!r}")

    problems = validate(params)
    if problems:
        raise ConfigError("invalid parameters: " + "; ".join(problems))
    return params, settings


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("nan" if value != value else ("inf" if value > 0 else "-inf"))
    return str(value)


def dump_config(params: LatticeParams, settings: RunSettings | None = None) -> str:
    """Serialize to the TOML document understood by :func:`load_config`."""
    lines = ["[lattice]"]
    for name in _LATTICE_TYPES:
        lines.append(f"{name} = {_fmt(getattr(params, name))}")
    lines += ["", "[pump.amplitudes]"]
    for j, eta in params.pump.amplitudes:
        lines.append(f"{j} = {_fmt(float(eta))}")
    if settings is not None:
        lines += ["", "[run]"]
        for f in fields(RunSettings):
            value = getattr(settings, f.name)
            if value is not None:
                lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"
