"""Discrete frequency-bin spectrum of the photon pair.

A pair in signal mode ``n`` has its idler partner in mode ``-n`` (absolute
frequency offset from the idler centre).  Only the signal index is stored.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping, Union

import numpy as np

DEFAULT_FSR_MHZ = 423.66
DEFAULT_LINEWIDTH_MHZ = 2.8
LINEWIDTH_WARN_RATIO = 0.1


class ConfigError(ValueError):
    """Malformed or invalid configuration document.

    ``path`` is the dotted field path of the offending entry when known.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class ModeSpectrum:
    amplitudes: Mapping[int, float]
    fsr_mhz: float = DEFAULT_FSR_MHZ
    linewidth_mhz: float = DEFAULT_LINEWIDTH_MHZ
    _indices: np.ndarray = field(init=False, repr=False, compare=False)
    _values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        amps = {}
        for n, f in dict(self.amplitudes).items():
            if isinstance(n, bool) or int(n) != n:
                raise ValueError(f"mode index must be an integer, got {n!r}")
            f = float(f)
            if not math.isfinite(f) or f < 0:
                raise ValueError(f"amplitude for mode {n} must be finite and >= 0, got {f}")
            amps[int(n)] = f
        if not amps:
            raise ValueError("spectrum has no modes")
        if not (self.fsr_mhz > 0 and self.linewidth_mhz > 0):
            raise ValueError("fsr_mhz and linewidth_mhz must be positive")
        if self.linewidth_mhz / self.fsr_mhz > LINEWIDTH_WARN_RATIO:
            warnings.warn(
                f"linewidth/FSR = {self.linewidth_mhz / self.fsr_mhz:.3g} > {LINEWIDTH_WARN_RATIO}; "
                "frequency bins are not well separated",
                stacklevel=3,
            )
        ordered = dict(sorted(amps.items()))
        object.__setattr__(self, "amplitudes", MappingProxyType(ordered))
        idx = np.fromiter(ordered.keys(), dtype=int, count=len(ordered))
        val = np.fromiter(ordered.values(), dtype=float, count=len(ordered))
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "_indices", idx)
        object.__setattr__(self, "_values", val)

    @property
    def indices(self) -> np.ndarray:
        return self._indices

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def norm2(self) -> float:
        return math.fsum(f * f for f in self._values)

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm2 - 1.0) <= 1e-12

    def amplitude(self, n: int) -> float:
        return self.amplitudes.get(n, 0.0)

    def __len__(self) -> int:
        return len(self.amplitudes)


def normalize(raw: ModeSpectrum) -> ModeSpectrum:
    total = raw.norm2
    if total <= 0:
        raise ValueError("cannot normalize an all-zero spectrum")
    scale = 1.0 / math.sqrt(total)
    return ModeSpectrum(
        {n: f * scale for n, f in raw.amplitudes.items()},
        fsr_mhz=raw.fsr_mhz,
        linewidth_mhz=raw.linewidth_mhz,
    )


def from_weights(
    weights: Mapping[int, float],
    fsr_mhz: float = DEFAULT_FSR_MHZ,
    linewidth_mhz: float = DEFAULT_LINEWIDTH_MHZ,
) -> ModeSpectrum:
    """Build a normalized spectrum from intensity-like weights (``f_n**2``)."""
    total = math.fsum(weights.values())
    if total <= 0:
        raise ValueError("weights sum to zero")
    return normalize(
        ModeSpectrum(
            {n: math.sqrt(w / total) for n, w in weights.items()},
            fsr_mhz=fsr_mhz,
            linewidth_mhz=linewidth_mhz,
        )
    )


def _require_number(value: Any, path: str, *, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", path)
    if positive and value <= 0:
        raise ConfigError(f"must be > 0, got {value}", path)
    return value


def parse_spectrum_document(doc: Any, path: str = "spectrum") -> ModeSpectrum:
    """Validate a spectrum document and return the normalized spectrum.

    Expected shape::

        {"fsr_mhz": 423.66, "linewidth_mhz": 2.8,
         "modes": [{"n": 0, "weight": 1.0}, ...]}

    Weights are coincidence peak heights, i.e. proportional to ``f_n**2``.
    """
    if not isinstance(doc, Mapping):
        raise ConfigError("spectrum document must be an object", path)
    allowed = {"fsr_mhz", "linewidth_mhz", "modes", "note", "source"}
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", path)
    fsr = _require_number(doc.get("fsr_mhz", DEFAULT_FSR_MHZ), f"{path}.fsr_mhz", positive=True)
    lw = _require_number(
        doc.get("linewidth_mhz", DEFAULT_LINEWIDTH_MHZ), f"{path}.linewidth_mhz", positive=True
    )
    modes = doc.get("modes")
    if not isinstance(modes, list):
        raise ConfigError("'modes' must be a list", f"{path}.modes")
    if not modes:
        raise ConfigError("mode set is empty", f"{path}.modes")
    weights: dict[int, float] = {}
    for i, entry in enumerate(modes):
        where = f"{path}.modes[{i}]"
        if not isinstance(entry, Mapping) or "n" not in entry or "weight" not in entry:
            raise ConfigError("each mode needs 'n' and 'weight'", where)
        n = entry["n"]
        if isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError(f"mode index must be an integer, got {n!r}", f"{where}.n")
        w = _require_number(entry["weight"], f"{where}.weight")
        if w < 0:
            raise ConfigError(f"negative weight {w}", f"{where}.weight")
        if n in weights:
            raise ConfigError(f"duplicate mode index {n}", f"{where}.n")
        weights[n] = w
    if math.fsum(weights.values()) <= 0:
        raise ConfigError("all weights are zero", f"{path}.modes")
    return from_weights(weights, fsr_mhz=fsr, linewidth_mhz=lw)


def load_spectrum(source: Union[str, Path, Mapping[str, Any]]) -> ModeSpectrum:
    """Load a spectrum from a JSON file path, a JSON string, or a parsed document.

    The name ``"builtin:fig1a"`` resolves to the shipped eight-mode fixture.
    """
    if isinstance(source, Mapping):
        return parse_spectrum_document(source)
    text = str(source)
    if text.startswith("builtin:"):
        return parse_spectrum_document(_builtin_document(text.split(":", 1)[1]))
    if text.lstrip().startswith("{"):
        return parse_spectrum_document(_loads(text, "<string>"))
    p = Path(text)
    if not p.is_file():
        raise ConfigError(f"spectrum file not found: {p}", "spectrum")
    return parse_spectrum_document(_loads(p.read_text(), str(p)))


def _loads(text: str, name: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _builtin_document(name: str) -> dict:
    files = {"fig1a": "fig1a_spectrum.json"}
    if name not in files:
        raise ConfigError(f"unknown builtin spectrum {name!r}", "spectrum")
    text = resources.files("fbinsim").joinpath("data", files[name]).read_text()
    return json.loads(text)


def fig1a_spectrum() -> ModeSpectrum:
    """Approximate eight-mode spectrum of the cavity source (modes -3..+4)."""
    return load_spectrum("builtin:fig1a")


def spectrum_document(spec: ModeSpectrum) -> dict:
    """Inverse of :func:`parse_spectrum_document` (weights are ``f_n**2``)."""
    return {
        "fsr_mhz": spec.fsr_mhz,
        "linewidth_mhz": spec.linewidth_mhz,
        "modes": [{"n": n, "weight": f * f} for n, f in spec.amplitudes.items()],
    }


@dataclass(frozen=True)
class GaussianEnvelope:
    """Gaussian intensity envelope ``exp(-(n - offset)**2 / (2 sigma**2))``."""

    sigma: float
    offset: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


def envelope_indices(n_modes: int) -> range:
    """Mode indices used by synthetic combs: centred, extra mode on the + side."""
    return range(-((n_modes - 1) // 2), n_modes // 2 + 1)


def generate_envelope_spectrum(
    n_modes: int,
    envelope: Union[str, GaussianEnvelope] = "flat",
    fsr_mhz: float = DEFAULT_FSR_MHZ,
    linewidth_mhz: float = DEFAULT_LINEWIDTH_MHZ,
) -> ModeSpectrum:
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    idx = envelope_indices(n_modes)
    if envelope == "flat":
        weights = {n: 1.0 for n in idx}
    elif isinstance(envelope, GaussianEnvelope):
        weights = {
            n: math.exp(-((n - envelope.offset) ** 2) / (2 * envelope.sigma**2)) for n in idx
        }
    else:
        raise ValueError(f"unknown envelope {envelope!r}")
    return from_weights(weights, fsr_mhz=fsr_mhz, linewidth_mhz=linewidth_mhz)
