"""Two-photon interference after both modulators.

Mode labels: signal mode ``a`` is the absolute signal bin; idler mode ``b``
labels the idler bin paired with signal bin ``b`` (absolute idler offset
``-b``), so the unmodulated state populates ``(n, n)`` and the filter
separation ``d = a - b`` equals the total number of sidebands exchanged.

The pair amplitude collapses to a single sum over the spectrum::

    <a, b | psi> = sum_n f_n U^s_{a-n} U^i_{n-b}
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .modulator import DEFAULT_TOL, EomCoefficients, EomSetting, bessel_table, eom_coefficients
from .spectrum import ModeSpectrum

PROB_FLOOR = 1e-300


class Scheme(str, enum.Enum):
    FULL = "full"        # every mode pair in the truncation support
    SIM4 = "sim4"        # heralded on idler 0, signal |d| <= 4
    EXP3 = "exp3"        # signal fixed to 0, idler in {-1, 0, +1}
    EXPBELL = "expbell"  # idler fixed to 0, signal in {-1, 0, +1}

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown scheme {value!r}; choose from full, sim4, exp3, expbell") from None


@dataclass(frozen=True)
class FilterSelection:
    signal_mode: int = 0
    idler_mode: int = 0

    @property
    def d(self) -> int:
        return self.signal_mode - self.idler_mode


@dataclass(frozen=True)
class ProbabilityTable:
    entries: Mapping[tuple[int, int], float]
    scheme: Scheme
    settings: tuple[EomSetting, EomSetting]
    total: float            # raw probability mass of the selected entries
    slice_total: float      # raw mass of the full slice the scheme heralds on
    scanned_side: str | None = None
    heralding_mode: int | None = None

    def __getitem__(self, key: tuple[int, int]) -> float:
        return self.entries[key]

    @property
    def deviation(self) -> float:
        """Fraction of the heralded slice missed by this scheme's normalization."""
        return 1.0 - self.total / self.slice_total


def _clamp(p: float) -> float:
    return 0.0 if p < PROB_FLOOR else p


def joint_amplitude(
    spec: ModeSpectrum,
    x: EomSetting,
    y: EomSetting,
    sel: FilterSelection = FilterSelection(),
    tol: float = DEFAULT_TOL,
) -> complex:
    """Amplitude of finding signal in ``sel.signal_mode`` and idler in ``sel.idler_mode``.

    ``x`` drives the signal modulator, ``y`` the idler modulator.
    """
    us = eom_coefficients(x, tol)
    ui = eom_coefficients(y, tol)
    return _collapsed_amplitude(spec, us, ui, sel.signal_mode, sel.idler_mode)


def _collapsed_amplitude(
    spec: ModeSpectrum, us: EomCoefficients, ui: EomCoefficients, a: int, b: int
) -> complex:
    # delta constraints leave only n with |a-n| <= Ks and |n-b| <= Ki
    lo = max(a - us.order_cutoff, b - ui.order_cutoff)
    hi = min(a + us.order_cutoff, b + ui.order_cutoff)
    acc = 0j
    for n, f in spec.amplitudes.items():
        if lo <= n <= hi and f:
            acc += f * us[a - n] * ui[n - b]
    return acc


def coincidence_prob(
    spec: ModeSpectrum,
    x: EomSetting,
    y: EomSetting,
    sel: FilterSelection = FilterSelection(),
    tol: float = DEFAULT_TOL,
) -> float:
    return _clamp(abs(joint_amplitude(spec, x, y, sel, tol)) ** 2)


def pair_amplitudes(
    spec: ModeSpectrum, x: EomSetting, y: EomSetting, tol: float = DEFAULT_TOL
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Amplitude matrix over the whole truncation support.

    Returns ``(signal_modes, idler_modes, A)`` with ``A[i, j]`` the amplitude
    for ``(signal_modes[i], idler_modes[j])``.
    """
    # Dropped sidebands leave first-order cross terms in single rows and
    # columns (the total only loses second-order ones), so the support is cut
    # at tol**2 to keep row sums within tol of the marginals.
    support_tol = min(tol * tol, tol / 2)
    us = eom_coefficients(x, support_tol)
    ui = eom_coefficients(y, support_tol)
    ns = spec.indices
    a_modes = np.arange(ns[0] - us.order_cutoff, ns[-1] + us.order_cutoff + 1)
    b_modes = np.arange(ns[0] - ui.order_cutoff, ns[-1] + ui.order_cutoff + 1)
    # A = S diag(f) I with S[a, n] = U^s_{a-n}, I[n, b] = U^i_{n-b}
    s_mat = _shift_matrix(us, a_modes[:, None] - ns[None, :])
    i_mat = _shift_matrix(ui, ns[:, None] - b_modes[None, :])
    return a_modes, b_modes, (s_mat * spec.values[None, :]) @ i_mat


def _shift_matrix(u: EomCoefficients, offsets: np.ndarray) -> np.ndarray:
    K = u.order_cutoff
    inside = np.abs(offsets) <= K
    out = np.zeros(offsets.shape, dtype=complex)
    out[inside] = u.coeffs[offsets[inside] + K]
    return out


def marginal_prob(
    spec: ModeSpectrum,
    setting: EomSetting,
    side: str,
    mode: int = 0,
    tol: float = DEFAULT_TOL,
) -> float:
    """Single-photon probability in ``mode`` on one side after its modulator.

    Signal mode ``m``: ``sum_n f_n^2 J_{m-n}(c)^2``.  Idler label ``m`` (absolute
    offset ``-m``): ``sum_n f_n^2 J_{n-m}(c)^2``, which is the same value.
    """
    if side not in ("signal", "idler"):
        raise ValueError(f"side must be 'signal' or 'idler', got {side!r}")
    K = eom_coefficients(setting, tol).order_cutoff
    shifts = mode - spec.indices
    j = bessel_table(shifts, setting.mod_index)
    j[np.abs(shifts) > K] = 0.0
    p = math.fsum(spec.values**2 * j**2)
    return _clamp(p)


def _scheme_pairs(
    scheme: Scheme, a_modes: np.ndarray, b_modes: np.ndarray
) -> tuple[list[tuple[int, int]], list[tuple[int, int]], str | None, int | None]:
    """(selected pairs, heralded slice pairs, scanned side, heralding mode)."""
    full = [(int(a), int(b)) for a in a_modes for b in b_modes]
    if scheme is Scheme.FULL:
        return full, full, None, None
    if scheme is Scheme.EXP3:
        sl = [(0, int(b)) for b in b_modes]
        return [(0, b) for b in (-1, 0, 1)], sl, "idler", 0
    sl = [(int(a), 0) for a in a_modes]
    if scheme is Scheme.EXPBELL:
        return [(a, 0) for a in (-1, 0, 1)], sl, "signal", 0
    return [(a, 0) for a in range(-4, 5)], sl, "signal", 0


def probability_table(
    spec: ModeSpectrum,
    x: EomSetting,
    y: EomSetting,
    scheme: "Scheme | str" = Scheme.FULL,
    tol: float = DEFAULT_TOL,
) -> ProbabilityTable:
    """Joint outcome probabilities renormalized by the scheme's own total."""
    scheme = Scheme.parse(scheme)
    a_modes, b_modes, amp = pair_amplitudes(spec, x, y, tol)
    prob = np.abs(amp) ** 2
    a0, b0 = int(a_modes[0]), int(b_modes[0])

    def p(a: int, b: int) -> float:
        i, j = a - a0, b - b0
        if 0 <= i < prob.shape[0] and 0 <= j < prob.shape[1]:
            return float(prob[i, j])
        return 0.0

    selected, sl, side, herald = _scheme_pairs(scheme, a_modes, b_modes)
    raw = {ab: p(*ab) for ab in selected}
    total = math.fsum(raw.values())
    slice_total = math.fsum(p(*ab) for ab in sl)
    if total <= 0:
        raise ValueError(f"scheme {scheme.value} has zero total probability for these settings")
    entries = {ab: _clamp(v / total) for ab, v in raw.items()}
    return ProbabilityTable(
        entries=entries,
        scheme=scheme,
        settings=(x, y),
        total=total,
        slice_total=slice_total,
        scanned_side=side,
        heralding_mode=herald,
    )


def normalization_deviation(
    spec: ModeSpectrum,
    x: EomSetting,
    y: EomSetting,
    scheme: "Scheme | str" = Scheme.EXP3,
    tol: float = DEFAULT_TOL,
) -> float:
    """Relative shortfall of a restricted normalization against the full heralded slice."""
    return probability_table(spec, x, y, scheme, tol).deviation


def fringe_scan(
    spec: ModeSpectrum,
    x_base: EomSetting,
    y: EomSetting,
    sel: FilterSelection,
    beta_grid: Sequence[float],
    scheme: "Scheme | str" = Scheme.FULL,
    tol: float = DEFAULT_TOL,
) -> list[tuple[float, float]]:
    """Coincidence probability versus signal phase, idler setting fixed."""
    scheme = Scheme.parse(scheme)
    if len(beta_grid) == 0:
        raise ValueError("empty phase grid")
    out = []
    for beta in beta_grid:
        x = EomSetting(x_base.mod_index, float(beta))
        if scheme is Scheme.FULL:
            p = coincidence_prob(spec, x, y, sel, tol)
        else:
            table = probability_table(spec, x, y, scheme, tol)
            key = (sel.signal_mode, sel.idler_mode)
            if key not in table.entries:
                raise ValueError(f"filter pair {key} is outside scheme {scheme.value}")
            p = table.entries[key]
        out.append((float(beta), p))
    return out

