"""Electro-optic phase modulator acting on the frequency-bin basis.

With the RF drive locked to the cavity FSR, the modulator maps mode ``|n>``
to ``sum_k U_k |n + k>`` with ``U_k = J_k(c) exp(i k (gamma - pi/2))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

MAX_ARGUMENT = 5.0
MAX_MOD_INDEX = 5.0
DEFAULT_TOL = 1e-9

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class EomSetting:
    """One modulator configuration: index ``c`` and RF phase in degrees."""

    mod_index: float
    phase_deg: float = 0.0
    rf_equals_fsr: bool = True

    def __post_init__(self):
        c, ph = float(self.mod_index), float(self.phase_deg)
        if not (math.isfinite(c) and math.isfinite(ph)):
            raise ValueError("modulator setting must be finite")
        if not 0.0 <= c <= MAX_MOD_INDEX:
            raise ValueError(f"mod_index must lie in [0, {MAX_MOD_INDEX}], got {c}")
        if not self.rf_equals_fsr:
            raise ValueError("only RF drive at the cavity FSR is supported")
        object.__setattr__(self, "mod_index", c)
        object.__setattr__(self, "phase_deg", ph)

    @property
    def phase_rad(self) -> float:
        return math.radians(math.fmod(self.phase_deg, 360.0))

    def shifted(self, delta_deg: float) -> "EomSetting":
        return EomSetting(self.mod_index, self.phase_deg + delta_deg)


@dataclass(frozen=True)
class EomCoefficients:
    order_cutoff: int
    coeffs: np.ndarray  # index k + order_cutoff holds U_k

    def __getitem__(self, k: int) -> complex:
        if abs(k) > self.order_cutoff:
            return 0j
        return complex(self.coeffs[k + self.order_cutoff])

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.order_cutoff, self.order_cutoff + 1)

    @property
    def unitarity_defect(self) -> float:
        return 1.0 - math.fsum(abs(u) ** 2 for u in self.coeffs)


def _series_scalar(n: int, x: float) -> float:
    # n >= 0; terms t_k = (-1)^k (x/2)^(2k+n) / (k! (k+n)!)
    half = 0.5 * x
    term = 1.0
    for j in range(1, n + 1):
        term *= half / j
    if term == 0.0:
        return 0.0
    q = -half * half
    terms = [term]
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        terms.append(term)
        # <= so that a term that underflowed to zero also stops the loop
        if abs(term) <= 1e-18 * abs(terms[0]) and k > half:
            break
    return math.fsum(terms)


def _series_array(n: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = np.ones_like(x)
    for j in range(1, n + 1):
        term = term * half / j
    q = -half * half
    total = term.copy()
    comp = np.zeros_like(x)
    # 40 terms reach 1e-30 relative for |x| <= 5
    for k in range(1, 41):
        term = term * q / (k * (k + n))
        # Kahan summation
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def bessel_j(order: int, x: ArrayLike) -> ArrayLike:
    """Integer-order Bessel function of the first kind, ``|x| <= 5``.

    Power series with compensated summation.  Negative orders use
    ``J_{-n}(x) = (-1)^n J_n(x)`` exactly.  Accepts scalars or arrays.
    """
    n = int(order)
    if n != order:
        raise ValueError(f"order must be an integer, got {order!r}")
    sign = -1.0 if (n < 0 and n % 2) else 1.0
    n = abs(n)
    if np.ndim(x) == 0:
        xf = float(x)
        if not abs(xf) <= MAX_ARGUMENT:
            raise ValueError(f"|x| must be <= {MAX_ARGUMENT}, got {xf}")
        return sign * _series_scalar(n, xf)
    arr = np.asarray(x, dtype=float)
    if arr.size and not np.all(np.abs(arr) <= MAX_ARGUMENT):
        raise ValueError(f"|x| must be <= {MAX_ARGUMENT}")
    return sign * _series_array(n, arr)


def bessel_table(orders: np.ndarray, x: ArrayLike) -> np.ndarray:
    """``J_n(x)`` for every order in ``orders``; shape ``(len(orders),) + shape(x)``."""
    cache: dict[int, np.ndarray] = {}
    out = []
    for n in np.asarray(orders, dtype=int).ravel():
        m = abs(int(n))
        if m not in cache:
            cache[m] = np.asarray(bessel_j(m, x), dtype=float)
        val = cache[m]
        out.append(-val if (n < 0 and m % 2) else val)
    return np.array(out)


@lru_cache(maxsize=4096)
def truncation_order(mod_index: float, tol: float = DEFAULT_TOL) -> int:
    """Smallest ``K`` with ``sum_{|k|>K} J_k(c)^2 < tol``."""
    if not 0 < tol <= 1e-3:
        raise ValueError(f"tol must lie in (0, 1e-3], got {tol}")
    c = float(mod_index)
    if c == 0.0:
        return 0
    K = 0
    while True:
        # the tail decays faster than geometrically once k > c, 60 terms is ample
        tail = 2.0 * math.fsum(_series_scalar(j, c) ** 2 for j in range(K + 1, K + 61))
        if tail < tol:
            return K
        K += 1


@lru_cache(maxsize=8192)
def eom_coefficients(setting: EomSetting, tol: float = DEFAULT_TOL) -> EomCoefficients:
    K = truncation_order(setting.mod_index, tol)
    ks = np.arange(-K, K + 1)
    j = bessel_table(ks, setting.mod_index)
    coeffs = j * np.exp(1j * ks * (setting.phase_rad - math.pi / 2))
    coeffs.flags.writeable = False
    return EomCoefficients(order_cutoff=K, coeffs=coeffs)
