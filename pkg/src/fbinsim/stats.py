"""Count sampling, fringe visibility and Poissonian error propagation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

RNG_ALGORITHM = "numpy.PCG64/SeedSequence.spawn"


@dataclass(frozen=True)
class CountRecord:
    label: str
    rate: float          # expected counts per trial
    draws: tuple[int, ...]
    seed: int
    stream: int          # index of the spawned child stream

    @property
    def trials(self) -> int:
        return len(self.draws)

    @property
    def count(self) -> int:
        return int(sum(self.draws))


def sample_counts(
    rates: Sequence[float],
    trials: int,
    seed: int,
    labels: Sequence[str] | None = None,
) -> list[CountRecord]:
    """Independent Poisson draws, one child stream per rate.

    Streams are spawned from ``SeedSequence(seed)`` so record ``i`` depends
    only on ``(seed, i, rates[i], trials)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rates = [float(r) for r in rates]
    for r in rates:
        if not (math.isfinite(r) and r >= 0):
            raise ValueError(f"Poisson rate must be finite and >= 0, got {r}")
    if labels is None:
        labels = [f"r{i}" for i in range(len(rates))]
    if len(labels) != len(rates):
        raise ValueError("labels and rates differ in length")
    children = np.random.SeedSequence(seed).spawn(len(rates))
    out = []
    for i, (lab, lam, child) in enumerate(zip(labels, rates, children)):
        gen = np.random.Generator(np.random.PCG64(child))
        draws = gen.poisson(lam, size=trials)
        out.append(CountRecord(str(lab), lam, tuple(int(v) for v in draws), int(seed), i))
    return out


def fit_sinusoid(beta_deg: Sequence[float], values: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares ``A + B cos(beta - phi)`` with a 360 degree period.

    Returns ``(A, B, phi_deg)`` with ``B >= 0``.
    """
    b = np.radians(np.asarray(beta_deg, dtype=float))
    v = np.asarray(values, dtype=float)
    design = np.column_stack([np.ones_like(b), np.cos(b), np.sin(b)])
    (a0, c, s), *_ = np.linalg.lstsq(design, v, rcond=None)
    return float(a0), float(math.hypot(c, s)), float(math.degrees(math.atan2(s, c)))


def visibility(
    fringe: Sequence[tuple[float, float]], fitted: bool = False, method: str = "fit"
) -> float:
    """Fringe contrast.

    ``method="fit"``: ``|B| / A`` from a first-harmonic fit ``A + B cos(beta - phi)``.
    ``method="extrema"``: ``(max - min) / (max + min)`` of the sampled values,
    which stays meaningful when the fringe carries higher harmonics.
    Needs at least four points spanning a full period unless ``fitted`` says
    the caller vouches for the sampling.
    """
    if len(fringe) < 4:
        raise ValueError("visibility needs at least 4 points")
    beta = np.array([p[0] for p in fringe], dtype=float)
    vals = np.array([p[1] for p in fringe], dtype=float)
    if not fitted:
        span = beta.max() - beta.min()
        uniq = np.unique(beta)
        # a grid that stops one step short of 360 still covers the period
        step = float(np.min(np.diff(uniq))) if len(uniq) > 1 else 0.0
        if span + step < 360.0 - 1e-9:
            raise ValueError("fringe must span a full 360 degree period")
    if method == "extrema":
        hi, lo = float(vals.max()), float(vals.min())
        if hi + lo <= 0:
            raise ValueError("fringe is identically zero")
        return (hi - lo) / (hi + lo)
    if method != "fit":
        raise ValueError(f"unknown visibility method {method!r}")
    a0, amp, _ = fit_sinusoid(beta, vals)
    if a0 <= 0:
        raise ValueError(f"fitted offset A = {a0:.3g} is not positive")
    v = amp / a0
    if v > 1.0:
        warnings.warn(f"first-harmonic visibility {v:.4f} > 1 clamped to 1", stacklevel=2)
        v = 1.0
    return v


Count = Union[int, float, CountRecord]


def _as_count(c: Count) -> float:
    return float(c.count) if isinstance(c, CountRecord) else float(c)


def propagate_s_error(joints: Sequence[Count], marginal: Count, k: float) -> float:
    """Poisson error on ``S = 2 (C00 + C01 + C10 - C11) / (M (1 + k))``.

    Each count is its own variance; ``k`` carries no uncertainty.
    """
    if len(joints) != 4:
        raise ValueError("need four joint counts (x0y0, x0y1, x1y0, x1y1)")
    c = [_as_count(v) for v in joints]
    m = _as_count(marginal)
    if m <= 0:
        raise ValueError("marginal count must be > 0")
    if k <= 0:
        raise ValueError("k must be > 0")
    norm = 2.0 / (m * (1.0 + k))
    s = norm * (c[0] + c[1] + c[2] - c[3])
    # dS/dC_ij = +-norm, dS/dM = -S/M
    var = norm**2 * math.fsum(c) + (s / m) ** 2 * m
    return math.sqrt(var)
