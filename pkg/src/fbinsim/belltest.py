"""Clauser-Horne test on the modulated pair state.

The CH combination is evaluated as::

    S = 2 (P00|x0y0 + P00|x0y1 + P00|x1y0 - P00|x1y1) / (M (1 + k))

with ``k = P(0|x0) / P(0|y0)`` and ``M`` the idler central-mode marginal
``P(0|y0)``, so that ``M (1 + k) = P(0|x0) + P(0|y0)`` and ``S <= 2`` is the
local bound.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .interference import (
    FilterSelection,
    Scheme,
    coincidence_prob,
    marginal_prob,
    probability_table,
)
from .modulator import DEFAULT_TOL, EomSetting, bessel_table
from .spectrum import ModeSpectrum
from .stats import propagate_s_error

JOINT_LABELS = ("x0y0", "x0y1", "x1y0", "x1y1")
_SIGNS = (1.0, 1.0, 1.0, -1.0)
CENTRE = FilterSelection(0, 0)


@dataclass(frozen=True)
class BellConfig:
    """Signal settings ``x0, x1``, idler settings ``y0, y1``; ``k=None`` means computed."""

    x0: EomSetting
    x1: EomSetting
    y0: EomSetting
    y1: EomSetting
    k: float | None = None

    def __post_init__(self):
        if self.k is not None and not self.k > 0:
            raise ValueError(f"fixed k must be > 0, got {self.k}")

    def pairs(self) -> tuple[tuple[EomSetting, EomSetting], ...]:
        return ((self.x0, self.y0), (self.x0, self.y1), (self.x1, self.y0), (self.x1, self.y1))

    def with_signal_offsets(self, beta0: float, beta1: float) -> "BellConfig":
        return replace(self, x0=self.x0.shifted(beta0), x1=self.x1.shifted(beta1))


def _row(c: tuple[float, float, float, float], ph: tuple[float, float, float, float]) -> BellConfig:
    return BellConfig(
        EomSetting(c[0], ph[0]), EomSetting(c[1], ph[1]), EomSetting(c[2], ph[2]), EomSetting(c[3], ph[3])
    )


# measured settings of the two Bell runs (modulation index, RF phase in degrees)
TABLE1: dict[str, BellConfig] = {
    "fringe": _row((0.29, 0.85, 0.34, 0.81), (0, 182, 314, 181)),
    "bell_points": _row((0.44, 0.56, 0.34, 0.81), (0, 182, 361, 171)),
}
TABLE1_K = {"fringe": 1.01, "bell_points": 0.97}


@dataclass(frozen=True)
class BellResult:
    s_value: float
    k_used: float
    joints: Mapping[str, float]
    marginal_signal: float | None
    marginal_idler: float
    s_error: float | None = None

    @property
    def from_counts(self) -> bool:
        return self.s_error is not None


def _s_formula(joints: Sequence[float], marginal: float, k: float) -> float:
    return 2.0 * math.fsum(s * j for s, j in zip(_SIGNS, joints)) / (marginal * (1.0 + k))


def estimate_k(spec: ModeSpectrum, x0: EomSetting, y0: EomSetting, tol: float = DEFAULT_TOL) -> float:
    """Ratio of signal to idler central-mode marginals."""
    pi = marginal_prob(spec, y0, "idler", 0, tol)
    if pi <= 0:
        raise ValueError("idler central-mode marginal is zero")
    return marginal_prob(spec, x0, "signal", 0, tol) / pi


def ch_value(spec: ModeSpectrum, config: BellConfig, tol: float = DEFAULT_TOL) -> BellResult:
    """Model S from full-support joint probabilities (no restricted normalization)."""
    joints = [coincidence_prob(spec, x, y, CENTRE, tol) for x, y in config.pairs()]
    ps = marginal_prob(spec, config.x0, "signal", 0, tol)
    pi = marginal_prob(spec, config.y0, "idler", 0, tol)
    if pi <= 0:
        raise ValueError("idler central-mode marginal is zero")
    k = ps / pi if config.k is None else config.k
    return BellResult(
        s_value=_s_formula(joints, pi, k),
        k_used=k,
        joints=dict(zip(JOINT_LABELS, joints)),
        marginal_signal=ps,
        marginal_idler=pi,
    )


def s_from_counts(joints: Sequence[float], marginal: float, k: float) -> BellResult:
    """S and its Poisson error from raw coincidence counts.

    ``joints`` are ``C(00|x0y0), C(00|x0y1), C(00|x1y0), C(00|x1y1)``;
    ``marginal`` is the reference single count that ``k`` multiplies.
    """
    if len(joints) != 4:
        raise ValueError("need four joint counts")
    if any(c < 0 for c in joints):
        raise ValueError("counts must be >= 0")
    if not marginal > 0:
        raise ValueError("marginal count must be > 0")
    if not k > 0:
        raise ValueError("k must be > 0")
    s = _s_formula([float(c) for c in joints], float(marginal), k)
    return BellResult(
        s_value=s,
        k_used=k,
        joints=dict(zip(JOINT_LABELS, (float(c) for c in joints))),
        marginal_signal=None,
        marginal_idler=float(marginal),
        s_error=propagate_s_error(joints, marginal, k),
    )


class NormalizationBias(NamedTuple):
    s_full: float
    s_restricted: float
    relative: float
    deviations: dict[str, float]


def normalization_bias(
    spec: ModeSpectrum,
    config: BellConfig,
    scheme: "Scheme | str" = Scheme.EXP3,
    tol: float = DEFAULT_TOL,
) -> NormalizationBias:
    """Effect on S of normalizing each setting by a restricted mode set.

    Each joint probability is inflated by ``1 / (1 - deviation)`` of its own
    setting, as happens when the restricted sum stands in for the full one.
    """
    full = ch_value(spec, config, tol)
    devs = {}
    joints = []
    for lab, (x, y) in zip(JOINT_LABELS, config.pairs()):
        dev = probability_table(spec, x, y, scheme, tol).deviation
        devs[lab] = dev
        joints.append(full.joints[lab] / (1.0 - dev))
    s_r = _s_formula(joints, full.marginal_idler, full.k_used)
    return NormalizationBias(full.s_value, s_r, s_r / full.s_value - 1.0, devs)


def s_map(
    spec: ModeSpectrum,
    config: BellConfig,
    beta0_grid: Sequence[float],
    beta1_grid: Sequence[float],
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> np.ndarray:
    """S over additive signal-phase offsets: rows follow ``beta0`` (on x0), columns ``beta1`` (on x1)."""
    if len(beta0_grid) == 0 or len(beta1_grid) == 0:
        raise ValueError("empty phase grid")

    def row(b0: float) -> list[float]:
        return [ch_value(spec, config.with_signal_offsets(b0, b1), tol).s_value for b1 in beta1_grid]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, beta0_grid))
    else:
        rows = [row(b0) for b0 in beta0_grid]
    return np.array(rows, dtype=float)


# ----------------------------------------------------------------------------
# setting optimizer


@dataclass(frozen=True)
class Constraint:
    """Relation imposed between the two settings on each side.

    ``kind="constant"`` keeps ``c_x0 = c_x1`` and ``c_y0 = c_y1``;
    ``kind="alternating"`` allows ``|c_x0 - c_x1| <= max_delta_c`` (same for y).
    With ``pin_phase_shift`` the second setting on each side sits exactly
    ``phase_shift_deg`` after the first; otherwise the shift is only the
    origin of the phase search.
    """

    kind: str = "alternating"
    max_delta_c: float = 0.5
    phase_shift_deg: float = 180.0
    pin_phase_shift: bool = True

    def __post_init__(self):
        if self.kind not in ("constant", "alternating"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.max_delta_c < 0:
            raise ValueError("max_delta_c must be >= 0")


@dataclass(frozen=True)
class SearchSpec:
    grid_points: int = 15
    c_bounds: tuple[float, float] = (0.0, 1.4)
    max_grid_evals: int = 400_000
    n_starts: int = 4
    refine_tol: float = 1e-6
    max_sweeps: int = 200
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        lo, hi = self.c_bounds
        if not 0 <= lo <= hi:
            raise ValueError(f"invalid c_bounds {self.c_bounds}")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")


class _Objective:
    """Vectorized S at the central filter pair, computed-k convention.

    At ``a = b = 0`` the amplitude is ``sum_n f_n (-1)^n J_n(c_s) J_n(c_i) e^{i n (alpha - beta)}``.
    """

    def __init__(self, spec: ModeSpectrum, constraint: Constraint):
        self.ns = spec.indices.astype(float)
        self.f = spec.values
        self.f2 = spec.values**2
        self.parity = np.where(spec.indices % 2 == 0, 1.0, -1.0)
        self.constraint = constraint
        if constraint.kind == "constant":
            self.c_names = ["cx", "cy"]
        else:
            self.c_names = ["cx0", "cx1", "cy0", "cy1"]
        self.p_names = ["py0"] if constraint.pin_phase_shift else ["py0", "dpx1", "dpy1"]
        self.names = self.c_names + self.p_names

    def expand(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map coordinates ``(..., n_dims)`` to four indices and four phases (deg)."""
        v = np.asarray(v, dtype=float)
        d = dict(zip(self.names, np.moveaxis(v, -1, 0)))
        if self.constraint.kind == "constant":
            c = np.stack([d["cx"], d["cx"], d["cy"], d["cy"]])
        else:
            c = np.stack([d["cx0"], d["cx1"], d["cy0"], d["cy1"]])
        shift = self.constraint.phase_shift_deg
        px1 = shift + d.get("dpx1", 0.0)
        py1 = d["py0"] + shift + d.get("dpy1", 0.0)
        zero = np.zeros_like(d["py0"])
        p = np.stack([zero, zero + px1, d["py0"], zero + py1])
        return c, p

    def feasible(self, v: np.ndarray, lo: float, hi: float) -> np.ndarray:
        c, _ = self.expand(v)
        ok = np.all((c >= lo - 1e-12) & (c <= hi + 1e-12), axis=0)
        if self.constraint.kind == "alternating":
            lim = self.constraint.max_delta_c + 1e-12
            ok &= (np.abs(c[0] - c[1]) <= lim) & (np.abs(c[2] - c[3]) <= lim)
        return ok

    def __call__(self, v: np.ndarray) -> np.ndarray:
        c, p = self.expand(v)
        shape = c.shape[1:]
        c = c.reshape(4, -1)
        p = np.radians(p.reshape(4, -1))
        jt = [bessel_table(self.ns.astype(int), c[i]) for i in range(4)]  # (modes, N)
        joint = np.zeros(c.shape[1])
        for sgn, (ix, iy) in zip(_SIGNS, ((0, 2), (0, 3), (1, 2), (1, 3))):
            phase = np.exp(1j * self.ns[:, None] * (p[iy] - p[ix])[None, :])
            amp = np.sum(self.f[:, None] * self.parity[:, None] * jt[ix] * jt[iy] * phase, axis=0)
            joint += sgn * np.abs(amp) ** 2
        ps = np.sum(self.f2[:, None] * jt[0] ** 2, axis=0)
        pi = np.sum(self.f2[:, None] * jt[2] ** 2, axis=0)
        return (2.0 * joint / (ps + pi)).reshape(shape)

    def to_config(self, v: np.ndarray) -> BellConfig:
        c, p = self.expand(np.asarray(v, dtype=float))
        cs = [float(min(max(ci, 0.0), 5.0)) for ci in c]
        ps = [float(np.mod(pi, 360.0)) for pi in p]
        return _row(tuple(cs), tuple(ps))


def _grid_axes(obj: _Objective, search: SearchSpec) -> list[np.ndarray]:
    lo, hi = search.c_bounds
    g = search.grid_points
    axes = [np.linspace(lo, hi, g) for _ in obj.c_names]
    axes += [np.arange(g) * (360.0 / g) for _ in obj.p_names]
    return axes


def _coarse_grid(obj: _Objective, search: SearchSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    axes = _grid_axes(obj, search)
    dims = [len(a) for a in axes]
    total = int(np.prod(dims))
    lo, hi = search.c_bounds
    if total <= 4 * search.max_grid_evals:
        flat = np.arange(total)
    else:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        flat = np.sort(rng.choice(total, size=4 * search.max_grid_evals, replace=False))
    pts = np.stack([a[i] for a, i in zip(axes, np.unravel_index(flat, dims))], axis=-1)
    pts = pts[obj.feasible(pts, lo, hi)]
    if len(pts) == 0:
        raise ValueError("no feasible grid point for this constraint")
    if len(pts) > search.max_grid_evals:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
        pts = pts[np.sort(rng.choice(len(pts), size=search.max_grid_evals, replace=False))]
    vals = np.concatenate([obj(chunk) for chunk in np.array_split(pts, max(1, len(pts) // 50_000))])
    return pts, vals


def _interval(obj: _Objective, v: np.ndarray, j: int, search: SearchSpec) -> tuple[float, float]:
    name = obj.names[j]
    if name not in obj.c_names:
        return v[j] - 180.0, v[j] + 180.0
    lo, hi = search.c_bounds
    if obj.constraint.kind == "alternating":
        partner = {"cx0": "cx1", "cx1": "cx0", "cy0": "cy1", "cy1": "cy0"}[name]
        other = v[obj.names.index(partner)]
        lo = max(lo, other - obj.constraint.max_delta_c)
        hi = min(hi, other + obj.constraint.max_delta_c)
    return lo, hi


def _coordinate_ascent(obj: _Objective, v: np.ndarray, s: float, search: SearchSpec) -> tuple[np.ndarray, float]:
    v = v.copy()
    for _ in range(search.max_sweeps):
        start = s
        for j in range(len(v)):
            lo, hi = _interval(obj, v, j, search)
            if hi - lo < 1e-12:
                continue

            def neg(t: float, j: int = j) -> float:
                w = v.copy()
                w[j] = t
                return -float(obj(w))

            res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
            if -res.fun > s:
                v[j] = res.x
                s = -res.fun
        if s - start < search.refine_tol:
            break
    return v, s


def optimize_settings(
    spec: ModeSpectrum,
    constraint: Constraint,
    search: SearchSpec = SearchSpec(),
    seed: int = 0,
) -> tuple[BellConfig, float]:
    """Maximize S: coarse grid, then cyclic coordinate ascent from the best cells.

    Deterministic for a given ``(spec, constraint, search, seed)``; the seed
    only matters when the grid is larger than ``search.max_grid_evals``.
    """
    obj = _Objective(spec, constraint)
    pts, vals = _coarse_grid(obj, search, seed)
    order = np.lexsort((np.arange(len(vals)), -vals))[: search.n_starts]
    best_v, best_s = None, -np.inf
    for i in order:
        v, s = _coordinate_ascent(obj, pts[i], float(vals[i]), search)
        if s > best_s:
            best_v, best_s = v, s
    config = obj.to_config(best_v)
    return config, ch_value(spec, config, search.tol).s_value


# ----------------------------------------------------------------------------
# global phase offset between model and data


class _OffsetChi2(NamedTuple):
    offset_deg: float
    chi2: float


class PhaseFit(_OffsetChi2):
    """Unpacks as ``(offset_deg, chi2)``; the fitted amplitude scale rides along as ``.scale``."""

    def __new__(cls, offset_deg: float, chi2: float, scale: float = 1.0):
        obj = super().__new__(cls, offset_deg, chi2)
        obj.scale = scale
        return obj


def _wrap(deg: float) -> float:
    w = math.fmod(deg + 180.0, 360.0)
    if w < 0:
        w += 360.0
    return w - 180.0


def fit_phase_offset(
    model_fringe: Callable[[float], float],
    data: Sequence[tuple[float, float, float]],
    step_deg: float = 0.5,
) -> PhaseFit:
    """Fit ``scale * model(beta + offset)`` to ``(beta, count, sigma)`` data.

    The scale has a closed form at each offset; the offset is scanned on a
    grid, then polished with Brent and a few Gauss-Newton steps.
    """
    if len(data) < 3:
        raise ValueError("need at least 3 data points")
    beta = np.array([d[0] for d in data], dtype=float)
    y = np.array([d[1] for d in data], dtype=float)
    sig = np.array([d[2] for d in data], dtype=float)
    if np.any(sig <= 0):
        raise ValueError("sigma must be > 0")
    w = 1.0 / sig**2

    def model_at(offset: float) -> np.ndarray:
        return np.array([model_fringe(float(b + offset)) for b in beta], dtype=float)

    probe = np.array([model_fringe(float(t)) for t in np.arange(0.0, 360.0, 5.0)])
    if np.ptp(probe) <= 1e-12 * max(np.max(np.abs(probe)), 1e-300):
        raise ValueError("model fringe is flat; offset is undetermined")

    def resid(offset: float) -> tuple[np.ndarray, float]:
        m = model_at(offset)
        den = np.sum(w * m * m)
        s = float(np.sum(w * m * y) / den) if den > 0 else 0.0
        return (s * m - y) / sig, s

    def chi2(offset: float) -> float:
        r, _ = resid(offset)
        return float(r @ r)

    grid = np.arange(-180.0, 180.0, step_deg)
    vals = np.array([chi2(o) for o in grid])
    o0 = float(grid[int(np.argmin(vals))])
    res = minimize_scalar(chi2, bounds=(o0 - step_deg, o0 + step_deg), method="bounded",
                          options={"xatol": 1e-10})
    off, best = (float(res.x), float(res.fun)) if res.fun < vals.min() else (o0, float(vals.min()))
    h = 1e-6
    for _ in range(5):
        r, _ = resid(off)
        jac = (resid(off + h)[0] - resid(off - h)[0]) / (2 * h)
        jj = float(jac @ jac)
        if jj <= 0:
            break
        cand = off - float(jac @ r) / jj
        c2 = chi2(cand)
        if not c2 < best:
            break
        off, best = cand, c2
    _, scale = resid(off)
    return PhaseFit(_wrap(off), best, scale)
