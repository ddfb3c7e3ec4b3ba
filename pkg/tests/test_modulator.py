import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbinsim.modulator import (
    EomSetting,
    bessel_j,
    bessel_table,
    eom_coefficients,
    truncation_order,
)
from oracles import bessel_miller, bessel_series_mp

BELL_RUN_INDICES = (0.0, 0.29, 0.34, 0.44, 0.56, 0.81, 0.85, 1.30, 1.36)

orders = st.integers(-12, 12)
args = st.floats(-5.0, 5.0, allow_nan=False)


def test_known_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(3, 0.0) == 0.0
    assert bessel_j(0, 1.3) == pytest.approx(0.620086, abs=1e-6)
    assert bessel_j(1, 1.0) == pytest.approx(0.440051, abs=1e-6)


def test_argument_bound():
    with pytest.raises(ValueError):
        bessel_j(0, 5.01)
    with pytest.raises(ValueError):
        bessel_j(0, np.array([1.0, -6.0]))
    with pytest.raises(ValueError):
        bessel_j(0.5, 1.0)


@given(orders, args)
def test_series_matches_multiprecision(n, x):
    assert abs(bessel_j(n, x) - bessel_series_mp(n, x)) <= 1e-12


@given(st.integers(0, 12), args)
def test_negative_order_parity_exact(n, x):
    assert bessel_j(-n, x) == (-1) ** n * bessel_j(n, x)


@given(orders, st.lists(st.floats(-5.0, 5.0, allow_nan=False), min_size=1, max_size=6))
def test_array_path_matches_scalar(n, xs):
    arr = bessel_j(n, np.array(xs))
    for x, v in zip(xs, arr):
        assert abs(v - bessel_j(n, x)) <= 1e-14


def test_backward_recurrence_cross_check():
    for n in range(-10, 11):
        for x in np.round(np.arange(0.1, 5.0001, 0.1), 10):
            assert abs(bessel_j(n, x) - bessel_miller(n, x)) < 1e-12


def test_table_shape():
    t = bessel_table(np.arange(-3, 4), np.array([0.5, 1.0]))
    assert t.shape == (7, 2)
    assert t[4, 1] == pytest.approx(0.440051, abs=1e-6)


def test_truncation_examples():
    assert truncation_order(0.0, 1e-9) == 0
    K = truncation_order(1.36, 1e-9)
    assert K < 10
    assert 1 - math.fsum(bessel_series_mp(k, 1.36) ** 2 for k in range(-K, K + 1)) < 1e-9
    # K is the smallest such order
    Km = K - 1
    assert 1 - math.fsum(bessel_series_mp(k, 1.36) ** 2 for k in range(-Km, Km + 1)) >= 1e-9


@pytest.mark.parametrize("tol", [0.0, 1e-2, -1e-9])
def test_truncation_tol_range(tol):
    with pytest.raises(ValueError):
        truncation_order(1.0, tol)


@given(st.floats(0, 1.4), st.floats(0, 1.4))
def test_truncation_monotone(c1, c2):
    lo, hi = sorted((c1, c2))
    assert truncation_order(lo) <= truncation_order(hi)


@pytest.mark.parametrize("c", BELL_RUN_INDICES)
def test_unitarity_at_bell_run_indices(c):
    u = eom_coefficients(EomSetting(c, 0.0))
    assert u.unitarity_defect < 1e-9


def test_identity_modulator():
    u = eom_coefficients(EomSetting(0.0, 123.0))
    assert u.order_cutoff == 0
    assert u[0] == 1.0
    assert u[1] == 0.0


def test_coefficient_definition():
    s = EomSetting(1.3, 40.0)
    u = eom_coefficients(s)
    assert abs(u[0]) == pytest.approx(0.620086, abs=1e-6)
    for k in range(-u.order_cutoff, u.order_cutoff + 1):
        want = bessel_series_mp(k, 1.3) * np.exp(1j * k * (math.radians(40.0) - math.pi / 2))
        assert abs(u[k] - want) < 1e-13


@given(st.floats(0, 1.4), st.floats(-720, 720))
def test_phase_period_360(c, g):
    a = eom_coefficients(EomSetting(c, g)).coeffs
    b = eom_coefficients(EomSetting(c, g + 360.0)).coeffs
    assert np.max(np.abs(a - b)) < 1e-12


def test_table1_phase_361_equals_1():
    a = eom_coefficients(EomSetting(0.34, 361.0)).coeffs
    b = eom_coefficients(EomSetting(0.34, 1.0)).coeffs
    assert np.max(np.abs(a - b)) < 1e-14


def test_coefficients_read_only():
    u = eom_coefficients(EomSetting(0.5))
    with pytest.raises(ValueError):
        u.coeffs[0] = 0


@pytest.mark.parametrize("bad", [-0.1, 5.1, float("nan")])
def test_setting_validation(bad):
    with pytest.raises(ValueError):
        EomSetting(bad)


def test_rf_must_match_fsr():
    with pytest.raises(ValueError):
        EomSetting(0.5, rf_equals_fsr=False)
