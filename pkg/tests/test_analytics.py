import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import poisson

from giasec.analytics import (INTENSIVE_JAMMING, MODERATE_JAMMING, PURE_IA, aligning_curve, classify_mode,
                              expected_excess, expected_Il, feasible_region, indicator_R, interference_moments,
                              predict_sdof, region_f, trapezoid_check, trapezoid_vertices, tx_budgets)
from giasec.geometry import StochasticParams

DEFAULT = StochasticParams()
# frozen hand evaluation for the default network: rho_l = 4 pi, rho_j = 9 pi, m = 15
RHO_L, RHO_J = 4 * math.pi, 9 * math.pi
R_E = 1 - 32 / (RHO_L + RHO_J)
R_L = (8 - 1 + min(15, RHO_L) + min(9 / 4 * 15, RHO_J)) / (RHO_L + RHO_J) - 1


def _lam(rho):
    """Density giving connection density ``rho`` at alpha=4, theta=1e-2."""
    return rho / (100 * math.pi)


def test_frozen_indicator_values():
    assert R_E == pytest.approx(0.2165, abs=1e-4)
    assert R_L == pytest.approx(0.1714, abs=1e-4)
    rep = indicator_R(DEFAULT)
    assert rep.R_e == pytest.approx(R_E, rel=1e-12)
    assert rep.R_l == pytest.approx(R_L, rel=1e-12)
    assert rep.R == pytest.approx(R_L) and rep.feasible
    assert rep.mode == INTENSIVE_JAMMING


def test_budgets():
    assert tx_budgets(DEFAULT) == (15, 15)
    assert tx_budgets(StochasticParams(M_l=4, N_l=4, M_j=4, d_l=2), 2, 1) == (1, 1)


def test_moments_default():
    mb = interference_moments(DEFAULT)
    assert mb.e_Ie == pytest.approx(13 * math.pi)
    assert mb.v_Ie == pytest.approx(13 * math.pi)
    assert mb.e_Il_low <= expected_Il(DEFAULT) <= mb.e_Il_high


def test_lower_bound_clamps_to_zero():
    p = StochasticParams(lambda_j=0.0, lambda_l=0.04)
    assert interference_moments(p).e_Il_low == 0.0


@given(st.floats(0.1, 200.0), st.integers(0, 60))
def test_expected_excess_matches_sum(mean, m):
    n = np.arange(0, int(mean + 40 * math.sqrt(mean) + m + 50))
    direct = float(np.sum(np.maximum(n - m, 0) * poisson.pmf(n, mean)))
    assert expected_excess(mean, m) == pytest.approx(direct, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("rho_l, rho_j, M", [(5, 0, 16), (12.6, 28.3, 16), (40, 10, 8), (80, 80, 32), (20, 5, 4)])
def test_exact_mean_inside_bounds(rho_l, rho_j, M):
    p = StochasticParams(lambda_l=_lam(rho_l), lambda_j=_lam(rho_j), M_l=M, M_j=M, N_l=4)
    mb = interference_moments(p)
    assert mb.e_Il_low - 1e-12 <= expected_Il(p) <= mb.e_Il_high + 1e-12


def test_jamming_line_boundary():
    p = StochasticParams(lambda_l=_lam(10), lambda_j=0.0, N_e=10)
    assert indicator_R(p).R_e == pytest.approx(0.0, abs=1e-12)
    q = StochasticParams(lambda_l=_lam(10), lambda_j=0.0, N_e=12)
    assert indicator_R(q).R_e < 0 and not indicator_R(q).feasible


def test_prediction_and_flag():
    point, transitory = predict_sdof(DEFAULT)
    assert point == 1.0
    # |R| = 0.171 sits inside the error-term threshold sqrt(max d max rho / (rho_l^2 d_l)) = 0.423
    assert transitory is True
    assert predict_sdof(DEFAULT.with_(N_e=60)) == (0.0, False)
    with pytest.raises(ValueError):
        predict_sdof(StochasticParams(lambda_l=0.001))


def test_dense_network_not_transitory():
    p = StochasticParams(lambda_l=0.4, lambda_j=0.4, N_l=260, M_l=16, M_j=16, N_e=20)
    rep = indicator_R(p)
    assert rep.R > 0 and not rep.transitory


@pytest.mark.parametrize("Ne, Nl, Ml, Mj, mode", [(20, 8, 16, 16, PURE_IA), (32, 8, 16, 16, INTENSIVE_JAMMING),
                                                 (25, 8, 16, 30, MODERATE_JAMMING)])
def test_modes(Ne, Nl, Ml, Mj, mode):
    assert classify_mode(Ne, Nl, Ml, Mj) == mode


def test_below_jamming_line():
    f1, *_ = region_f(DEFAULT.with_(N_e=40), 0, 3, 10, 20)
    assert f1 <= 0


def test_f3_f4_vanish_exactly_at_corner():
    p = StochasticParams(M_l=8, N_l=8, M_j=40)
    for rho_l, rho_j in [(Fraction(10), Fraction(7)), (Fraction(31, 3), Fraction(0)), (10, 50)]:
        _, _, f3, f4 = region_f(p, p.M_j, 0, rho_l, rho_j)
        assert f3 == 0 and f4 == 0


def test_trapezoid_property():
    assert trapezoid_check(8, 8, 40, 10.0)
    assert trapezoid_check(4, 6, 10, 25.0, sample_count=2000)
    with pytest.raises(ValueError):
        trapezoid_check(8, 8, 15, 10.0)


def test_trapezoid_centroid_negative():
    p = StochasticParams(M_l=8, N_l=8, M_j=40)
    verts = np.array(trapezoid_vertices(StochasticParams(M_l=8, N_l=8, M_j=40, lambda_l=_lam(10))))
    cx, cy = verts.mean(axis=0)
    _, f2, f3, f4 = region_f(p, cx, cy, 10.0, 10.0)
    assert f2 < 0 and f3 < 0 and f4 < 0


@given(st.floats(0.0, 40.0), st.floats(1.0, 60.0), st.floats(0.0, 60.0))
def test_aligning_curve_is_boundary(d_j, rho_l, rho_j):
    p = StochasticParams(M_l=8, N_l=8, M_j=40, lambda_l=_lam(rho_l), lambda_j=_lam(rho_j))
    rl, rj = rho_l, rho_j
    from giasec.geometry import connection_density
    rl, rj = connection_density(p)
    y = float(aligning_curve(p, np.array([d_j]))[0])
    _, f2, f3, f4 = region_f(p, d_j, y, rl, rj)
    scale = 1 + rl * y * (rl * y + rj * d_j + 48)
    assert max(f2, f3, f4) <= 1e-9 * scale
    _, f2, f3, f4 = region_f(p, d_j, y + 1e-6 + 1e-6 * y, rl, rj)
    assert max(f2, f3, f4) > 0 or y == 0


def test_region_map_outputs(tmp_path):
    p = StochasticParams(lambda_l=0.2, lambda_j=0.2, M_l=8, N_l=8, M_j=24, N_e=16)
    rmap = feasible_region(p)
    rho_l = 0.2 * 100 * math.pi
    assert rmap.jamming_intercept == pytest.approx(16 / rho_l)
    assert rmap.jamming_slope == pytest.approx(-1.0)
    assert rmap.trapezoid is not None
    path = tmp_path / "r.csv"
    rmap.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# giasec region_map v1"
    assert lines[1].split(",")[-2:] == ["feasible_exact", "feasible_highdensity"]
    assert len(lines) == 2 + 25 * 8
    rmap.write_curves(tmp_path / "c.json")


def test_trapezoid_interior_grid_points_feasible():
    p = StochasticParams(lambda_l=0.2, lambda_j=0.2, M_l=8, N_l=8, M_j=24, N_e=4)
    rmap = feasible_region(p)
    h = (p.M_l + p.N_l) / (0.2 * 100 * math.pi)
    for r in rmap.reports:
        inside = 0 < r.d_l < h and r.d_j > 0 and r.d_l < h * (p.M_j - r.d_j) / (p.M_l + p.N_l)
        if inside:
            assert r.f2 < 0 and r.f3 < 0 and r.f4 < 0


def test_empty_region_when_jamming_line_too_high():
    p = StochasticParams(lambda_l=0.01, lambda_j=0.01, M_l=4, N_l=4, M_j=4, N_e=40)
    rho = math.pi
    assert p.N_e > rho * 4 + rho * 4
    rmap = feasible_region(p)
    assert rmap.feasible_set() == set() and rmap.feasible_set(highdensity=True) == set()


def test_high_density_agreement():
    p = StochasticParams(lambda_l=0.2, lambda_j=0.2, M_l=32, N_l=32, M_j=32, N_e=64)
    rmap = feasible_region(p, range(0, 30), range(1, 31))
    assert rmap.agreement > 0.95
