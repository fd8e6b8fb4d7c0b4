"""Closed-form predictions for the stochastic network.

Covers the moments of the interference stream counts, the feasibility
indicator ``R`` with its sDoF prediction, operating modes, and the
high-density description of the feasible ``(d_j, d_l)`` region.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaincc

from .alignment import max_tx_selections
from .geometry import StochasticParams, connection_density

PURE_IA = "PureIA"
MODERATE_JAMMING = "ModerateJamming"
INTENSIVE_JAMMING = "IntensiveJamming"
REGION_CSV_VERSION = 1


@dataclass(frozen=True)
class MomentBounds:
    e_Il_low: float
    e_Il_high: float
    s_Il_high: float
    e_Ie: float
    v_Ie: float


@dataclass(frozen=True)
class RegionReport:
    d_j: float
    d_l: float
    R_e: float
    R_l: float
    R: float
    feasible: bool
    transitory: bool
    mode: str
    f1: float
    f2: float
    f3: float
    f4: float
    Rtilde_l: float
    feasible_highdensity: bool


def _streams(params: StochasticParams, d_l, d_j):
    return (params.d_l if d_l is None else d_l), (params.d_j if d_j is None else d_j)


def tx_budgets(params: StochasticParams, d_l: Optional[int] = None, d_j: Optional[int] = None) -> tuple[int, int]:
    """``(m_l, m_j)``: how many LRs one LT or LJ can null."""
    d_l, d_j = _streams(params, d_l, d_j)
    return max_tx_selections(params.M_l, d_l, d_l), max_tx_selections(params.M_j, d_j, d_l)


def interference_moments(params: StochasticParams, d_l: Optional[int] = None,
                         d_j: Optional[int] = None) -> MomentBounds:
    """Bounds on the mean and spread of ``I_l`` and exact moments of ``I_e``.

    The spread bound carries a ``d_x`` factor per class so that it is in
    the same stream units as ``I_l = d_l i_l + d_j i_j``.
    """
    d_l, d_j = _streams(params, d_l, d_j)
    rho_l, rho_j = connection_density(params)
    if rho_l <= 0:
        raise ValueError("need rho_l > 0")
    m_l, m_j = tx_budgets(params, d_l, d_j)
    low = high = s = 0.0
    for lam, rho, m, d in ((params.lambda_l, rho_l, m_l, d_l), (params.lambda_j, rho_j, m_j, d_j)):
        ratio = lam / params.lambda_l
        term = max(rho * d - ratio * m * d, 0.0)
        low += term
        high += term + d * ratio * math.sqrt(rho_l) / math.sqrt(2.0 * math.pi)
        mm = min(m, rho_l)
        if mm > 0:
            s += d * 4.0 * ratio * math.sqrt(math.pi * mm) * (1.0 + 1.0 / (6.0 * mm))
    return MomentBounds(low, high, s, rho_l * d_l + rho_j * d_j, rho_l * d_l ** 2 + rho_j * d_j ** 2)


def expected_excess(mean: float, m: int) -> float:
    """``E[(N - m)^+]`` for ``N ~ Poisson(mean)``, in closed form.

    Uses ``E[(N-m)^+] = mean - m + E[(m-N)^+]`` with the finite sum written
    through the regularized upper incomplete gamma function.
    """
    if m <= 0:
        return mean - m
    # E[(m - N)^+] = m P(N<=m-1) - mean P(N<=m-2)
    below = m * gammaincc(m, mean) - mean * (gammaincc(m - 1, mean) if m >= 2 else 0.0)
    return mean - m + below


def expected_unselected(params: StochasticParams, d_l: Optional[int] = None,
                        d_j: Optional[int] = None) -> tuple[float, float]:
    """Exact mean number of in-range LTs and LJs that do not select a typical LR.

    A transmitter of class ``x`` skips a given in-range LR when at least
    ``m_x`` other in-range LRs are nearer; with LRs forming a Poisson
    process this gives ``(lambda_x/lambda_l) E[(N - m_x)^+]``, ``N ~
    Poisson(rho_l)``.
    """
    rho_l, _ = connection_density(params)
    m_l, m_j = tx_budgets(params, d_l, d_j)
    _, d_j_ = _streams(params, d_l, d_j)
    i_l = expected_excess(rho_l, m_l)
    i_j = 0.0 if d_j_ == 0 else (params.lambda_j / params.lambda_l) * expected_excess(rho_l, m_j)
    return i_l, i_j


def expected_Il(params: StochasticParams, d_l: Optional[int] = None, d_j: Optional[int] = None) -> float:
    d_l, d_j = _streams(params, d_l, d_j)
    i_l, i_j = expected_unselected(params, d_l, d_j)
    return d_l * i_l + d_j * i_j


# ---------------------------------------------------------------- indicator

def classify_mode(N_e: int, N_l: int, M_l: int, M_j: int) -> str:
    if N_e <= N_l + M_l:
        return PURE_IA
    if N_e <= max(M_j, N_l + M_l):
        return MODERATE_JAMMING
    return INTENSIVE_JAMMING


def transitory_threshold(params: StochasticParams, d_l: Optional[int] = None, d_j: Optional[int] = None) -> float:
    d_l, d_j = _streams(params, d_l, d_j)
    rho_l, rho_j = connection_density(params)
    return math.sqrt(max(d_l, d_j) * max(rho_l, rho_j) / (rho_l ** 2 * d_l))


def region_f(params: StochasticParams, d_j, d_l, rho_l=None, rho_j=None) -> tuple:
    """High-density inequalities ``(f1, f2, f3, f4)``.

    Feasible iff ``f1 > 0`` and ``f2, f3, f4 < 0``. Written in factored
    form, so exact inputs (ints or Fractions) give exact values.
    """
    if rho_l is None or rho_j is None:
        rho_l, rho_j = connection_density(params)
    Ml, Nl, Mj, Ne = params.M_l, params.N_l, params.M_j, params.N_e
    a, b = rho_l * d_l, rho_j * d_j
    f1 = a + b - Ne
    f2 = a - Nl - Ml
    f3 = a * (a + b - Ml - Nl) + b * (d_j - Mj)
    f4 = a * (b - Nl) + b * (d_j - Mj)
    return f1, f2, f3, f4


def indicator_R(params: StochasticParams, d_l: Optional[int] = None, d_j: Optional[int] = None) -> RegionReport:
    """Exact indicator ``R = min(R_e, R_l)`` plus the high-density verdict."""
    d_l, d_j = _streams(params, d_l, d_j)
    rho_l, rho_j = connection_density(params)
    if rho_l <= 0 or d_l < 1:
        raise ValueError("need rho_l > 0 and d_l >= 1")
    m_l = max_tx_selections(params.M_l, d_l, d_l)
    m_j = max_tx_selections(params.M_j, d_j, d_l) if d_j > 0 else 0
    load = rho_l * d_l + rho_j * d_j
    R_e = 1.0 - params.N_e / load
    R_l = (params.N_l - d_l + min(m_l * d_l, rho_l * d_l) + min(rho_j / rho_l * m_j * d_j, rho_j * d_j)) / load - 1.0
    jam = rho_j * (params.M_j - d_j) * d_j / (rho_l * d_l)
    Rt_l = (params.N_l + min(params.M_l, rho_l * d_l) + min(jam, rho_j * d_j)) / load - 1.0
    R = min(R_e, R_l)
    f1, f2, f3, f4 = region_f(params, d_j, d_l, rho_l, rho_j)
    return RegionReport(
        d_j=d_j, d_l=d_l, R_e=R_e, R_l=R_l, R=R, feasible=R > 0,
        transitory=abs(R) <= transitory_threshold(params, d_l, d_j),
        mode=classify_mode(params.N_e, params.N_l, params.M_l, params.M_j),
        f1=f1, f2=f2, f3=f3, f4=f4, Rtilde_l=Rt_l,
        feasible_highdensity=bool(f1 > 0 and f2 < 0 and f3 < 0 and f4 < 0),
    )


def predict_sdof(params: StochasticParams, d_l: Optional[int] = None, d_j: Optional[int] = None) -> tuple[float, bool]:
    """Point prediction ``d_l * 1{R > 0}`` and whether ``R`` is in the transitory band."""
    rho_l, _ = connection_density(params)
    if rho_l < 1:
        raise ValueError(f"prediction needs rho_l >= 1, got {rho_l:.3g}")
    rep = indicator_R(params, d_l, d_j)
    return float(rep.d_l * (rep.R > 0)), rep.transitory


# ------------------------------------------------------------------ region

def aligning_curve(params: StochasticParams, d_j: np.ndarray) -> np.ndarray:
    """Largest ``d_l`` satisfying ``f2, f3, f4 <= 0`` at each ``d_j`` (continuous)."""
    rho_l, rho_j = connection_density(params)
    Ml, Nl, Mj = params.M_l, params.N_l, params.M_j
    d_j = np.asarray(d_j, dtype=float)
    b = rho_j * d_j
    top = np.full_like(d_j, (Ml + Nl) / rho_l)
    # f3 = 0: rho_l^2 x^2 + rho_l (b - Ml - Nl) x + b (d_j - Mj) = 0, positive root
    p, c = rho_l * (b - Ml - Nl), b * (d_j - Mj)
    disc = np.maximum(p ** 2 - 4 * rho_l ** 2 * c, 0.0)
    f3_root = (-p + np.sqrt(disc)) / (2 * rho_l ** 2)
    # f4 = 0: rho_l x (b - Nl) = b (Mj - d_j), binding only when b > Nl
    with np.errstate(divide="ignore", invalid="ignore"):
        f4_root = np.where(b > Nl, b * (Mj - d_j) / (rho_l * (b - Nl)), np.inf)
    return np.maximum(np.minimum(np.minimum(top, f3_root), f4_root), 0.0)


def trapezoid_vertices(params: StochasticParams) -> list:
    rho_l, _ = connection_density(params)
    h = (params.M_l + params.N_l) / rho_l
    return [(0.0, 0.0), (0.0, h), (float(params.M_j - params.M_l - params.N_l), h), (float(params.M_j), 0.0)]


@dataclass
class RegionMap:
    reports: list
    jamming_slope: float
    jamming_intercept: float
    curve_d_j: list = field(default_factory=list)
    curve_d_l: list = field(default_factory=list)
    trapezoid: Optional[list] = None

    @property
    def agreement(self) -> float:
        if not self.reports:
            return 1.0
        return float(np.mean([r.feasible == r.feasible_highdensity for r in self.reports]))

    def feasible_set(self, highdensity: bool = False) -> set:
        key = "feasible_highdensity" if highdensity else "feasible"
        return {(r.d_j, r.d_l) for r in self.reports if getattr(r, key)}

    def write_csv(self, path) -> None:
        cols = ("d_j", "d_l", "R_e", "R_l", "R", "f1", "f2", "f3", "f4", "feasible_exact", "feasible_highdensity")
        with open(path, "w", newline="") as fh:
            fh.write(f"# giasec region_map v{REGION_CSV_VERSION}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.reports:
                w.writerow([r.d_j, r.d_l, repr(r.R_e), repr(r.R_l), repr(r.R), repr(r.f1), repr(r.f2),
                            repr(r.f3), repr(r.f4), int(r.feasible), int(r.feasible_highdensity)])

    def curves(self) -> dict:
        return {
            "jamming_line": {"slope": self.jamming_slope, "intercept": self.jamming_intercept},
            "aligning_curve": {"d_j": self.curve_d_j, "d_l": self.curve_d_l},
            "trapezoid_vertices": self.trapezoid,
        }

    def write_curves(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.curves(), fh, indent=2)


def feasible_region(params: StochasticParams, d_j_values: Optional[Iterable[int]] = None,
                    d_l_values: Optional[Iterable[int]] = None, curve_points: int = 101) -> RegionMap:
    """Exact and high-density verdicts over a ``(d_j, d_l)`` grid.

    Defaults to the full grid ``{0..M_j} x {1..min(N_l, M_l)}``. The
    high-density verdict replaces the floors in the transmit budgets by
    their real values, which moves boundaries by at most ``2/rho_l`` in
    ``R_l``.
    """
    rho_l, rho_j = connection_density(params)
    d_j_values = range(params.M_j + 1) if d_j_values is None else d_j_values
    d_l_values = range(1, min(params.N_l, params.M_l) + 1) if d_l_values is None else d_l_values
    reports = [indicator_R(params, int(dl), int(dj)) for dj in d_j_values for dl in d_l_values]
    xs = np.linspace(0.0, params.M_j, curve_points)
    trap = trapezoid_vertices(params) if params.M_j >= params.M_l + params.N_l else None
    return RegionMap(reports, -rho_j / rho_l, params.N_e / rho_l, xs.tolist(),
                     aligning_curve(params, xs).tolist(), trap)


def trapezoid_check(M_l: int, N_l: int, M_j: int, rho_l: float, rho_j_values: Sequence[float] = (0.0, 0.5, 1.0, 4.0),
                    sample_count: int = 10_000, seed: int = 0) -> bool:
    """Sample strictly interior trapezoid points and require ``f2, f3, f4 < 0``.

    ``rho_j_values`` are multiples of ``rho_l`` at which the check is run;
    every sample is tested at each of them.
    """
    if M_j < M_l + N_l:
        raise ValueError("trapezoid property needs M_j >= M_l + N_l")
    rng = np.random.default_rng(seed)
    h = (M_l + N_l) / rho_l
    pts = np.empty((0, 2))
    while len(pts) < sample_count:
        cand = rng.uniform((0.0, 0.0), (M_j, h), size=(2 * sample_count, 2))
        inside = (cand[:, 0] > 0) & (cand[:, 1] > 0) & (cand[:, 1] < h) \
            & (cand[:, 1] < h * (M_j - cand[:, 0]) / (M_l + N_l))
        pts = np.vstack([pts, cand[inside]])
    pts = pts[:sample_count]
    stub = StochasticParams(M_l=M_l, N_l=N_l, M_j=M_j, N_e=1, d_l=1, d_j=0)
    for scale in rho_j_values:
        _, f2, f3, f4 = region_f(stub, pts[:, 0], pts[:, 1], rho_l, scale * rho_l)
        if not (np.all(f2 < 0) and np.all(f3 < 0) and np.all(f4 < 0)):
            return False
    return True
