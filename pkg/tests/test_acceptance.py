"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal
summary. The heavy ones (secrecy sweep, transitory sweep) take minutes.
"""

import math
import time
from fractions import Fraction

import numpy as np

from conftest import record
from giasec.alignment import AlignmentSet, build_alignment_set, verify_coverage
from giasec.analytics import feasible_region, interference_moments, region_f, trapezoid_check
from giasec.channel import LEGIT, NetworkConfig
from giasec.experiments import (ExperimentConfig, derive_seed, rate_slope, run_secrecy_sweep, run_transitory_sweep,
                                secrecy_curve)
from giasec.geometry import ObservationWindow, StochasticParams, in_range_interferers, sample_topology
from giasec.metrics import network_rates, sdof_counts, sdof_from_transceivers
from giasec.transceiver import case_study_channels, case_study_config, design_case_study, design_gia


def _lam(rho):
    """Density giving connection density ``rho`` at alpha=4, theta=1e-2."""
    return rho / (100 * math.pi)


def _leak(t, ch, k, j):
    return float(np.linalg.norm(t.lr_decoders[k].conj().T @ ch.get(k, j, LEGIT) @ t.precoders[j]))


# pairs each strategy forces to zero at the LRs
TARGETS = {
    "A": [(0, 1), (1, 0)],
    "C": [(k, j) for k in range(3) for j in range(3) if j != k],
    "D": [(k, j) for k in range(3) for j in range(4) if j != k],
}


def test_case_study_strategies():
    start = time.perf_counter()
    P = 100.0
    cfg = case_study_config(P)
    worst = {s: 0.0 for s in TARGETS}
    secrecy = {s: 0.0 for s in "ABCD"}
    sdof = {s: np.zeros(3, dtype=int) for s in "ABCD"}
    draws = 1000
    for n in range(draws):
        seed = derive_seed(0, n)
        ch = case_study_channels(seed, cfg)
        for s in "ABCD":
            t = design_case_study(s, ch, cfg, seed=seed)
            if s in TARGETS:
                worst[s] = max(worst[s], max(_leak(t, ch, k, j) for k, j in TARGETS[s]))
            r_l, r_e = network_rates(t, ch, cfg, [0, 1, 2], [P])
            secrecy[s] += float(np.maximum(r_l - r_e, 0.0).mean()) / draws
            sdof[s] += np.rint(sdof_from_transceivers(t, ch, cfg, links=[0, 1, 2])).astype(int)
    elapsed = time.perf_counter() - start
    residual_ok = max(worst.values()) <= 1e-10
    d_ok = np.all(sdof["D"] == draws)
    # C matches D's one secure stream on the links whose ER has two antennas
    c_ties = np.all(sdof["C"][1:] == draws)
    order_ok = secrecy["D"] >= secrecy["C"] > max(secrecy["A"], secrecy["B"])
    ok = residual_ok and d_ok and c_ties and order_ok and elapsed < 30
    record(1, ok, f"residual {max(worst.values()):.1e}, mean sdof D {(sdof['D'] / draws).tolist()}, secrecy "
                  + ", ".join(f"{s} {v:.3f}" for s, v in secrecy.items()) + f", {elapsed:.1f}s")
    assert residual_ok and d_ok and c_ties and order_ok
    assert elapsed < 30


def test_alignment_sets_always_verify():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    failures = 0
    rhos = []
    for s in range(1000):
        rho = float(rng.uniform(5, 100))
        rhos.append(rho)
        M, N = int(rng.integers(2, 17)), int(rng.integers(1, 9))
        d_l, d_j = min(int(rng.integers(1, 3)), M, N), int(rng.integers(0, 3))
        p = StochasticParams(lambda_l=_lam(rho), lambda_j=_lam(rho) * float(rng.uniform(0, 1.5)), M_l=M, N_l=N,
                             M_j=int(rng.integers(max(d_j, 1), 17)), N_e=8, d_l=d_l, d_j=d_j)
        topo = sample_topology(p, ObservationWindow(3.0, guard_width=p.cutoff_radius), s)
        cfg = NetworkConfig.from_params(p, topo)
        failures += not verify_coverage(build_alignment_set(topo, p, cfg), cfg)
    elapsed = time.perf_counter() - start
    record(2, failures == 0 and elapsed < 60,
           f"{failures} failures over 1000 topologies, rho_l in [{min(rhos):.1f}, {max(rhos):.1f}], {elapsed:.1f}s")
    assert failures == 0
    assert elapsed < 60


IA3 = NetworkConfig(M=[2, 2, 2], N_l=[2, 2, 2], N_e=[3, 2, 2], d=[1, 1, 1], P=[100.0] * 3, reference_power=100.0)
CLASSIC_IA = AlignmentSet.from_subsets({k: {(k, (k + 1) % 3)} for k in range(3)},
                                       {j: {((j + 1) % 3, j)} for j in range(3)})
FULL_IA = AlignmentSet.from_subsets({k: {(k, j) for j in range(3) if j != k} for k in range(3)}, {})


def test_alternating_solver_matches_closed_form():
    start = time.perf_counter()
    good = 0
    for s in range(100):
        ch = case_study_channels(derive_seed(3, s))
        t = design_gia(ch, CLASSIC_IA, IA3, seed=s, method="alternating")
        leak = max(_leak(t, ch, k, j) for k, j in FULL_IA.pairs)
        c = design_case_study("C", ch)
        same = np.array_equal(sdof_from_transceivers(t, ch, IA3, links=range(3)),
                              sdof_from_transceivers(c, ch, case_study_config(), links=range(3)))
        good += leak <= 1e-8 and same
    elapsed = time.perf_counter() - start
    record(3, good >= 95 and elapsed < 60, f"{good}/100 runs aligned and matched, {elapsed:.1f}s")
    assert good >= 95
    assert elapsed < 60


def _se_var(v):
    """Standard error of the sample variance."""
    m4 = np.mean((v - v.mean()) ** 4)
    return math.sqrt(max(m4 - v.var(ddof=1) ** 2, 0.0) / len(v))


IE_SETS = [
    StochasticParams(),
    StochasticParams(lambda_l=_lam(20), lambda_j=_lam(5), M_l=8, N_l=6, M_j=8, d_l=2, d_j=1),
    StochasticParams(lambda_l=_lam(6), lambda_j=_lam(30), M_j=12, d_l=1, d_j=3),
]


def test_er_interference_moments():
    start = time.perf_counter()
    zs = []
    for p in IE_SETS:
        window = ObservationWindow(1.5, guard_width=p.cutoff_radius)
        vals = np.empty(10_000)
        for s in range(len(vals)):
            topo = sample_topology(p, window, s, typical_link=True)
            hits = in_range_interferers(topo, p, topo.er_positions[0], own_transmitter=0)
            vals[s] = sum(p.d_l if j < topo.num_links else p.d_j for j in hits)
        mb = interference_moments(p)
        z_mean = abs(vals.mean() - mb.e_Ie) / (vals.std(ddof=1) / math.sqrt(len(vals)))
        z_var = abs(vals.var(ddof=1) - mb.v_Ie) / _se_var(vals)
        zs.append((z_mean, z_var))
    elapsed = time.perf_counter() - start
    ok = all(a <= 3 and b <= 3 for a, b in zs)
    record(4, ok and elapsed < 120, "z-scores " + ", ".join(f"({a:.2f}, {b:.2f})" for a, b in zs)
           + f", {elapsed:.1f}s")
    assert ok
    assert elapsed < 120


# (m_x vs rho_l): above, below, below, below, above
IL_SETS = [
    StochasticParams(),
    StochasticParams(lambda_l=_lam(16), lambda_j=_lam(4)),
    StochasticParams(lambda_l=_lam(5), lambda_j=_lam(4), M_l=4, M_j=4),
    StochasticParams(lambda_l=_lam(9), lambda_j=_lam(9), M_l=8, M_j=8),
    StochasticParams(lambda_l=_lam(25), lambda_j=_lam(10), M_l=32, M_j=32),
]


def test_lr_interference_bounds():
    start = time.perf_counter()
    lines, ok = [], True
    for p in IL_SETS:
        window = ObservationWindow(1.5)
        vals = np.empty(4000)
        for s in range(len(vals)):
            topo = sample_topology(p, window, s, typical_link=True)
            cfg = NetworkConfig.from_params(p, topo)
            aset = build_alignment_set(topo, p, cfg, receivers=[0])
            vals[s] = sdof_counts(topo, aset, p, cfg, [0])[0].I_l
        mb = interference_moments(p)
        mean, sd = vals.mean(), vals.std(ddof=1)
        ok &= mb.e_Il_low <= mean <= mb.e_Il_high and sd <= mb.s_Il_high
        lines.append(f"{mb.e_Il_low:.2f}<={mean:.2f}<={mb.e_Il_high:.2f} sd {sd:.2f}<={mb.s_Il_high:.1f}")
    elapsed = time.perf_counter() - start
    record(5, ok and elapsed < 300, "; ".join(lines) + f", {elapsed:.1f}s")
    assert ok
    assert elapsed < 300


def test_secrecy_rate_sweep():
    start = time.perf_counter()
    cfg = ExperimentConfig(kind="secrecy_sweep", params=StochasticParams(), topologies=50, channel_draws=20,
                           observation_radius=30.0, cutoff=(True,))
    res = run_secrecy_sweep(cfg)
    elapsed = time.perf_counter() - start
    curves = {s: secrecy_curve(res, s)[1] for s in cfg.strategies}
    snr = np.asarray(cfg.snr_db)
    high = snr >= 20
    order_ok = bool(np.all(curves["GIA"][high] > curves["IA"][high])
                    and np.all(curves["IA"][high] > np.maximum(curves["CJ"], curves["IAN"])[high]))
    slope = rate_slope(snr, curves["GIA"], 30.0, 60.0) / cfg.params.d_l
    slope_ok = 0.75 <= slope <= 1.05
    detail = ", ".join(f"{s} " + "/".join(f"{v:.2f}" for v in c) for s, c in curves.items())
    record(6, order_ok and slope_ok and elapsed < 1800 and not res.flagged,
           f"slope {slope:.3f}, skipped {res.skipped}/{res.requested}, {detail}, {elapsed:.0f}s")
    assert order_ok and slope_ok
    assert not res.flagged
    assert elapsed < 1800


def test_transitory_sweep():
    start = time.perf_counter()
    p = StochasticParams(M_l=4, N_l=4, M_j=4, N_e=4, d_l=1, d_j=1)
    cfg = ExperimentConfig(kind="transitory_sweep", params=p, densities=(0.02, 0.08, 0.32), topologies=10,
                           observation_radius=None, links_per_topology=100)
    res = run_transitory_sweep(cfg)
    elapsed = time.perf_counter() - start
    dense = [r for r in res.rows if r["density"] == 0.32]
    low = [r["mean_sdof"] for r in dense if r["R"] < -0.2]
    up = [r["mean_sdof"] for r in dense if r["R"] > 0.2]
    ends_ok = bool(low and up and max(low) <= 0.05 * p.d_l and min(up) >= 0.95 * p.d_l)
    widths = res.extra["widths"]
    ratio = widths[0.02] / widths[0.32]
    ratio_ok = 2 <= ratio <= 8
    record(7, ends_ok and ratio_ok and elapsed < 600,
           f"dense sdof max {max(low, default=math.nan):.3f} below, min {min(up, default=math.nan):.3f} above, "
           f"widths {', '.join(f'{k}: {v:.3f}' for k, v in widths.items())}, ratio {ratio:.2f}, {elapsed:.0f}s")
    assert ends_ok and ratio_ok
    assert elapsed < 600


def test_trapezoid_region():
    start = time.perf_counter()
    cases = [(8, 8, 40, 10.0), (8, 8, 16, 50.0), (4, 6, 10, 3.0), (16, 16, 64, 120.0), (2, 3, 5, 1.0)]
    checks = [trapezoid_check(M_l, N_l, M_j, rho, sample_count=10_000, seed=i)
              for i, (M_l, N_l, M_j, rho) in enumerate(cases)]
    exact = []
    for M_l, N_l, M_j, rho in cases:
        p = StochasticParams(M_l=M_l, N_l=N_l, M_j=M_j)
        for rho_j in (Fraction(0), Fraction(1, 3), Fraction(7, 2)):
            _, _, f3, f4 = region_f(p, p.M_j, 0, Fraction(rho).limit_denominator(), rho_j)
            exact.append(f3 == 0 and f4 == 0)
    elapsed = time.perf_counter() - start
    ok = all(checks) and all(exact)
    record(8, ok and elapsed < 10, f"{sum(checks)}/{len(checks)} trapezoids, {sum(exact)}/{len(exact)} exact "
                                   f"zeros, {elapsed:.1f}s")
    assert ok
    assert elapsed < 10


def test_high_density_consistency():
    start = time.perf_counter()
    sets = [
        StochasticParams(lambda_l=0.2, lambda_j=0.2, M_l=32, N_l=32, M_j=32, N_e=64),
        StochasticParams(lambda_l=0.16, lambda_j=0.05, M_l=30, N_l=30, M_j=40, N_e=200),
        StochasticParams(lambda_l=0.3, lambda_j=0.1, M_l=32, N_l=30, M_j=60, N_e=30),
    ]
    agreements = []
    for p in sets:
        assert 100 * math.pi * p.lambda_l >= 50
        agreements.append(feasible_region(p, range(0, 30), range(1, 31)).agreement)
    elapsed = time.perf_counter() - start
    ok = min(agreements) > 0.95
    record(9, ok and elapsed < 10, "agreement " + ", ".join(f"{a:.3f}" for a in agreements) + f", {elapsed:.1f}s")
    assert ok
    assert elapsed < 10
