"""Config-driven numerical studies.

Every study reads an :class:`ExperimentConfig`, splits its work into
independently seeded cells, and aggregates them in cell order, so results
do not depend on how many worker processes ran the cells. Outputs are CSV
files with a versioned header line, optional JSON curve descriptors, and a
``manifest.json`` with the config hash, seeds and library versions.

Config files are flat YAML mappings. Keys:

=====================  ==========================================================
kind                   case_study | secrecy_sweep | transitory_sweep |
                       tradeoff_sweep | region_map
alpha, theta           pathloss exponent and amplitude cutoff
lambda_l, lambda_j     LT and LJ densities
M_l, N_l, M_j, N_e     antenna counts
d_l, d_j               streams per LT and per LJ
lr_offset_kind/radius  LR offset distribution (fixed_norm | uniform_disc)
er_offset_kind/radius  ER offset distribution
snr_db                 SNR grid in dB (secrecy sweep)
power_db               transmit power for the case study
seeds                  master seeds; each expands into ``topologies`` cells
topologies             topologies per seed
channel_draws          channel draws per topology (case study: total draws)
strategies             subset of GIA, CJ, IA, IAN
cutoff                 list of booleans; false adds beyond-cutoff interference
observation_radius     radius of the disc whose links feed statistics
links_per_topology     alternative to observation_radius: expected observed LTs
guard_width            padding beyond the observation disc (null: 2 r_c)
densities              lambda values (lambda_l = lambda_j) for the transitory sweep
R_range                indicator interval covered by the transitory sweep
transitory_points      N_l values per density in the transitory sweep
lambda_l_values        LT densities of the tradeoff sweep
lambda_total           lambda_l + lambda_j in the tradeoff sweep
tradeoff_candidates    predicted-best stream pairs simulated per density
d_j_values, d_l_values region-map grid (null: full grid)
curve_points           aligning-curve samples in the region map
output_dir             default output directory
=====================  ==========================================================
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy
import yaml

from . import __version__
from .alignment import AlignmentSet, build_alignment_set, receiver_phase, transmitter_phase
from .analytics import feasible_region, indicator_R
from .channel import NetworkConfig, sample_channels
from .geometry import (ObservationWindow, OffsetDistribution, StochasticParams, neighbours_within,
                       sample_topology, stream_rng)
from .metrics import network_rates, out_of_range_interference, sdof_counts, sdof_from_transceivers
from .transceiver import (NonConvergence, case_study_channels, case_study_config, design_baseline,
                          design_case_study, design_gia, ia_alignment_set)

KINDS = ("case_study", "secrecy_sweep", "transitory_sweep", "tradeoff_sweep", "region_map")
STRATEGIES = ("GIA", "CJ", "IA", "IAN")
CSV_VERSION = 1
# fraction of skipped topologies above which a sweep is flagged
SKIP_FLAG = 0.05

_STREAM_NO_CUTOFF = 30
_PARAM_KEYS = ("alpha", "theta", "lambda_l", "lambda_j", "M_l", "N_l", "M_j", "N_e", "d_l", "d_j")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: StochasticParams = field(default_factory=StochasticParams)
    snr_db: tuple = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    power_db: float = 20.0
    seeds: tuple = (0,)
    topologies: int = 1
    channel_draws: int = 1
    strategies: tuple = STRATEGIES
    cutoff: tuple = (True,)
    observation_radius: Optional[float] = 30.0
    links_per_topology: Optional[float] = None
    guard_width: Optional[float] = None
    densities: tuple = (0.02, 0.08, 0.32)
    R_range: tuple = (-0.6, 0.6)
    transitory_points: int = 41
    lambda_l_values: tuple = (0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1, 0.11, 0.12)
    lambda_total: float = 0.13
    tradeoff_candidates: int = 3
    d_j_values: Optional[tuple] = None
    d_l_values: Optional[tuple] = None
    curve_points: int = 101
    output_dir: str = "results"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        for name in ("snr_db", "seeds", "strategies", "cutoff", "densities", "R_range", "lambda_l_values",
                     "d_j_values", "d_l_values"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))
        for name in ("snr_db", "seeds", "strategies", "cutoff", "densities", "lambda_l_values"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.topologies < 1 or self.channel_draws < 1:
            raise ValueError("topologies and channel_draws must be at least 1")
        bad = set(self.strategies) - set(STRATEGIES)
        if bad:
            raise ValueError(f"unknown strategies {sorted(bad)}")
        if self.observation_radius is None and self.links_per_topology is None:
            raise ValueError("need observation_radius or links_per_topology")
        if len(self.R_range) != 2 or self.R_range[0] >= self.R_range[1]:
            raise ValueError("R_range must be an increasing pair")

    # -- flat serialization
    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        p = self.params
        for key in _PARAM_KEYS:
            out[key] = getattr(p, key)
        for side in ("lr", "er"):
            off = getattr(p, f"{side}_offset")
            out[f"{side}_offset_kind"], out[f"{side}_offset_radius"] = off.kind, off.radius
        for f in fields(self):
            if f.name in ("kind", "params"):
                continue
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        own = {f.name for f in fields(cls)} - {"params"}
        pkw = {key: data.pop(key) for key in _PARAM_KEYS if key in data}
        for side in ("lr", "er"):
            kind, radius = data.pop(f"{side}_offset_kind", None), data.pop(f"{side}_offset_radius", None)
            if kind is not None or radius is not None:
                default = getattr(StochasticParams(), f"{side}_offset")
                pkw[f"{side}_offset"] = OffsetDistribution(kind or default.kind,
                                                           default.radius if radius is None else float(radius))
        unknown = set(data) - own
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        if "kind" not in data:
            raise ValueError("config needs a 'kind'")
        return cls(params=StochasticParams(**pkw), **data)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError("config file must hold a flat mapping")
        return cls.from_dict(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def window(self, lambda_l: Optional[float] = None) -> ObservationWindow:
        if self.links_per_topology is not None:
            lam = self.params.lambda_l if lambda_l is None else lambda_l
            return ObservationWindow(math.sqrt(self.links_per_topology / (math.pi * lam)), self.guard_width)
        return ObservationWindow(self.observation_radius, self.guard_width)


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed for a cell identified by ``keys``."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _map(fn: Callable, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


@dataclass
class StudyResult:
    """Rows of one study plus bookkeeping for the manifest."""

    kind: str
    columns: tuple
    rows: list
    requested: int = 0
    skipped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return self.requested > 0 and self.skipped / self.requested >= SKIP_FLAG

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# giasec {self.kind} v{CSV_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def read_csv(path) -> list[dict]:
    """Rows of a study CSV as strings keyed by column."""
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("# giasec "):
            raise ValueError("missing giasec schema header")
        return list(csv.DictReader(fh))


# -------------------------------------------------------------- case study

def run_case_study(seed: int = 0, draws: int = 1000, power: float = 100.0) -> StudyResult:
    """Mean per-link rates and counted sDoF of strategies A-D.

    Each draw samples fresh channels; the table averages over the three
    links and all draws.
    """
    config = case_study_config(power)
    links = [0, 1, 2]
    acc = {s: np.zeros(4) for s in "ABCD"}
    for n in range(draws):
        ch_seed = derive_seed(seed, n)
        channels = case_study_channels(ch_seed, config)
        for s in "ABCD":
            tset = design_case_study(s, channels, config, seed=ch_seed)
            r_l, r_e = network_rates(tset, channels, config, links, [power])
            sdof = sdof_from_transceivers(tset, channels, config, tol=1e-8, links=links)
            acc[s] += [r_l.mean(), r_e.mean(), np.maximum(r_l - r_e, 0.0).mean(), sdof.mean()]
    rows = [{"strategy": s, "r_l": v[0] / draws, "r_e": v[1] / draws, "secrecy_rate": v[2] / draws,
             "sdof": v[3] / draws} for s, v in acc.items()]
    return StudyResult("case_study", ("strategy", "r_l", "r_e", "secrecy_rate", "sdof"), rows, requested=draws)


# ----------------------------------------------------------- secrecy sweep

def _active_mask(tset, n_tx: int) -> np.ndarray:
    return np.array([tset.is_active(j) for j in range(n_tx)], dtype=bool)


def _secrecy_cell(task) -> dict:
    cfg, seed, t = task
    params = cfg.params
    topo_seed = derive_seed(seed, t)
    topo = sample_topology(params, cfg.window(), topo_seed)
    config = NetworkConfig.from_params(params, topo, 1.0)
    links = topo.observed_links()
    keys = [(s, c) for s in cfg.strategies for c in cfg.cutoff]
    sums = {key: np.zeros(len(cfg.snr_db)) for key in keys}
    out = {"sums": sums, "links": 0, "skipped": False}
    if len(links) == 0:
        return out
    powers = 10.0 ** (np.asarray(cfg.snr_db, dtype=float) / 10.0)
    aset = build_alignment_set(topo, params, config, receivers=links) if "GIA" in cfg.strategies else None
    ia_set = (ia_alignment_set(topo, params, config, receivers=links)
              if {"IA", "IAN"} & set(cfg.strategies) else None)
    try:
        for c in range(cfg.channel_draws):
            ch_seed = derive_seed(topo_seed, c)
            channels = sample_channels(topo, config, params, ch_seed, receivers=links)
            designs = {}
            if "GIA" in cfg.strategies:
                designs["GIA"] = design_gia(channels, aset, config, seed=ch_seed)
            if ia_set is not None:
                ia = design_baseline("IA", channels, topo, params, config, seed=ch_seed, aset=ia_set)
                designs["IA"] = ia
                designs["IAN"] = design_baseline("IAN", channels, topo, params, config, seed=ch_seed, base=ia)
            if "CJ" in cfg.strategies:
                designs["CJ"] = design_baseline("CJ", channels, topo, params, config, seed=ch_seed)
            for s in cfg.strategies:
                tset = designs[s]
                for cut in cfg.cutoff:
                    extra = None
                    if not cut:
                        rng = stream_rng(ch_seed, _STREAM_NO_CUTOFF)
                        active = _active_mask(tset, topo.num_transmitters)
                        extra = {int(k): out_of_range_interference(topo, params, config, int(k), active, rng)
                                 for k in links}
                    r_l, r_e = network_rates(tset, channels, config, links, powers, extra)
                    sums[(s, cut)] += np.maximum(r_l - r_e, 0.0).sum(axis=0)
    except NonConvergence:
        return {"sums": {key: np.zeros(len(cfg.snr_db)) for key in keys}, "links": 0, "skipped": True}
    out["links"] = len(links) * cfg.channel_draws
    return out


def run_secrecy_sweep(cfg: ExperimentConfig, workers: int = 1) -> StudyResult:
    """Mean secrecy rate per strategy, SNR point and cutoff setting.

    The mean pools every observed link over all topologies and channel
    draws. A topology on which any design fails to converge is dropped for
    all strategies and counted as skipped.
    """
    if cfg.kind != "secrecy_sweep":
        raise ValueError("config kind must be secrecy_sweep")
    tasks = [(cfg, s, t) for s in cfg.seeds for t in range(cfg.topologies)]
    cells = _map(_secrecy_cell, tasks, workers)
    total = sum(c["links"] for c in cells)
    skipped = sum(c["skipped"] for c in cells)
    rows = []
    for s in cfg.strategies:
        for cut in cfg.cutoff:
            acc = np.zeros(len(cfg.snr_db))
            for c in cells:
                acc += c["sums"][(s, cut)]
            mean = acc / total if total else np.full(len(cfg.snr_db), math.nan)
            for snr, value in zip(cfg.snr_db, mean):
                rows.append({"strategy": s, "snr_db": float(snr), "cutoff": bool(cut), "mean_secrecy_rate": value,
                             "samples": total})
    return StudyResult("secrecy_sweep", ("strategy", "snr_db", "cutoff", "mean_secrecy_rate", "samples"), rows,
                       requested=len(tasks), skipped=skipped)


def secrecy_curve(result: StudyResult, strategy: str, cutoff: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``(snr_db, mean rate)`` arrays of one strategy from a sweep result."""
    pts = [(r["snr_db"], r["mean_secrecy_rate"]) for r in result.rows
           if r["strategy"] == strategy and r["cutoff"] == cutoff]
    snr, rate = zip(*pts)
    return np.asarray(snr), np.asarray(rate)


def rate_slope(snr_db: np.ndarray, rate: np.ndarray, lo: float, hi: float) -> float:
    """Rate increase per 3 dB (one bit per stream at full sDoF) between ``lo`` and ``hi`` dB."""
    r_lo, r_hi = np.interp([lo, hi], snr_db, rate)
    return float((r_hi - r_lo) / math.log2(10.0 ** ((hi - lo) / 10.0)))


# -------------------------------------------------------- transitory sweep

def transitory_grid(params: StochasticParams, R_range: Sequence[float], points: int) -> list[tuple[int, float]]:
    """``(N_l, R)`` pairs spanning ``R_range`` with about ``points`` values.

    ``R`` grows with ``N_l`` until it saturates at the ER term ``R_e``; the
    grid is the integer range between the bracketing values, thinned
    evenly. It stops early at saturation, so the upper end of ``R_range``
    may not be reached.
    """
    lo_r, hi_r = R_range
    rep = lambda n: indicator_R(params.with_(N_l=n))
    done = lambda n: rep(n).R > hi_r or rep(n).R_l >= rep(n).R_e
    start = max(params.d_l, 1)
    step = 1
    while rep(start).R < lo_r and not done(start):
        start += step
        step *= 2
    while start > max(params.d_l, 1) and rep(start - 1).R >= lo_r:
        start -= 1
    stop, step = start, 1
    while not done(stop):
        stop += step
        step *= 2
    while stop > start and done(stop - 1):
        stop -= 1
    values = np.unique(np.round(np.linspace(start, stop, points)).astype(int))
    return [(int(v), rep(int(v)).R) for v in values]


def _transitory_cell(task) -> np.ndarray:
    cfg, lam, grid, seed, t = task
    params = cfg.params.with_(lambda_l=lam, lambda_j=lam)
    topo = sample_topology(params, cfg.window(lam), derive_seed(seed, t, int(round(lam * 1e6))))
    links = topo.observed_links()
    sums = np.zeros((len(grid), 2))
    if len(links) == 0:
        return sums
    base = NetworkConfig.from_params(params.with_(N_l=grid[0][0]), topo)
    hoods = neighbours_within(topo.tx_positions, topo.lr_positions[links], params)
    txs = sorted(set(int(j) for idx, _ in hoods for j in idx))
    # the transmitter pass ignores N_l, so one pass serves the whole grid
    tx = transmitter_phase(topo, params, base, txs)
    for i, (n_l, _) in enumerate(grid):
        p = params.with_(N_l=n_l)
        config = NetworkConfig.from_params(p, topo)
        rx, exhausted = receiver_phase(topo, p, config, tx, links)
        aset = AlignmentSet.from_subsets(rx, tx, exhausted)
        counts = sdof_counts(topo, aset, p, config, links)
        sums[i] = sum(m.sdof for m in counts), len(counts)
    return sums


def run_transitory_sweep(cfg: ExperimentConfig, workers: int = 1) -> StudyResult:
    """Counted mean sDoF against the exact indicator ``R`` for each density.

    ``lambda_l = lambda_j`` takes each value in ``cfg.densities`` and ``R``
    is moved by sweeping ``N_l`` with every other antenna count fixed.
    """
    if cfg.kind != "transitory_sweep":
        raise ValueError("config kind must be transitory_sweep")
    grids = {lam: transitory_grid(cfg.params.with_(lambda_l=lam, lambda_j=lam), cfg.R_range, cfg.transitory_points)
             for lam in cfg.densities}
    tasks = [(cfg, lam, grids[lam], s, t) for lam in cfg.densities for s in cfg.seeds for t in range(cfg.topologies)]
    cells = _map(_transitory_cell, tasks, workers)
    rows, widths = [], {}
    for lam in cfg.densities:
        acc = np.zeros((len(grids[lam]), 2))
        for task, c in zip(tasks, cells):
            if task[1] == lam:
                acc += c
        for (n_l, R), (total, count) in zip(grids[lam], acc):
            rows.append({"density": lam, "N_l": n_l, "R": R, "mean_sdof": float(total / count) if count else math.nan,
                         "samples": int(count)})
        R_vals = np.array([r["R"] for r in rows if r["density"] == lam])
        sdof = np.array([r["mean_sdof"] for r in rows if r["density"] == lam])
        widths[lam] = transitory_width(R_vals, sdof / cfg.params.d_l)
    return StudyResult("transitory_sweep", ("density", "N_l", "R", "mean_sdof", "samples"), rows,
                       requested=len(tasks), extra={"widths": widths})


def transitory_width(R: np.ndarray, frac: np.ndarray, lo: float = 0.1, hi: float = 0.9) -> float:
    """Length of the ``R`` interval over which ``frac`` climbs from ``lo`` to ``hi``.

    Crossings are located by linear interpolation on the running maximum of
    ``frac``, which is the curve itself when it is monotone.
    """
    order = np.argsort(R)
    R, frac = np.asarray(R)[order], np.maximum.accumulate(np.asarray(frac)[order])
    if frac[0] > lo or frac[-1] < hi:
        return math.nan

    def crossing(level):
        i = int(np.argmax(frac >= level))
        if i == 0:
            return float(R[0])
        x0, x1, y0, y1 = R[i - 1], R[i], frac[i - 1], frac[i]
        return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0)) if y1 > y0 else float(x1)

    return crossing(hi) - crossing(lo)


# ---------------------------------------------------------- tradeoff sweep

def _stream_candidates(params: StochasticParams, top: int) -> list[tuple[int, int, float]]:
    """Best ``top`` ``(d_j, d_l)`` pairs by predicted sDoF, then by ``R``."""
    scored = []
    for d_l in range(1, min(params.M_l, params.N_l) + 1):
        for d_j in range(0, params.M_j + 1):
            rep = indicator_R(params, d_l, d_j)
            scored.append((d_l * (rep.R > 0), rep.R, d_j, d_l))
    scored.sort(key=lambda s: (-s[0], -s[1], s[2], s[3]))
    return [(d_j, d_l, pred) for pred, _, d_j, d_l in scored[:top]]


def _tradeoff_cell(task) -> list[tuple[float, float]]:
    cfg, lam_l, candidates, seed, t = task
    params = cfg.params.with_(lambda_l=lam_l, lambda_j=cfg.lambda_total - lam_l)
    topo = sample_topology(params, cfg.window(lam_l), derive_seed(seed, t, int(round(lam_l * 1e6))))
    links = topo.observed_links()
    out = []
    for d_j, d_l, _ in candidates:
        p = params.with_(d_j=d_j, d_l=d_l)
        if len(links) == 0:
            out.append((0.0, 0))
            continue
        config = NetworkConfig.from_params(p, topo)
        aset = build_alignment_set(topo, p, config, receivers=links)
        counts = sdof_counts(topo, aset, p, config, links)
        out.append((float(sum(m.sdof for m in counts)), len(counts)))
    return out


def run_tradeoff_sweep(cfg: ExperimentConfig, workers: int = 1) -> StudyResult:
    """Best stream allocation and its sDoF per node and per unit area.

    For each ``lambda_l`` (with ``lambda_j = lambda_total - lambda_l``) every
    ``(d_j, d_l)`` pair is ranked by predicted sDoF; the top candidates are
    simulated by dimension counting and the best simulated one is kept.
    """
    if cfg.kind != "tradeoff_sweep":
        raise ValueError("config kind must be tradeoff_sweep")
    cands = {}
    for lam in cfg.lambda_l_values:
        if not 0 < lam < cfg.lambda_total:
            raise ValueError("each lambda_l must lie in (0, lambda_total)")
        cands[lam] = _stream_candidates(cfg.params.with_(lambda_l=lam, lambda_j=cfg.lambda_total - lam),
                                        cfg.tradeoff_candidates)
    tasks = [(cfg, lam, cands[lam], s, t) for lam in cfg.lambda_l_values for s in cfg.seeds
             for t in range(cfg.topologies)]
    cells = _map(_tradeoff_cell, tasks, workers)
    rows = []
    for lam in cfg.lambda_l_values:
        acc = np.zeros((len(cands[lam]), 2))
        for task, c in zip(tasks, cells):
            if task[1] == lam:
                acc += np.asarray(c, dtype=float)
        means = np.where(acc[:, 1] > 0, acc[:, 0] / np.maximum(acc[:, 1], 1), 0.0)
        best = int(np.argmax(means))
        d_j, d_l, pred = cands[lam][best]
        rows.append({"lambda_l": lam, "best_d_j": d_j, "best_d_l": d_l, "predicted_sdof": float(pred),
                     "sdof_per_node": float(means[best]), "sdof_per_area": float(means[best] * lam)})
    return StudyResult("tradeoff_sweep", ("lambda_l", "best_d_j", "best_d_l", "predicted_sdof", "sdof_per_node",
                                          "sdof_per_area"), rows, requested=len(tasks))


# --------------------------------------------------------------- region map

def run_region_map(cfg: ExperimentConfig):
    """Feasible-region map of ``cfg.params``; see :func:`giasec.analytics.feasible_region`."""
    if cfg.kind != "region_map":
        raise ValueError("config kind must be region_map")
    return feasible_region(cfg.params, cfg.d_j_values, cfg.d_l_values, cfg.curve_points)


# ------------------------------------------------------------------ output

def versions() -> dict:
    return {"giasec": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pyyaml": yaml.__version__, "python": platform.python_version()}


def write_manifest(out_dir, cfg: ExperimentConfig, outputs: Sequence[str], result: Optional[StudyResult] = None,
                   extra: Optional[dict] = None) -> Path:
    doc = {
        "kind": cfg.kind,
        "config_sha256": cfg.sha256(),
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "versions": versions(),
        "outputs": list(outputs),
    }
    if result is not None:
        doc.update({"requested_cells": result.requested, "skipped_cells": result.skipped,
                    "flagged": result.flagged})
    if extra:
        doc.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def run(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> dict:
    """Run the study named by ``cfg.kind`` and write its files into ``out_dir``."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs, extra = [], {}
    result = None
    if cfg.kind == "region_map":
        rmap = run_region_map(cfg)
        rmap.write_csv(out / "region_map.csv")
        rmap.write_curves(out / "curves.json")
        outputs = ["region_map.csv", "curves.json"]
        extra["agreement"] = rmap.agreement
    else:
        if cfg.kind == "case_study":
            seed = cfg.seeds[0]
            result = run_case_study(seed, cfg.channel_draws, 10.0 ** (cfg.power_db / 10.0))
        elif cfg.kind == "secrecy_sweep":
            result = run_secrecy_sweep(cfg, workers)
        elif cfg.kind == "transitory_sweep":
            result = run_transitory_sweep(cfg, workers)
            extra["transitory_widths"] = {str(k): v for k, v in result.extra["widths"].items()}
        else:
            result = run_tradeoff_sweep(cfg, workers)
        name = f"{cfg.kind}.csv"
        (out / name).write_text(result.to_csv())
        outputs = [name]
    if cfg.kind == "transitory_sweep":
        (out / "curves.json").write_text(json.dumps(extra["transitory_widths"], indent=2, sort_keys=True) + "\n")
        outputs.append("curves.json")
    write_manifest(out, cfg, outputs, result, extra)
    return {"out_dir": str(out), "outputs": outputs, "result": result}
