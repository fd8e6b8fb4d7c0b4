"""Secrecy rates and dimension counting.

Rates follow the linear-receiver log-determinant expression with
interference-plus-noise whitening; ERs use MMSE decoders. Secure degrees
of freedom come from counting interference-free dimensions at each LR and
ER. The count needs only the topology and the alignment set, not the
channel matrices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .alignment import AlignmentSet
from .channel import EAVES, LEGIT, ChannelSet, NetworkConfig, crandn
from .geometry import NetworkTopology, StochasticParams, neighbours_within, stream_rng

CSV_VERSION = 1


@dataclass
class LinkMetrics:
    link: int
    S_l: int
    S_e: int
    sdof: int
    I_l: int
    I_e: int
    epsilon: int
    exhausted: bool = False
    r_l: float = math.nan
    r_e: float = math.nan
    secrecy_rate: float = math.nan


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite channel or transceiver entries")


def _orth(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of ``u``."""
    if u.size == 0:
        return u
    q, s, _ = np.linalg.svd(u, full_matrices=False)
    return q[:, s > 1e-12 * max(s[0], 1e-300)] if s[0] > 0 else q[:, :0]


def link_rate(decoder: np.ndarray, desired_channel: np.ndarray, precoder: np.ndarray, power: float,
              interference: Iterable = ()) -> float:
    """Rate ``log2 det(Q + S S^H) - log2 det(Q)`` of one link in bits/s/Hz.

    Parameters
    ----------
    decoder : (N, d) array
    desired_channel : (N, M) array
    precoder : (M, d) array
    power : float
        Total transmit power, split evenly over the ``d`` streams.
    interference : iterable of (channel, precoder, power)
        Interfering transmitters as seen by this receiver.

    Notes
    -----
    ``Q = U^H U + sum_j (P_j/d_j) U^H H_j V_j V_j^H H_j^H U``. The value
    depends on ``U`` only through its column space, so decoders are
    orthonormalized first.
    """
    interference = list(interference)
    _check_finite(decoder, desired_channel, precoder, *[a for t in interference for a in t[:2]])
    u = _orth(np.asarray(decoder))
    d = precoder.shape[1]
    if u.shape[1] == 0 or d == 0:
        return 0.0
    q = np.eye(u.shape[1], dtype=complex)
    for h, v, p in interference:
        if v.shape[1] == 0:
            continue
        g = u.conj().T @ h @ v
        q += (p / v.shape[1]) * (g @ g.conj().T)
    s = math.sqrt(power / d) * (u.conj().T @ desired_channel @ precoder)
    _, ld_total = np.linalg.slogdet(q + s @ s.conj().T)
    _, ld_noise = np.linalg.slogdet(q)
    return max(float(ld_total - ld_noise) / math.log(2.0), 0.0)


def secrecy_rate(r_l: float, r_e: float) -> float:
    """Single-draw secrecy rate ``[r_l - r_e]^+``."""
    if not (math.isfinite(r_l) and math.isfinite(r_e)):
        raise ValueError("rates must be finite")
    return max(r_l - r_e, 0.0)


def monte_carlo_secrecy(link_fn: Callable, n_draws: int, seed: int) -> float:
    """Average ``[r_l - r_e]^+`` over channel draws.

    ``link_fn(rng)`` draws one channel realization and returns ``(r_l, r_e)``.
    """
    if n_draws < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    return float(np.mean([secrecy_rate(*link_fn(rng)) for _ in range(n_draws)]))


# ------------------------------------------------------------- bulk rates

def _gram(g: np.ndarray, w: float) -> np.ndarray:
    return w * (g @ g.conj().T)


def _logdet_curve(eig: np.ndarray, powers: np.ndarray) -> np.ndarray:
    eig = np.clip(eig, 0.0, None)
    return np.log2(1.0 + np.outer(powers, eig)).sum(axis=1)


def _eig_rate(signal: np.ndarray, interf: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """``log2det(I + P(A+B)) - log2det(I + P B)`` for every power ``P``."""
    return np.maximum(_logdet_curve(np.linalg.eigvalsh(signal + interf), powers)
                      - _logdet_curve(np.linalg.eigvalsh(interf), powers), 0.0)


def out_of_range_interference(topology: NetworkTopology, params: StochasticParams, config: NetworkConfig,
                              k: int, active: np.ndarray, rng: np.random.Generator) -> tuple:
    """Covariances added by transmitters beyond the cutoff, for link ``k``.

    Those links are invisible to every design step, so ``H V`` is an
    i.i.d. CN(0, 1) block scaled by the uncut pathloss. After an
    orthonormal LR decoder the block stays i.i.d., so both covariances are
    drawn directly. Returned in units of the reference power:
    ``(d_k x d_k at the LR output, N_e x N_e at the ER input)``.
    """
    scale = config.P / config.reference_power
    out = []
    for pos, rows in ((topology.lr_positions[k], int(config.d[k])), (topology.er_positions[k], int(config.N_e[k]))):
        dist = np.linalg.norm(topology.tx_positions - pos, axis=1)
        far = ~(dist ** (-params.alpha / 2.0) >= params.theta) & active
        far[k] = False
        idx = np.flatnonzero(far)
        dj = config.d[idx]
        col_scale = np.repeat(np.sqrt(scale[idx] / np.maximum(dj, 1)) * dist[idx] ** (-params.alpha / 2.0), dj)
        g = crandn(rng, (rows, int(col_scale.size))) * col_scale
        out.append(g @ g.conj().T)
    return tuple(out)


def _stacked_gram(channels: ChannelSet, k: int, side: str, sources: list, precoders: dict, weights,
                  left: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """``sum_j w_j (L H_kj V_j)(L H_kj V_j)^H`` with ``L = left^H`` if given, batched by shape."""
    total = None
    by_shape = {}
    for j in sources:
        by_shape.setdefault(precoders[j].shape, []).append(j)
    for _, js in by_shape.items():
        H = np.stack([channels.get(k, j, side) for j in js])
        V = np.stack([precoders[j] for j in js])
        g = H @ V if left is None else left.conj().T @ H @ V
        g = g * np.sqrt(np.asarray([weights[j] / precoders[j].shape[1] for j in js]))[:, None, None]
        flat = g.transpose(1, 0, 2).reshape(g.shape[1], -1)
        part = flat @ flat.conj().T
        total = part if total is None else total + part
    return total


def network_rates(tset, channels: ChannelSet, config: NetworkConfig, links: Sequence[int],
                  powers: Sequence[float], extra: Optional[dict] = None) -> tuple[np.ndarray, np.ndarray]:
    """LR and ER rates of ``links`` for each reference power in ``powers``.

    Power ratios between nodes are taken from ``config``. The ER rate uses
    its MMSE decoder at every power, which reduces to
    ``log2det(R + P_k/d_k G G^H) - log2det(R)`` for interference-plus-noise
    covariance ``R``. One eigendecomposition per receiver covers the whole
    power grid. ``extra`` maps a link to additional ``(lr_cov, er_cov)``
    interference (see :func:`out_of_range_interference`).

    Returns
    -------
    r_l, r_e : (len(links), len(powers)) arrays
    """
    powers = np.asarray(powers, dtype=float)
    scale = config.P / config.reference_power
    r_l = np.zeros((len(links), len(powers)))
    r_e = np.zeros_like(r_l)
    extra = extra or {}
    active = {j for j, v in tset.precoders.items() if v.shape[1] > 0 and np.any(v)}
    for row, k in enumerate(links):
        if k not in active:
            continue
        v_k = tset.precoders[k]
        d_k = v_k.shape[1]
        u = _orth(tset.lr_decoders[k])
        add_l, add_e = extra.get(k, (None, None))
        for side, left, add, out in ((LEGIT, u, add_l, r_l), (EAVES, None, add_e, r_e)):
            h = channels.get(k, k, side)
            g = h @ v_k if left is None else left.conj().T @ h @ v_k
            sig = _gram(g, scale[k] / d_k)
            sources = [j for j in channels.transmitters_of(k, side) if j != k and j in active]
            itf = _stacked_gram(channels, k, side, sources, tset.precoders, scale, left) if sources else None
            if itf is None:
                itf = np.zeros_like(sig)
            if add is not None:
                itf = itf + add
            out[row] = _eig_rate(sig, itf, powers)
    return r_l, r_e


# --------------------------------------------------------------- counting

def count_dimensions(d_l: int, N_e: int, unaligned: int, I_e: int) -> tuple[int, int, int]:
    """``(S_l, S_e, sdof)`` from unaligned LR streams and total ER streams."""
    s_l = max(d_l - unaligned, 0)
    s_e = min(d_l, max(N_e - I_e, 0))
    return s_l, s_e, max(s_l - s_e, 0)


def sdof_counts(topology: NetworkTopology, aset: AlignmentSet, params: StochasticParams, config: NetworkConfig,
                links: Optional[Iterable[int]] = None) -> list[LinkMetrics]:
    """Per-link dimension counts for an alignment set on a topology.

    ``S_l`` is computed twice: once directly from the in-range streams left
    out of the alignment set, once as ``min{d, [N_l - I_l - eps]^+}``,
    where ``I_l`` counts in-range streams whose transmitter did not select
    the LR and ``eps`` is the LR's unused receive budget. The two must
    agree exactly.

    ``epsilon`` lies in ``[0, max(d) - 1]`` unless the LR ran out of
    in-range candidates (``exhausted``), in which case it can be larger.
    """
    links = np.arange(topology.num_links) if links is None else np.asarray(list(links), dtype=int)
    tx_selected = set()
    for sub in aset.tx_subsets.values():
        tx_selected.update(sub)
    d = config.d
    lr_hoods = neighbours_within(topology.tx_positions, topology.lr_positions[links], params)
    er_hoods = neighbours_within(topology.tx_positions, topology.er_positions[links], params)
    out = []
    for k, (lr_tx, _), (er_tx, _) in zip(links, lr_hoods, er_hoods):
        k = int(k)
        d_k = int(d[k])
        unaligned = I_l = 0
        for j in lr_tx:
            j = int(j)
            if j == k or d[j] == 0:
                continue
            if (k, j) not in aset.pairs:
                unaligned += int(d[j])
            if (k, j) not in tx_selected:
                I_l += int(d[j])
        I_e = int(sum(int(d[j]) for j in er_tx if j != k))
        rx_load = int(sum(int(d[j]) for _, j in aset.rx_subsets.get(k, ())))
        eps = int(config.N_l[k]) - d_k - rx_load
        s_l, s_e, sdof = count_dimensions(d_k, int(config.N_e[k]), unaligned, I_e)
        s_l_alt = min(d_k, max(int(config.N_l[k]) - I_l - eps, 0))
        if s_l_alt != s_l:
            raise AssertionError(f"dimension counts disagree at link {k}: {s_l} vs {s_l_alt}")
        out.append(LinkMetrics(k, s_l, s_e, sdof, I_l, I_e, eps, k in aset.exhausted))
    return out


def sdof_from_transceivers(tset, channels: ChannelSet, config: NetworkConfig, tol: float = 1e-8,
                           links: Optional[Iterable[int]] = None) -> np.ndarray:
    """Counted sDoF per link using the pairs the transceivers actually null.

    Silent transmitters contribute nothing; a silent LT's own link scores 0.
    """
    links = range(config.num_links) if links is None else links
    out = []
    for k in links:
        if not tset.is_active(k):
            out.append(0)
            continue
        d_k = tset.precoders[k].shape[1]
        u = tset.lr_decoders[k]
        unaligned = 0
        for j in channels.transmitters_of(k, LEGIT):
            if j == k or not tset.is_active(j):
                continue
            v = tset.precoders[j]
            if np.linalg.norm(u.conj().T @ channels.get(k, j, LEGIT) @ v) > tol:
                unaligned += v.shape[1]
        I_e = sum(tset.precoders[j].shape[1] for j in channels.transmitters_of(k, EAVES)
                  if j != k and tset.is_active(j))
        out.append(count_dimensions(d_k, int(config.N_e[k]), unaligned, I_e)[2])
    return np.array(out, dtype=int)


# ------------------------------------------------------------------ export

_CSV_FIELDS = ("link", "S_l", "S_e", "sdof", "I_l", "I_e", "epsilon")


def write_link_metrics_csv(rows: Iterable[LinkMetrics], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# giasec link_metrics v{CSV_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_FIELDS)
        for m in rows:
            writer.writerow([getattr(m, f) for f in _CSV_FIELDS])


def read_link_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("# giasec link_metrics v"):
            raise ValueError("missing link_metrics schema header")
        return [{k: int(v) for k, v in row.items()} for row in csv.DictReader(fh)]
