"""Pathloss with hard cutoff and Rayleigh MIMO channels between network nodes.

A channel ``H[k, j]`` on side ``LEGIT`` goes from transmitter ``j`` to LR
``k``; on side ``EAVES`` it goes to ER ``k``. Only links with nonzero
pathloss are stored; every other link is an implicit zero matrix.

Binary layout (little-endian), shared with transceiver dumps::

    magic     8 bytes   b"GIACH001"
    count     uint32
    entries   count times:
        rx       int32
        tx       int32
        side     uint8      0 = legitimate, 1 = eavesdropping
        pathloss float64
        rows     uint32
        cols     uint32
        data     rows*cols complex128, row-major, (re, im) interleaved
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .geometry import NetworkTopology, StochasticParams, in_range, neighbours_within, stream_rng

LEGIT = "legitimate"
EAVES = "eavesdropping"
_SIDE_CODE = {LEGIT: 0, EAVES: 1}
_CODE_SIDE = {v: k for k, v in _SIDE_CODE.items()}
_STREAM_CHANNEL = {LEGIT: 10, EAVES: 11}

CHANNEL_MAGIC = b"GIACH001"
_ENTRY_HEADER = struct.Struct("<iiBdII")


def pathloss(a, b, alpha: float, theta: float) -> float:
    """Amplitude pathloss ``|a-b|**(-alpha/2)``, zeroed below ``theta``."""
    dist = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if dist == 0.0:
        raise ValueError("pathloss is undefined for coincident points")
    value = dist ** (-alpha / 2.0)
    return value if value >= theta else 0.0


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """I.i.d. CN(0, 1) entries."""
    z = rng.standard_normal(tuple(shape) + (2,))
    z /= math.sqrt(2.0)
    return z.view(np.complex128)[..., 0]


@dataclass(frozen=True, eq=False)
class NetworkConfig:
    """Per-node antenna counts, stream counts and transmit powers.

    Transmitter arrays (``M``, ``d``, ``P``) are indexed by global
    transmitter id; receiver arrays (``N_l``, ``N_e``) by link id.
    Powers must stay within ``power_ratio`` of ``reference_power``.
    """

    M: np.ndarray
    N_l: np.ndarray
    N_e: np.ndarray
    d: np.ndarray
    P: np.ndarray
    reference_power: float = 1.0
    power_ratio: tuple = (1e-3, 1e3)

    def __post_init__(self):
        for name, dtype in (("M", int), ("N_l", int), ("N_e", int), ("d", int), ("P", float)):
            a = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        k = len(self.N_l)
        if len(self.N_e) != k or len(self.M) < k or len(self.d) != len(self.M) or len(self.P) != len(self.M):
            raise ValueError("inconsistent NetworkConfig array lengths")
        if np.any(self.M < 1) or np.any(self.N_l < 1) or np.any(self.N_e < 1):
            raise ValueError("antenna counts must be positive")
        if np.any(self.d[:k] < 1) or np.any(self.d < 0):
            raise ValueError("LTs need d >= 1, jammers d >= 0")
        if np.any(self.d > self.M):
            raise ValueError("stream count exceeds transmit antennas")
        if np.any(self.P < 0):
            raise ValueError("powers must be non-negative")
        active = self.d > 0
        if np.any(active):
            ratio = self.P[active] / self.reference_power
            lo, hi = self.power_ratio
            if np.any(ratio < lo) or np.any(ratio > hi):
                raise ValueError("transmit powers are not on the same order as the reference power")

    @property
    def num_links(self) -> int:
        return len(self.N_l)

    @property
    def num_transmitters(self) -> int:
        return len(self.M)

    def with_power(self, power: float) -> "NetworkConfig":
        scale = power / self.reference_power
        return replace(self, P=self.P * scale, reference_power=power)

    @classmethod
    def uniform(cls, num_links: int, num_jammers: int, M_l: int, N_l: int, M_j: int, N_e: int,
                d_l: int, d_j: int, power: float = 1.0) -> "NetworkConfig":
        n_tx = num_links + num_jammers
        M = np.array([M_l] * num_links + [M_j] * num_jammers)
        d = np.array([d_l] * num_links + [d_j] * num_jammers)
        return cls(M=M, N_l=np.full(num_links, N_l), N_e=np.full(num_links, N_e), d=d,
                   P=np.full(n_tx, float(power)), reference_power=float(power))

    @classmethod
    def from_params(cls, params: StochasticParams, topology: NetworkTopology, power: float = 1.0) -> "NetworkConfig":
        return cls.uniform(topology.num_links, topology.num_jammers, params.M_l, params.N_l, params.M_j,
                           params.N_e, params.d_l, params.d_j, power)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Sparse map ``(rx, tx, side) -> (pathloss, matrix)``."""

    matrices: dict = field(default_factory=dict)
    pathlosses: dict = field(default_factory=dict)
    shapes: Optional[dict] = None  # (rx, side) -> rows, tx -> cols; used for implicit zeros

    def get(self, rx: int, tx: int, side: str = LEGIT) -> np.ndarray:
        key = (rx, tx, side)
        if key in self.matrices:
            return self.matrices[key]
        if self.shapes is None:
            raise KeyError(f"no channel stored for {key} and no shape information")
        return np.zeros((self.shapes[(rx, side)], self.shapes[tx]), dtype=complex)

    def pathloss(self, rx: int, tx: int, side: str = LEGIT) -> float:
        return self.pathlosses.get((rx, tx, side), 0.0)

    def has(self, rx: int, tx: int, side: str = LEGIT) -> bool:
        return (rx, tx, side) in self.matrices

    def transmitters_of(self, rx: int, side: str = LEGIT) -> list[int]:
        index = self.__dict__.get("_index")
        if index is None:
            index = {}
            for r, t, s in sorted(self.matrices):
                index.setdefault((r, s), []).append(t)
            object.__setattr__(self, "_index", index)
        return list(index.get((rx, side), ()))

    def keys(self, side: Optional[str] = None) -> list:
        return sorted(k for k in self.matrices if side is None or k[2] == side)

    def __len__(self) -> int:
        return len(self.matrices)

    def to_bytes(self) -> bytes:
        keys = self.keys()
        parts = [CHANNEL_MAGIC, struct.pack("<I", len(keys))]
        for rx, tx, side in keys:
            h = np.ascontiguousarray(self.matrices[(rx, tx, side)], dtype="<c16")
            parts.append(_ENTRY_HEADER.pack(rx, tx, _SIDE_CODE[side], self.pathlosses[(rx, tx, side)], *h.shape))
            parts.append(h.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ChannelSet":
        if blob[:8] != CHANNEL_MAGIC:
            raise ValueError("not a channel dump")
        (count,) = struct.unpack_from("<I", blob, 8)
        pos = 12
        matrices, pls = {}, {}
        for _ in range(count):
            rx, tx, code, pl, rows, cols = _ENTRY_HEADER.unpack_from(blob, pos)
            pos += _ENTRY_HEADER.size
            n = rows * cols * 16
            h = np.frombuffer(blob, dtype="<c16", count=rows * cols, offset=pos).reshape(rows, cols).copy()
            pos += n
            key = (rx, tx, _CODE_SIDE[code])
            matrices[key], pls[key] = h, pl
        return cls(matrices, pls)

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "ChannelSet":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _shapes(topology: NetworkTopology, config: NetworkConfig) -> dict:
    shapes = {j: int(config.M[j]) for j in range(config.num_transmitters)}
    for k in range(config.num_links):
        shapes[(k, LEGIT)] = int(config.N_l[k])
        shapes[(k, EAVES)] = int(config.N_e[k])
    return shapes


def sample_channels(topology: NetworkTopology, config: NetworkConfig, params: StochasticParams, seed: int,
                    receivers: Optional[Iterable[int]] = None) -> ChannelSet:
    """Draw ``L(a, b) * H~`` for every in-range link into the chosen receivers.

    ``receivers`` restricts sampling to a subset of link ids (both the LR
    and the ER of each); by default every link is sampled.
    """
    if config.num_links != topology.num_links or config.num_transmitters != topology.num_transmitters:
        raise ValueError("NetworkConfig does not match the topology's node counts")
    rx_ids = np.arange(topology.num_links) if receivers is None else np.unique(np.asarray(list(receivers), dtype=int))
    tx_pos = topology.tx_positions
    matrices, pls = {}, {}
    for side, rx_pos, n_ant in ((LEGIT, topology.lr_positions, config.N_l), (EAVES, topology.er_positions, config.N_e)):
        rng = stream_rng(seed, _STREAM_CHANNEL[side])
        hoods = neighbours_within(tx_pos, rx_pos[rx_ids], params)
        for k, (idx, dist) in zip(rx_ids, hoods):
            if len(idx) == 0:
                continue
            order = np.argsort(idx, kind="stable")
            idx, dist = idx[order], dist[order]
            sizes = int(n_ant[k]) * config.M[idx]
            flat = crandn(rng, (int(sizes.sum()),))
            start = 0
            for j, dj, size in zip(idx, dist, sizes):
                loss = dj ** (-params.alpha / 2.0)
                h = flat[start:start + size].reshape(int(n_ant[k]), int(config.M[j]))
                start += size
                matrices[(int(k), int(j), side)] = loss * h
                pls[(int(k), int(j), side)] = float(loss)
    return ChannelSet(matrices, pls, _shapes(topology, config))


def out_of_range_gains(topology: NetworkTopology, params: StochasticParams, receiver_position,
                       exclude: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Transmitters beyond the cutoff and their uncut pathloss ``dist**(-alpha/2)``.

    Used when evaluating rates without the pathloss cutoff: those links are
    ignored by the design, so their effective channels ``H V`` are plain
    Gaussian and can be drawn directly at evaluation time.
    """
    pos = topology.tx_positions
    dist = np.linalg.norm(pos - np.asarray(receiver_position, dtype=float), axis=1)
    mask = ~in_range(dist, params.alpha, params.theta)
    if exclude is not None:
        mask[exclude] = False
    idx = np.flatnonzero(mask)
    return idx, dist[idx] ** (-params.alpha / 2.0)
