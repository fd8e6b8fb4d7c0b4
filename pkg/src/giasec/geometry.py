"""Poisson wireless-tap network topologies.

Legitimate transmitters (LTs) and jammers (LJs) are homogeneous Poisson
point processes on a padded disc. Each LT carries one legitimate receiver
(LR) and one eavesdropping receiver (ER) at a bounded random offset.

Transmitters share one global index space: LTs are ``0..K-1`` and LJs are
``K..K+J-1``. Receiver ``k`` (LR or ER) is paired with LT ``k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

# Sub-stream keys; appending a node class never perturbs the others.
_STREAM_COUNTS = 0
_STREAM_LT = 1
_STREAM_LJ = 2
_STREAM_LR_OFFSET = 3
_STREAM_ER_OFFSET = 4

# Relative slack for KD-tree radius queries; the exact pathloss predicate
# is applied afterwards.
_QUERY_SLACK = 1e-9


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for sub-stream ``stream`` of a master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


@dataclass(frozen=True)
class OffsetDistribution:
    """Offset of a receiver from its LT.

    ``kind="fixed_norm"`` draws a uniform direction at norm ``radius``;
    ``kind="uniform_disc"`` draws uniformly on the disc of that radius.
    """

    kind: str = "fixed_norm"
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed_norm", "uniform_disc"):
            raise ValueError(f"unknown offset distribution {self.kind!r}")
        if self.radius < 0:
            raise ValueError("offset radius must be non-negative")

    @property
    def max_norm(self) -> float:
        return float(self.radius)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
        if self.kind == "fixed_norm":
            r = np.full(n, self.radius)
        else:
            r = self.radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
        return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


@dataclass(frozen=True)
class StochasticParams:
    """Parameters of the stochastic wireless-tap network.

    Defaults are the secrecy-rate study setting (alpha=4, theta=1e-2,
    lambda_l=0.04, lambda_j=0.09, 16/16 transmit antennas, N_l=8, N_e=32,
    one stream per node, LR/ER offsets of norm 1 and 1.5).
    """

    alpha: float = 4.0
    theta: float = 1e-2
    lambda_l: float = 4e-2
    lambda_j: float = 9e-2
    lr_offset: OffsetDistribution = field(default_factory=lambda: OffsetDistribution("fixed_norm", 1.0))
    er_offset: OffsetDistribution = field(default_factory=lambda: OffsetDistribution("fixed_norm", 1.5))
    M_l: int = 16
    N_l: int = 8
    M_j: int = 16
    N_e: int = 32
    d_l: int = 1
    d_j: int = 1

    def __post_init__(self):
        if not 2.0 <= self.alpha <= 4.0:
            raise ValueError(f"alpha must lie in [2, 4], got {self.alpha}")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.lambda_l < 0 or self.lambda_j < 0:
            raise ValueError("densities must be non-negative")
        for name in ("M_l", "N_l", "M_j", "N_e"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.d_l < 1 or self.d_j < 0:
            raise ValueError("need d_l >= 1 and d_j >= 0")
        if self.d_l > min(self.M_l, self.N_l):
            raise ValueError(f"d_l={self.d_l} exceeds min(M_l, N_l)={min(self.M_l, self.N_l)}")
        if self.d_j > self.M_j:
            raise ValueError(f"d_j={self.d_j} exceeds M_j={self.M_j}")
        bound = self.cutoff_radius * (1 + _QUERY_SLACK)
        for name in ("lr_offset", "er_offset"):
            if getattr(self, name).max_norm > bound:
                raise ValueError(
                    f"{name} support {getattr(self, name).max_norm} exceeds the cutoff radius {self.cutoff_radius}"
                )

    @property
    def cutoff_radius(self) -> float:
        """Largest distance with nonzero pathloss, ``theta**(-2/alpha)``."""
        return self.theta ** (-2.0 / self.alpha)

    def with_(self, **changes) -> "StochasticParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StochasticParams":
        data = dict(data)
        for name in ("lr_offset", "er_offset"):
            if isinstance(data.get(name), dict):
                data[name] = OffsetDistribution(**data[name])
        return cls(**data)


def in_range(dist, alpha: float, theta: float):
    """Pathloss support predicate: ``dist**(-alpha/2) >= theta``."""
    dist = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore"):
        return dist ** (-alpha / 2.0) >= theta


@dataclass(frozen=True)
class ObservationWindow:
    """Finite stand-in for the infinite plane.

    Nodes are sampled on the disc of radius ``observation_radius +
    guard_width``; only links whose LT lies inside ``observation_radius``
    feed statistics. ``guard_width=None`` means twice the cutoff radius,
    which covers both the pathloss footprint and the two-hop reach of the
    nearest-neighbour alignment rule.
    """

    observation_radius: float
    guard_width: Optional[float] = None

    def __post_init__(self):
        if self.observation_radius <= 0:
            raise ValueError("observation_radius must be positive")
        if self.guard_width is not None and self.guard_width < 0:
            raise ValueError("guard_width must be non-negative")

    def guard(self, params: StochasticParams) -> float:
        g = 2.0 * params.cutoff_radius if self.guard_width is None else float(self.guard_width)
        if g < params.cutoff_radius * (1 - _QUERY_SLACK):
            raise ValueError(f"guard_width {g} is below the cutoff radius {params.cutoff_radius}")
        return g

    def padded_radius(self, params: StochasticParams) -> float:
        return self.observation_radius + self.guard(params)


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    lt_positions: np.ndarray
    lr_positions: np.ndarray
    lj_positions: np.ndarray
    er_positions: np.ndarray
    window: Optional[ObservationWindow] = None
    seed: Optional[int] = None
    padded_radius: float = math.inf

    def __post_init__(self):
        arrays = {}
        for name in ("lt_positions", "lr_positions", "lj_positions", "er_positions"):
            a = np.array(getattr(self, name), dtype=float).reshape(-1, 2)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        k = len(arrays["lt_positions"])
        if len(arrays["lr_positions"]) != k or len(arrays["er_positions"]) != k:
            raise ValueError("need exactly one LR and one ER per LT")

    @property
    def num_links(self) -> int:
        return len(self.lt_positions)

    @property
    def num_jammers(self) -> int:
        return len(self.lj_positions)

    @property
    def num_transmitters(self) -> int:
        return self.num_links + self.num_jammers

    @property
    def tx_positions(self) -> np.ndarray:
        """All transmitter positions in global index order (LTs, then LJs)."""
        return np.vstack([self.lt_positions, self.lj_positions])

    def is_jammer(self, tx: int) -> bool:
        return tx >= self.num_links

    def observed_links(self) -> np.ndarray:
        """Links whose LT lies inside the observation disc."""
        if self.window is None:
            return np.arange(self.num_links)
        r = np.linalg.norm(self.lt_positions, axis=1)
        return np.flatnonzero(r <= self.window.observation_radius)

    def without_jammers(self) -> "NetworkTopology":
        return replace(self, lj_positions=np.zeros((0, 2)))

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "observation_radius": None if self.window is None else self.window.observation_radius,
            "padded_radius": None if math.isinf(self.padded_radius) else self.padded_radius,
            "lt_positions": self.lt_positions.tolist(),
            "lr_positions": self.lr_positions.tolist(),
            "lj_positions": self.lj_positions.tolist(),
            "er_positions": self.er_positions.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "NetworkTopology":
        doc = json.loads(text)
        window = None if doc["observation_radius"] is None else ObservationWindow(doc["observation_radius"])
        padded = math.inf if doc["padded_radius"] is None else doc["padded_radius"]
        return cls(doc["lt_positions"], doc["lr_positions"], doc["lj_positions"], doc["er_positions"],
                   window=window, seed=doc["seed"], padded_radius=padded)


def _uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def sample_topology(params: StochasticParams, window: ObservationWindow, seed: int,
                    typical_link: bool = False) -> NetworkTopology:
    """Sample LT/LJ Poisson processes on the padded disc and attach receivers.

    With ``typical_link=True`` an extra LT is placed at the origin as link 0
    (the Palm view of the process); its receivers are the usual offsets.
    """
    radius = window.padded_radius(params)
    area = math.pi * radius ** 2
    counts = stream_rng(seed, _STREAM_COUNTS)
    k = int(counts.poisson(params.lambda_l * area))
    j = int(counts.poisson(params.lambda_j * area))

    lt = _uniform_disc(stream_rng(seed, _STREAM_LT), k, radius)
    if typical_link:
        lt = np.vstack([np.zeros((1, 2)), lt])
    lj = _uniform_disc(stream_rng(seed, _STREAM_LJ), j, radius)
    lr = lt + params.lr_offset.sample(stream_rng(seed, _STREAM_LR_OFFSET), len(lt))
    er = lt + params.er_offset.sample(stream_rng(seed, _STREAM_ER_OFFSET), len(lt))
    return NetworkTopology(lt, lr, lj, er, window=window, seed=seed, padded_radius=radius)


def connection_density(params: StochasticParams) -> tuple[float, float]:
    """Expected number of in-range LTs and LJs around any point."""
    scale = math.pi * params.theta ** (-4.0 / params.alpha)
    return scale * params.lambda_l, scale * params.lambda_j


def neighbours_within(points: np.ndarray, centers: np.ndarray, params: StochasticParams):
    """For each center, indices of ``points`` in pathloss range, sorted by (distance, index).

    Returns a list of ``(indices, distances)`` pairs.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    out = []
    if len(points) == 0 or len(centers) == 0:
        return [(np.zeros(0, dtype=int), np.zeros(0)) for _ in range(len(centers))]
    tree = cKDTree(points)
    hits = tree.query_ball_point(centers, params.cutoff_radius * (1 + _QUERY_SLACK))
    for c, idx in zip(centers, hits):
        idx = np.asarray(idx, dtype=int)
        dist = np.linalg.norm(points[idx] - c, axis=1)
        keep = in_range(dist, params.alpha, params.theta) & (dist > 0)
        idx, dist = idx[keep], dist[keep]
        order = np.lexsort((idx, dist))
        out.append((idx[order], dist[order]))
    return out


def in_range_interferers(topology: NetworkTopology, params: StochasticParams, receiver_position,
                         own_transmitter: Optional[int] = None) -> list[int]:
    """Global indices of transmitters with nonzero pathloss to a receiver.

    The receiver's own associated LT (``own_transmitter``) is excluded.
    """
    (idx, _), = neighbours_within(topology.tx_positions, np.atleast_2d(receiver_position), params)
    return [int(i) for i in idx if i != own_transmitter]
