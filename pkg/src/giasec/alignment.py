"""Alignment-set construction with per-node proper subsets.

A pair ``(k, j)`` in the alignment set asks that interference from
transmitter ``j`` be nulled at LR ``k``. Each pair is owned either by the
transmitter (its precoder spends antennas on it) or by the receiver (its
decoder does). Keeping every per-node subset within its antenna budget
makes the transceiver problem feasible almost surely.

Selection is nearest-first. Transmitters go first and pick their nearest
in-range foreign LRs; each LR then fills its remaining budget with the
nearest in-range transmitters that did not already pick it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .channel import NetworkConfig
from .geometry import NetworkTopology, StochasticParams, neighbours_within


def nearest_first(ids: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """Default selection order: increasing distance, ties by smaller id."""
    return np.lexsort((ids, dists))


@dataclass(frozen=True)
class AlignmentSet:
    pairs: frozenset = frozenset()
    rx_subsets: dict = field(default_factory=dict)
    tx_subsets: dict = field(default_factory=dict)
    # LRs whose receiver phase ran out of in-range candidates
    exhausted: frozenset = frozenset()

    @classmethod
    def from_subsets(cls, rx_subsets: dict, tx_subsets: dict, exhausted: Iterable[int] = ()) -> "AlignmentSet":
        rx = {int(k): frozenset(v) for k, v in rx_subsets.items() if v}
        tx = {int(j): frozenset(v) for j, v in tx_subsets.items() if v}
        pairs = frozenset().union(*rx.values(), *tx.values())
        return cls(pairs, rx, tx, frozenset(exhausted))

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.pairs

    def owner(self, pair) -> Optional[str]:
        k, j = pair
        if pair in self.rx_subsets.get(k, ()):
            return "rx"
        if pair in self.tx_subsets.get(j, ()):
            return "tx"
        return None

    def restricted_to(self, receivers: Iterable[int]) -> "AlignmentSet":
        """Only the pairs whose LR is in ``receivers``."""
        keep = set(int(k) for k in receivers)
        rx = {k: v for k, v in self.rx_subsets.items() if k in keep}
        tx = {j: frozenset(p for p in v if p[0] in keep) for j, v in self.tx_subsets.items()}
        return AlignmentSet.from_subsets(rx, tx, self.exhausted & keep)

    def to_json(self) -> str:
        edges = [{"rx": k, "tx": j, "owner": self.owner((k, j))} for k, j in sorted(self.pairs)]
        return json.dumps({"pairs": edges, "exhausted": sorted(self.exhausted)})

    @classmethod
    def from_json(cls, text: str) -> "AlignmentSet":
        doc = json.loads(text)
        rx, tx = {}, {}
        for e in doc["pairs"]:
            pair = (e["rx"], e["tx"])
            if e["owner"] == "rx":
                rx.setdefault(pair[0], set()).add(pair)
            else:
                tx.setdefault(pair[1], set()).add(pair)
        return cls.from_subsets(rx, tx, doc.get("exhausted", ()))


def is_proper_rx(subset, config: NetworkConfig, k: Optional[int] = None) -> bool:
    """Receiver-side budget: interferer streams fit in ``N_l[k] - d[k]``."""
    subset = list(subset)
    if not subset:
        return True
    k = subset[0][0] if k is None else k
    if any(p[0] != k for p in subset):
        raise ValueError(f"receiver subset of LR {k} contains foreign pairs")
    return int(sum(config.d[j] for _, j in subset)) <= int(config.N_l[k] - config.d[k])


def is_proper_tx(subset, config: NetworkConfig, j: Optional[int] = None) -> bool:
    """Transmitter-side budget: selected LR streams fit in ``M[j] - d[j]``."""
    subset = list(subset)
    if not subset:
        return True
    j = subset[0][1] if j is None else j
    if any(p[1] != j for p in subset):
        raise ValueError(f"transmitter subset of node {j} contains foreign pairs")
    return int(sum(config.d[k] for k, _ in subset)) <= int(config.M[j] - config.d[j])


def max_tx_selections(M_x: int, d_x: int, d_l: int) -> int:
    """Number of LRs a transmitter can null: ``floor((M_x - d_x) / d_l)``."""
    if d_l < 1:
        raise ValueError("d_l must be at least 1")
    return (int(M_x) - int(d_x)) // int(d_l)


def _check_config(config: NetworkConfig) -> None:
    k = config.num_links
    if k and np.any(config.d[:k] > np.minimum(config.M[:k], config.N_l)):
        raise ValueError("d_l exceeds min(M_l, N_l) for some link")


def transmitter_phase(topology: NetworkTopology, params: StochasticParams, config: NetworkConfig,
                      transmitters: Optional[Iterable[int]] = None,
                      order: Callable = nearest_first) -> dict:
    """Each transmitter picks its nearest in-range foreign LRs within budget."""
    tx_ids = np.arange(topology.num_transmitters) if transmitters is None else np.asarray(sorted(transmitters), dtype=int)
    tx_ids = tx_ids[config.d[tx_ids] > 0] if len(tx_ids) else tx_ids
    subsets = {}
    hoods = neighbours_within(topology.lr_positions, topology.tx_positions[tx_ids], params)
    for j, (lrs, dist) in zip(tx_ids, hoods):
        j = int(j)
        budget = int(config.M[j] - config.d[j])
        sel, used = [], 0
        for pos in order(lrs, dist):
            k = int(lrs[pos])
            if k == j:  # own LR (only LTs have one)
                continue
            need = int(config.d[k])
            if used + need > budget:
                break
            sel.append((k, j))
            used += need
        if sel:
            subsets[j] = frozenset(sel)
    return subsets


def receiver_phase(topology: NetworkTopology, params: StochasticParams, config: NetworkConfig,
                   tx_subsets: dict, receivers: Optional[Iterable[int]] = None,
                   order: Callable = nearest_first) -> tuple[dict, set]:
    """Each LR adds nearest uncovered in-range transmitters up to its target.

    The target is the lower end of the receiver budget window,
    ``N_l - d_l - max(d) + 1``; stopping there never overshoots
    ``N_l - d_l``. Returns the subsets and the LRs that ran out of
    candidates before reaching the target.
    """
    rx_ids = np.arange(topology.num_links) if receivers is None else np.asarray(sorted(receivers), dtype=int)
    covered = set()
    for sub in tx_subsets.values():
        covered.update(sub)
    active = config.d > 0
    d_max = int(config.d[active].max()) if np.any(active) else 1
    subsets, exhausted = {}, set()
    hoods = neighbours_within(topology.tx_positions, topology.lr_positions[rx_ids], params)
    for k, (txs, dist) in zip(rx_ids, hoods):
        k = int(k)
        d_k = int(config.d[k])
        target = int(config.N_l[k]) - d_k - max(d_k, d_max) + 1
        sel, used = [], 0
        ran_out = True
        for pos in order(txs, dist):
            if used >= target:
                ran_out = False
                break
            j = int(txs[pos])
            if j == k or not active[j] or (k, j) in covered:
                continue
            sel.append((k, j))
            used += int(config.d[j])
        else:
            ran_out = used < target
        if sel:
            subsets[k] = frozenset(sel)
        if ran_out:
            exhausted.add(k)
    return subsets, exhausted


def build_alignment_set(topology: NetworkTopology, params: StochasticParams, config: NetworkConfig,
                        receivers: Optional[Iterable[int]] = None,
                        order: Callable = nearest_first) -> AlignmentSet:
    """Two-pass nearest-first construction (transmitters, then receivers).

    With ``receivers`` given, only those LRs run the receiver pass and only
    transmitters in range of them run the transmitter pass; the result is
    exact for every pair touching those LRs.
    """
    _check_config(config)
    transmitters = None
    if receivers is not None:
        receivers = sorted(int(k) for k in receivers)
        hoods = neighbours_within(topology.tx_positions, topology.lr_positions[receivers], params)
        transmitters = sorted(set(int(j) for idx, _ in hoods for j in idx))
    tx = transmitter_phase(topology, params, config, transmitters, order)
    rx, exhausted = receiver_phase(topology, params, config, tx, receivers, order)
    return AlignmentSet.from_subsets(rx, tx, exhausted)


def verify_coverage(aset: AlignmentSet, config: NetworkConfig) -> bool:
    """True iff the subsets are proper, pairwise disjoint and cover ``pairs``."""
    seen = set()
    for k, sub in aset.rx_subsets.items():
        if any(p[0] != k for p in sub) or not is_proper_rx(sub, config, k):
            return False
        if seen & sub:
            return False
        seen |= sub
    for j, sub in aset.tx_subsets.items():
        if any(p[1] != j for p in sub) or not is_proper_tx(sub, config, j):
            return False
        if seen & sub:
            return False
        seen |= sub
    if any(k == j for k, j in seen):
        return False
    return seen == set(aset.pairs)
