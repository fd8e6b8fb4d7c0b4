"""Precoder and decoder construction.

Precoders always have orthonormal columns; transmit power enters only at
rate evaluation. Silent transmitters carry a zero precoder.

Binary dump layout (little-endian)::

    magic     8 bytes   b"GIATX001"
    count     uint32
    entries   count times:
        kind     uint8      0 = precoder, 1 = LR decoder, 2 = ER decoder
        node     int32
        rows     uint32
        cols     uint32
        data     rows*cols complex128, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .alignment import AlignmentSet, build_alignment_set, transmitter_phase
from .channel import EAVES, LEGIT, ChannelSet, NetworkConfig, crandn
from .geometry import NetworkTopology, StochasticParams, stream_rng

TX_MAGIC = b"GIATX001"
_TX_ENTRY = struct.Struct("<BiII")
_KINDS = ("precoders", "lr_decoders", "er_decoders")

# Rotation that annihilates a conjugated 2-vector: (Z conj(w))^H w = 0.
_Z = np.array([[0.0, -1.0], [1.0, 0.0]])

_STREAM_INIT = 20
_STREAM_BASELINE = 21


class NonConvergence(RuntimeError):
    """The leakage solver could not drive every aligned pair below tolerance."""

    def __init__(self, max_residual: float, iterations: int = 0):
        super().__init__(f"leakage solver stalled at max residual {max_residual:.3e} after {iterations} iterations")
        self.max_residual = max_residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class TransceiverSet:
    """Precoders ``V_j`` and decoders ``U_k`` keyed by node id."""

    precoders: dict
    lr_decoders: dict
    er_decoders: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def is_active(self, j: int) -> bool:
        v = self.precoders.get(j)
        return v is not None and v.shape[1] > 0 and bool(np.any(v != 0))

    def with_er_decoders(self, channels: ChannelSet, config: NetworkConfig, links=None) -> "TransceiverSet":
        links = sorted(self.lr_decoders) if links is None else links
        er = {k: mmse_decoder(channels, self.precoders, config, k) for k in links}
        return TransceiverSet(self.precoders, self.lr_decoders, er, self.info)

    def to_bytes(self) -> bytes:
        entries = [(code, node, mat) for code, name in enumerate(_KINDS)
                   for node, mat in sorted(getattr(self, name).items())]
        parts = [TX_MAGIC, struct.pack("<I", len(entries))]
        for code, node, mat in entries:
            mat = np.ascontiguousarray(mat, dtype="<c16")
            parts.append(_TX_ENTRY.pack(code, node, *mat.shape))
            parts.append(mat.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TransceiverSet":
        if blob[:8] != TX_MAGIC:
            raise ValueError("not a transceiver dump")
        (count,) = struct.unpack_from("<I", blob, 8)
        pos = 12
        maps = ({}, {}, {})
        for _ in range(count):
            code, node, rows, cols = _TX_ENTRY.unpack_from(blob, pos)
            pos += _TX_ENTRY.size
            maps[code][node] = np.frombuffer(blob, "<c16", rows * cols, pos).reshape(rows, cols).copy()
            pos += rows * cols * 16
        return cls(*maps)

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "TransceiverSet":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class ConstraintReport:
    residuals: dict
    direct_rank_ok: dict
    jammer_rank_ok: dict
    max_leakage: float

    def ok(self, tol: float = 1e-8) -> bool:
        return (self.max_leakage <= tol and all(self.direct_rank_ok.values())
                and all(self.jammer_rank_ok.values()))


def _group(items, key):
    out = {}
    for it in items:
        out.setdefault(key(it), []).append(it)
    return out


def random_orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if cols == 0:
        return np.zeros((rows, 0), dtype=complex)
    q, _ = np.linalg.qr(crandn(rng, (rows, cols)))
    return q


def random_orthonormal_set(rng: np.random.Generator, shapes) -> list:
    """Random orthonormal matrices for a list of ``(rows, cols)``, batched by shape."""
    shapes = [(int(r), int(c)) for r, c in shapes]
    out = [None] * len(shapes)
    for shape, idx in _group(range(len(shapes)), lambda i: shapes[i]).items():
        rows, cols = shape
        if cols == 0:
            for i in idx:
                out[i] = np.zeros((rows, 0), dtype=complex)
            continue
        q = np.linalg.qr(crandn(rng, (len(idx), rows, cols)))[0]
        for n, i in enumerate(idx):
            out[i] = q[n]
    return out


def null_space_basis(rows: np.ndarray, dim: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``dim`` orthonormal columns orthogonal to every row of ``rows``.

    With more null directions than needed, a random orthonormal subset is
    taken when ``rng`` is given, otherwise the leading ones.
    """
    n = rows.shape[1]
    if rows.shape[0] == 0:
        basis = np.eye(n, dtype=complex)
    else:
        _, s, vh = np.linalg.svd(rows)
        rank = int(np.sum(s > 1e-12 * max(s[0], 1.0))) if len(s) else 0
        basis = vh[rank:].conj().T
    if basis.shape[1] < dim:
        raise ValueError(f"null space has dimension {basis.shape[1]} < {dim}")
    if rng is not None and basis.shape[1] > dim:
        return basis @ random_orthonormal(rng, basis.shape[1], dim)
    return basis[:, :dim]


def _normalize_columns(u: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(u, axis=0)
    norms[norms == 0] = 1.0
    return u / norms


def mmse_decoder(channels: ChannelSet, precoders: dict, config: NetworkConfig, k: int) -> np.ndarray:
    """MMSE decoder at ER ``k``: ``(I + sum_j P_j/d_j H V V^H H^H)^-1 H_kk V_k``, normalized.

    Every transmitter except ``k`` counts as interference.
    """
    n = int(config.N_e[k])
    cov = np.eye(n, dtype=complex)
    for j in channels.transmitters_of(k, EAVES):
        v = precoders.get(j)
        if j == k or v is None or v.shape[1] == 0:
            continue
        g = channels.get(k, j, EAVES) @ v
        cov += (config.P[j] / v.shape[1]) * (g @ g.conj().T)
    desired = channels.get(k, k, EAVES) @ precoders[k]
    return _normalize_columns(np.linalg.solve(cov, desired))


# ---------------------------------------------------------------- case study

CASE_LINKS = 3
CASE_JAMMER = 3


def case_study_config(power: float = 100.0) -> NetworkConfig:
    """Three 2x2 links, one 4-antenna jammer, ERs with 3, 2, 2 antennas, one stream each."""
    return NetworkConfig(M=[2, 2, 2, 4], N_l=[2, 2, 2], N_e=[3, 2, 2], d=[1, 1, 1, 1],
                         P=[power] * 4, reference_power=power)


def case_study_channels(seed: int, config: Optional[NetworkConfig] = None) -> ChannelSet:
    """Fully connected CN(0, 1) channels (unit pathloss) for the case-study network."""
    config = case_study_config() if config is None else config
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 12]))
    matrices, pls = {}, {}
    for side, n_ant in ((LEGIT, config.N_l), (EAVES, config.N_e)):
        for k in range(config.num_links):
            for j in range(config.num_transmitters):
                matrices[(k, j, side)] = crandn(rng, (int(n_ant[k]), int(config.M[j])))
                pls[(k, j, side)] = 1.0
    shapes = {j: int(config.M[j]) for j in range(config.num_transmitters)}
    for k in range(config.num_links):
        shapes[(k, LEGIT)] = int(config.N_l[k])
        shapes[(k, EAVES)] = int(config.N_e[k])
    return ChannelSet(matrices, pls, shapes)


def _zf2(w: np.ndarray) -> np.ndarray:
    """Unit 2-vector ``u`` with ``u^H w = 0``."""
    return _normalize_columns(_Z @ w.conj())


def design_case_study(strategy: str, channels: ChannelSet, config: Optional[NetworkConfig] = None,
                      seed: int = 0) -> TransceiverSet:
    """Closed-form transceivers of the four case-study strategies.

    A: LTs 0 and 1 active, each LR zero-forces the other active LT.
    B: all LTs active, LR k zero-forces LT k+1 (cyclically).
    C: three-user interference alignment via the eigenvector chain.
    D: C plus a jammer precoder in the null space of the three LR rows.
    """
    strategy = strategy.upper()
    if strategy not in "ABCD" or len(strategy) != 1:
        raise ValueError(f"unknown strategy {strategy!r}")
    config = case_study_config() if config is None else config
    if (config.num_links != 3 or config.num_transmitters != 4 or list(config.M) != [2, 2, 2, 4]
            or list(config.N_l) != [2, 2, 2] or np.any(config.d != 1)):
        raise ValueError("case-study strategies need K=3, J=1, M_k=N_k=2, M_4=4, d=1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 13]))
    H = lambda k, j: channels.get(k, j, LEGIT)
    zero = lambda m: np.zeros((m, 1), dtype=complex)
    V, U = {}, {}

    if strategy == "A":
        V[0], V[1], V[2] = random_orthonormal(rng, 2, 1), random_orthonormal(rng, 2, 1), zero(2)
        U[0] = _zf2(H(0, 1) @ V[1])
        U[1] = _zf2(H(1, 0) @ V[0])
        U[2] = random_orthonormal(rng, 2, 1)
    elif strategy == "B":
        for j in range(3):
            V[j] = random_orthonormal(rng, 2, 1)
        for k in range(3):
            j = (k + 1) % 3
            U[k] = _zf2(H(k, j) @ V[j])
    else:
        chain = (np.linalg.solve(H(2, 0), H(2, 1)) @ np.linalg.solve(H(0, 1), H(0, 2))
                 @ np.linalg.solve(H(1, 2), H(1, 0)))
        _, vecs = np.linalg.eig(chain)
        v0 = vecs[:, [0]]
        V[0] = _normalize_columns(v0)
        V[1] = _normalize_columns(np.linalg.solve(H(2, 1), H(2, 0) @ v0))
        V[2] = _normalize_columns(np.linalg.solve(H(1, 2), H(1, 0) @ v0))
        U[0] = _zf2(H(0, 1) @ V[1])
        U[1] = _zf2(H(1, 2) @ V[2])
        U[2] = _zf2(H(2, 0) @ V[0])

    if strategy == "D":
        rows = np.vstack([U[k].conj().T @ H(k, CASE_JAMMER) for k in range(3)])
        V[CASE_JAMMER] = null_space_basis(rows, 1)
    else:
        V[CASE_JAMMER] = zero(4)
    return TransceiverSet(V, U, info={"strategy": strategy})


# ------------------------------------------------------------------- solver


def _min_norm_solve(J, rhs: np.ndarray, rtol: float = 1e-10) -> Optional[np.ndarray]:
    """Minimum-norm solution of ``J x = rhs`` through the normal equations.

    Jacobi-preconditioned CG to relative residual ``rtol`` first (pathloss
    spreads row scales over orders of magnitude, which the diagonal
    absorbs); sparse LU fallback.
    """
    from scipy.sparse.linalg import LinearOperator, cg, splu

    gram = (J @ J.conj().T).tocsc()
    diag = np.real(gram.diagonal()).copy()
    diag[diag <= 0] = 1.0
    precond = LinearOperator(gram.shape, matvec=lambda v: v / diag, dtype=complex)
    y, info = cg(gram, rhs, rtol=rtol, atol=0.0, maxiter=5 * gram.shape[0], M=precond)
    if info != 0 or not np.all(np.isfinite(y)):
        try:
            y = splu(gram + 1e-14 * diag.max() * _sparse_eye(gram.shape[0])).solve(rhs)
        except RuntimeError:
            return None
        if not np.all(np.isfinite(y)):
            return None
    return J.conj().T @ y


def _sparse_eye(n):
    from scipy.sparse import identity
    return identity(n, dtype=complex, format="csc")


class _LeakageProblem:
    """Leakage over a list of pairs, batched by matrix shape.

    ``fixed_rx`` / ``fixed_tx`` hold decoders and precoders that are
    inputs rather than unknowns; updates never touch them.
    """

    def __init__(self, channels: ChannelSet, pairs: list, config: NetworkConfig,
                 fixed_rx: Optional[dict] = None, fixed_tx: Optional[dict] = None):
        self.config = config
        self.fixed_rx = fixed_rx or {}
        self.fixed_tx = fixed_tx or {}
        rx_nodes = sorted({k for k, _ in pairs})
        tx_nodes = sorted({j for _, j in pairs})
        dk = lambda n: int(config.d[n])
        self.rx_groups = _group(rx_nodes, lambda k: (int(config.N_l[k]), dk(k)))
        self.tx_groups = _group(tx_nodes, lambda j: (int(config.M[j]), dk(j)))
        self.rx_pos = {k: (g, i) for g, ks in self.rx_groups.items() for i, k in enumerate(ks)}
        self.tx_pos = {j: (g, i) for g, js in self.tx_groups.items() for i, j in enumerate(js)}
        self.rx_free = {g: np.array([k not in self.fixed_rx for k in ks]) for g, ks in self.rx_groups.items()}
        self.tx_free = {g: np.array([j not in self.fixed_tx for j in js]) for g, js in self.tx_groups.items()}
        self.pair_groups = []
        for (rg, tg), ps in _group(pairs, lambda p: (self.rx_pos[p[0]][0], self.tx_pos[p[1]][0])).items():
            H = np.stack([channels.get(k, j, LEGIT) for k, j in ps])
            ri = np.array([self.rx_pos[k][1] for k, _ in ps])
            ti = np.array([self.tx_pos[j][1] for _, j in ps])
            self.pair_groups.append((rg, tg, ps, H, ri, ti))

    def random_init(self, rng):
        U = {g: np.stack([self.fixed_rx[k] if k in self.fixed_rx else random_orthonormal(rng, g[0], g[1])
                          for k in ks]) for g, ks in self.rx_groups.items()}
        V = {g: np.stack([self.fixed_tx[j] if j in self.fixed_tx else random_orthonormal(rng, g[0], g[1])
                          for j in js]) for g, js in self.tx_groups.items()}
        return U, V

    def update_decoders(self, U, V):
        C = {g: np.zeros((len(ks), g[0], g[0]), dtype=complex) for g, ks in self.rx_groups.items()}
        for rg, tg, _, H, ri, ti in self.pair_groups:
            hv = H @ V[tg][ti]
            np.add.at(C[rg], ri, hv @ hv.conj().transpose(0, 2, 1))
        out = {}
        for g, c in C.items():
            new = np.linalg.eigh(c)[1][..., :g[1]]
            out[g] = np.where(self.rx_free[g][:, None, None], new, U[g])
        return out

    def update_precoders(self, U, V):
        Q = {g: np.zeros((len(js), g[0], g[0]), dtype=complex) for g, js in self.tx_groups.items()}
        for rg, tg, _, H, ri, ti in self.pair_groups:
            uh = U[rg][ri].conj().transpose(0, 2, 1) @ H
            np.add.at(Q[tg], ti, uh.conj().transpose(0, 2, 1) @ uh)
        out = {}
        for g, q in Q.items():
            new = np.linalg.eigh(q)[1][..., :g[1]]
            out[g] = np.where(self.tx_free[g][:, None, None], new, V[g])
        return out

    def residuals(self, U, V) -> np.ndarray:
        out = [np.linalg.norm(U[rg][ri].conj().transpose(0, 2, 1) @ H @ V[tg][ti], axis=(1, 2))
               for rg, tg, _, H, ri, ti in self.pair_groups]
        return np.concatenate(out) if out else np.zeros(0)

    def newton_step(self, U, V, rtol: float = 1e-10):
        """Minimum-norm Gauss-Newton step on the bilinear constraints ``U^H H V = 0``.

        The linear system is solved to relative residual ``rtol``. The
        linearization ``dU^H (H V) + (U^H H) dV = -U^H H V`` is
        complex-linear in ``(conj(dU), dV)``. Columns are re-orthonormalized
        afterwards, which rescales residuals but keeps exact zeros.
        """
        from scipy.sparse import csr_matrix

        u_off, v_off, off = {}, {}, 0
        for g, ks in self.rx_groups.items():
            u_off[g] = off
            off += len(ks) * g[0] * g[1]
        for g, js in self.tx_groups.items():
            v_off[g] = off
            off += len(js) * g[0] * g[1]
        r_idx, c_idx, vals, rhs, r0 = [], [], [], [], 0
        for rg, tg, ps, H, ri, ti in self.pair_groups:
            (N, dk), (M, dj) = rg, tg
            P = len(ps)
            G = H @ V[tg][ti]
            F = U[rg][ri].conj().transpose(0, 2, 1) @ H
            rhs.append(-(F @ V[tg][ti]).reshape(-1))
            rows = r0 + (np.arange(P)[:, None, None] * dk * dj + np.arange(dk)[None, :, None] * dj
                         + np.arange(dj)[None, None, :])
            r0 += P * dk * dj
            ucol = (u_off[rg] + ri[:, None, None, None] * N * dk
                    + np.arange(N)[None, None, None, :] * dk + np.arange(dk)[None, :, None, None])
            uval = G.transpose(0, 2, 1)[:, None, :, :] * self.rx_free[rg][ri][:, None, None, None]
            vcol = (v_off[tg] + ti[:, None, None, None] * M * dj
                    + np.arange(M)[None, None, None, :] * dj + np.arange(dj)[None, None, :, None])
            vval = F[:, :, None, :] * self.tx_free[tg][ti][:, None, None, None]
            for col, val, width in ((ucol, uval, N), (vcol, vval, M)):
                shape = (P, dk, dj, width)
                r_idx.append(np.broadcast_to(rows[..., None], shape).ravel())
                c_idx.append(np.broadcast_to(col, shape).ravel())
                vals.append(np.broadcast_to(val, shape).ravel())
        J = csr_matrix((np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))), shape=(r0, off))
        step = _min_norm_solve(J, np.concatenate(rhs), rtol)
        if step is None:
            return None
        U2 = {g: np.linalg.qr(u + step[u_off[g]:u_off[g] + u.size].reshape(u.shape).conj())[0] for g, u in U.items()}
        V2 = {g: np.linalg.qr(v + step[v_off[g]:v_off[g] + v.size].reshape(v.shape))[0] for g, v in V.items()}
        # orthonormalization of an exact fixed node is a unitary change of basis; keep the input as given
        for g in U2:
            U2[g] = np.where(self.rx_free[g][:, None, None], U2[g], U[g])
        for g in V2:
            V2[g] = np.where(self.tx_free[g][:, None, None], V2[g], V[g])
        return U2, V2

    def unpack(self, U, V):
        dec = {k: U[g][i] for k, (g, i) in self.rx_pos.items() if k not in self.fixed_rx}
        pre = {j: V[g][i] for j, (g, i) in self.tx_pos.items() if j not in self.fixed_tx}
        return dec, pre


def _solve_alternating(problem: _LeakageProblem, rng, tol: float, max_iter: int, restarts: int,
                       stall_window: int, stall_ratio: float, polish_after: Optional[int],
                       polish_steps: int = 30):
    """Alternating sweeps with an optional Gauss-Newton polish.

    The polish is tried after ``polish_after`` sweeps and again after 4x
    and 16x as many; when all tries fail the attempt restarts.

    Returns ``(U, V, info)`` or raises :class:`NonConvergence`.
    """
    checkpoints = set() if polish_after is None else {polish_after * 4 ** i for i in range(3)}
    best, total = np.inf, 0
    for attempt in range(restarts + 1):
        U, V = problem.random_init(rng)
        history = []
        worst = np.inf
        for it in range(max_iter):
            U = problem.update_decoders(U, V)
            V = problem.update_precoders(U, V)
            res = problem.residuals(U, V)
            history.append(float(np.sum(res ** 2)))
            total += 1
            worst = float(res.max())
            if worst <= tol:
                return U, V, {"iterations": it + 1, "total_iterations": total, "objective": history,
                              "restarts": attempt, "max_residual": worst, "polish_steps": 0}
            if it + 1 in checkpoints:
                out = _polish(problem, U, V, tol, polish_steps)
                if out is not None:
                    U2, V2, worst2, steps = out
                    if worst2 <= tol:
                        return U2, V2, {"iterations": it + 1, "total_iterations": total, "objective": history,
                                        "restarts": attempt, "max_residual": worst2, "polish_steps": steps}
                if it + 1 == max(checkpoints):
                    # a fresh start reaches the polish basin far sooner than more sweeps
                    break
            if it >= stall_window and history[-1] > stall_ratio * history[-1 - stall_window]:
                break
        best = min(best, worst)
    raise NonConvergence(best, total)


def _polish(problem: _LeakageProblem, U, V, tol: float, steps: int):
    worst = float(problem.residuals(U, V).max())
    for s in range(steps):
        # inexact steps: linear error of order |r|^2 keeps the quadratic rate
        out = problem.newton_step(U, V, rtol=min(max(worst, 1e-10), 1e-3))
        if out is None:
            return None
        U, V = out
        new = float(problem.residuals(U, V).max())
        if new <= tol:
            return U, V, new, s + 1
        if s >= 4 and new > 0.5 * worst:
            return None
        worst = new
    return None


def _free_basis(rows: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis of the null space of ``rows``, or of its ``d`` least-leaking directions.

    The fallback only happens for improper subsets; the leftover leakage
    then surfaces as :class:`NonConvergence`.
    """
    n = rows.shape[1]
    if rows.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(rows)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
    return vh[min(rank, n - d):].conj().T


def _top_left(a: np.ndarray, d: int) -> np.ndarray:
    return np.linalg.svd(a, full_matrices=False)[0][:, :d]


def _matched_decoder(basis, channels, k, precoder, d):
    """Decoder in ``span(basis)`` that captures most of the desired link.

    Matched to ``H_kk V_k`` when the precoder is already fixed, otherwise to
    the strongest directions of ``H_kk``.
    """
    if basis.shape[1] == d or not channels.has(k, k, LEGIT):
        return basis[:, :d]
    h = channels.get(k, k, LEGIT)
    target = basis.conj().T @ (h if precoder is None else h @ precoder)
    return basis @ _top_left(target, d)


def _matched_precoder(basis, channels, j, decoder, d):
    """Precoder in ``span(basis)`` that delivers most power to its own LR."""
    if basis.shape[1] == d or not channels.has(j, j, LEGIT):
        return basis[:, :d]
    h = channels.get(j, j, LEGIT)
    target = (h if decoder is None else decoder.conj().T @ h) @ basis
    return basis @ _top_left(target.conj().T, d)


def _ordered_components(pairs: list, aset: AlignmentSet) -> list:
    """Strongly connected components of the owner dependency graph, in solve order.

    A precoder depends on the decoders of the LRs it serves; a decoder
    depends on the precoders whose interference it absorbs.
    """
    from graphlib import TopologicalSorter
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    nodes = sorted({("u", k) for k, _ in pairs} | {("v", j) for _, j in pairs})
    index = {n: i for i, n in enumerate(nodes)}
    src, dst = [], []
    for k, j in pairs:
        if aset.owner((k, j)) == "rx":
            src.append(index[("v", j)]); dst.append(index[("u", k)])
        else:
            src.append(index[("u", k)]); dst.append(index[("v", j)])
    n = len(nodes)
    graph = coo_matrix((np.ones(len(src)), (src, dst)), shape=(n, n)).tocsr()
    _, label = connected_components(graph, directed=True, connection="strong")
    deps = {int(c): set() for c in np.unique(label)}
    for a, b in zip(src, dst):
        if label[a] != label[b]:
            deps[int(label[b])].add(int(label[a]))
    members = {}
    for i, c in enumerate(label):
        members.setdefault(int(c), []).append(nodes[i])
    order = TopologicalSorter(deps).static_order()
    return [members[c] for c in order]


def design_gia(channels: ChannelSet, aset: AlignmentSet, config: NetworkConfig, tol: float = 1e-8,
               max_iter: int = 5000, restarts: int = 3, seed: int = 0, method: str = "ordered",
               stall_window: int = 200, stall_ratio: float = 0.999,
               polish_after: Optional[int] = 3) -> TransceiverSet:
    """Transceivers that null every pair of the alignment set.

    The core is alternating leakage minimization: each sweep sets every
    free decoder to the ``d_k`` least-interfered eigenvectors of its
    aligned interference covariance, then every free precoder to the
    ``d_j`` least-leaking eigenvectors, so ``sum ||U_k^H H_kj V_j||_F^2``
    never increases. After ``polish_after`` sweeps a Gauss-Newton
    minimum-norm polish is tried, and retried after 4x and 16x as many
    sweeps; if it still fails the run restarts (``None`` disables the
    polish). A run whose
    objective shrinks by less than ``1 - stall_ratio`` over
    ``stall_window`` sweeps is restarted, at most ``restarts`` times.

    ``method="alternating"`` runs the core on all pairs at once.
    ``method="ordered"`` first splits the problem along ownership: a
    precoder only has to null the LRs it selected and a decoder only the
    transmitters it took on. Nodes outside dependency cycles are then
    solved exactly by null-space projection, in dependency order, and
    only the cyclic cores go to the iterative core. When a null space is
    larger than needed, LT/LR nodes keep the directions that carry the
    most desired-link power (jammers take a random subspace); the direct
    channel is independent of every cross channel, so this keeps the
    constraints in general position.

    Pairs without a stored channel are trivially satisfied and skipped.
    Nodes outside the alignment set get random orthonormal transceivers,
    except that the ordered method gives links untouched by it their
    matched (dominant singular) transceivers.

    Raises
    ------
    NonConvergence
        When some aligned pair stays above ``tol``.
    """
    if method not in ("ordered", "alternating"):
        raise ValueError(f"unknown method {method!r}")
    rng = stream_rng(seed, _STREAM_INIT)
    pairs = sorted(p for p in aset.pairs if channels.has(p[0], p[1], LEGIT) and config.d[p[1]] > 0)
    pre = dict(enumerate(random_orthonormal_set(rng, zip(config.M, config.d))))
    dec = dict(enumerate(random_orthonormal_set(rng, zip(config.N_l, config.d[:config.num_links]))))
    if not pairs and method == "alternating":
        return TransceiverSet(pre, dec, info={"iterations": 0, "objective": [0.0], "restarts": 0,
                                              "max_residual": 0.0, "method": method})
    solve = dict(tol=tol, max_iter=max_iter, restarts=restarts, stall_window=stall_window,
                 stall_ratio=stall_ratio, polish_after=polish_after)
    if method == "alternating":
        problem = _LeakageProblem(channels, pairs, config)
        U, V, info = _solve_alternating(problem, rng, **solve)
        d, p = problem.unpack(U, V)
        dec.update(d)
        pre.update(p)
        return TransceiverSet(pre, dec, info={**info, "method": method})

    owned = {}
    for k, j in pairs:
        node = ("u", k) if aset.owner((k, j)) == "rx" else ("v", j)
        owned.setdefault(node, []).append((k, j))
    K = config.num_links
    done = set()
    cores, objective, iterations = 0, [], 0
    for comp in _ordered_components(pairs, aset):
        if len(comp) == 1:
            kind, n = comp[0]
            mine = owned.get(comp[0], [])
            if kind == "u":
                cols = [channels.get(n, j, LEGIT) @ pre[j] for _, j in mine]
                rows = np.hstack(cols).conj().T if cols else np.zeros((0, int(config.N_l[n])), dtype=complex)
                basis = _free_basis(rows, int(config.d[n]))
                dec[n] = _matched_decoder(basis, channels, n, pre[n] if ("v", n) in done else None, int(config.d[n]))
            else:
                rows = [dec[k].conj().T @ channels.get(k, n, LEGIT) for k, _ in mine]
                rows = np.vstack(rows) if rows else np.zeros((0, int(config.M[n])), dtype=complex)
                basis = _free_basis(rows, int(config.d[n]))
                if n < K:
                    pre[n] = _matched_precoder(basis, channels, n, dec[n] if ("u", n) in done else None,
                                               int(config.d[n]))
                else:
                    pre[n] = basis @ random_orthonormal(rng, basis.shape[1], int(config.d[n]))
            done.add(comp[0])
            continue
        members = set(comp)
        core_pairs = sorted(p for node in comp for p in owned.get(node, []))
        fixed_rx = {k: dec[k] for k, _ in core_pairs if ("u", k) not in members}
        fixed_tx = {j: pre[j] for _, j in core_pairs if ("v", j) not in members}
        problem = _LeakageProblem(channels, core_pairs, config, fixed_rx, fixed_tx)
        U, V, info = _solve_alternating(problem, rng, **solve)
        d, p = problem.unpack(U, V)
        dec.update(d)
        pre.update(p)
        done.update(comp)
        cores += 1
        objective.extend(info["objective"])
        iterations += info["total_iterations"]
    # links untouched by the alignment set: plain matched transceivers
    for n in range(K):
        if ("v", n) not in done and ("u", n) not in done and channels.has(n, n, LEGIT):
            h = channels.get(n, n, LEGIT)
            u_, _, vh = np.linalg.svd(h)
            dn = int(config.d[n])
            pre[n], dec[n] = vh[:dn].conj().T, u_[:, :dn]
    tset = TransceiverSet(pre, dec)
    worst = max((float(np.linalg.norm(dec[k].conj().T @ channels.get(k, j, LEGIT) @ pre[j])) for k, j in pairs),
                default=0.0)
    if worst > tol:
        raise NonConvergence(worst, iterations)
    return TransceiverSet(pre, dec, info={"method": method, "cores": cores, "total_iterations": iterations,
                                          "objective": objective, "max_residual": worst})


def leakage_objective_history(tset: TransceiverSet) -> list:
    return list(tset.info.get("objective", []))


# ---------------------------------------------------------------- baselines

def design_baseline(kind: str, channels: ChannelSet, topology: NetworkTopology, params: StochasticParams,
                    config: NetworkConfig, seed: int = 0, receivers=None, tol: float = 1e-8,
                    max_iter: int = 5000, aset: Optional[AlignmentSet] = None,
                    base: Optional[TransceiverSet] = None) -> TransceiverSet:
    """Reference schemes.

    CJ
        Random orthonormal LT/LR transceivers; each jammer zero-forces its
        ``m_j`` nearest in-range LRs given their decoders.
    IA
        Leakage solver on the alignment set of the jammer-free network;
        jammers silent.
    IAN
        IA plus random orthonormal jammer precoders.

    ``receivers`` limits which LRs the alignment set is built for. IA and
    IAN accept a prebuilt jammer-free ``aset`` (see :func:`ia_alignment_set`),
    and IAN can reuse an IA design passed as ``base``; both give the same
    result as rebuilding.
    """
    kind = kind.upper()
    rng = stream_rng(seed, _STREAM_BASELINE)
    K = topology.num_links
    if kind == "CJ":
        pre = dict(enumerate(random_orthonormal_set(rng, zip(config.M[:K], config.d[:K]))))
        dec = dict(enumerate(random_orthonormal_set(rng, zip(config.N_l, config.d[:K]))))
        jammers = range(K, topology.num_transmitters)
        selections = transmitter_phase(topology, params, config, transmitters=jammers)
        for j in jammers:
            targets = [k for k, _ in selections.get(j, ()) if channels.has(k, j, LEGIT)]
            rows = [dec[k].conj().T @ channels.get(k, j, LEGIT) for k in targets]
            rows = np.vstack(rows) if rows else np.zeros((0, int(config.M[j])), dtype=complex)
            pre[j] = null_space_basis(rows, int(config.d[j]), rng)
        return TransceiverSet(pre, dec, info={"kind": "CJ"})
    if kind not in ("IA", "IAN"):
        raise ValueError(f"unknown baseline {kind!r}")
    if base is None:
        if aset is None:
            aset = ia_alignment_set(topology, params, config, receivers)
        base = design_gia(channels, aset, config, tol=tol, max_iter=max_iter, seed=seed)
    tset = base
    pre = dict(tset.precoders)
    for j in range(K, topology.num_transmitters):
        m, d = int(config.M[j]), int(config.d[j])
        pre[j] = random_orthonormal(rng, m, d) if kind == "IAN" else np.zeros((m, d), dtype=complex)
    return TransceiverSet(pre, tset.lr_decoders, info={**tset.info, "kind": kind})


def ia_alignment_set(topology: NetworkTopology, params: StochasticParams, config: NetworkConfig,
                     receivers=None) -> AlignmentSet:
    """Alignment set of the network with every jammer removed."""
    K = topology.num_links
    return build_alignment_set(topology.without_jammers(), params, _drop_jammers(config, K), receivers=receivers)


def _drop_jammers(config: NetworkConfig, K: int) -> NetworkConfig:
    return NetworkConfig(M=config.M[:K], N_l=config.N_l, N_e=config.N_e, d=config.d[:K], P=config.P[:K],
                         reference_power=config.reference_power, power_ratio=config.power_ratio)


# ------------------------------------------------------------- verification

def _rank(a: np.ndarray, rank_tol: float) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0


def verify_gia_constraints(tset: TransceiverSet, channels: ChannelSet, aset: AlignmentSet,
                           config: NetworkConfig, rank_tol: float = 1e-9) -> ConstraintReport:
    """Leakage on every aligned pair, direct-link rank and jammer precoder rank."""
    residuals = {}
    for k, j in sorted(aset.pairs):
        u, v = tset.lr_decoders.get(k), tset.precoders.get(j)
        if u is None or v is None:
            residuals[(k, j)] = 0.0
            continue
        residuals[(k, j)] = float(np.linalg.norm(u.conj().T @ channels.get(k, j, LEGIT) @ v))
    direct = {}
    for k in range(config.num_links):
        u, v = tset.lr_decoders.get(k), tset.precoders.get(k)
        if u is None or v is None:
            direct[k] = False
            continue
        direct[k] = _rank(u.conj().T @ channels.get(k, k, LEGIT) @ v, rank_tol) == int(config.d[k])
    jam = {j: _rank(tset.precoders[j], rank_tol) == int(config.d[j])
           for j in range(config.num_links, config.num_transmitters) if j in tset.precoders}
    worst = max(residuals.values(), default=0.0)
    return ConstraintReport(residuals, direct, jam, worst)


def effective_alignment(tset: TransceiverSet, channels: ChannelSet, config: NetworkConfig,
                        tol: float = 1e-8, links=None) -> AlignmentSet:
    """Pairs whose interference the transceivers actually null.

    A pair counts when the channel is stored, the transmitter is active
    and the residual ``||U^H H V||_F`` is within ``tol``. Ownership is not
    recoverable from transceivers, so every pair is filed under the
    receiver.
    """
    links = range(config.num_links) if links is None else links
    rx = {}
    for k in links:
        u = tset.lr_decoders.get(k)
        if u is None:
            continue
        for j in channels.transmitters_of(k, LEGIT):
            if j == k or not tset.is_active(j):
                continue
            if np.linalg.norm(u.conj().T @ channels.get(k, j, LEGIT) @ tset.precoders[j]) <= tol:
                rx.setdefault(k, set()).add((k, j))
    return AlignmentSet.from_subsets(rx, {})
