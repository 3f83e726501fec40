"""Graph-sequence data model, GSEQ file I/O, and random-network generators."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FormatError, ParameterError

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1

ER = "er"
SBM = "sbm"
SPARSE_SBM = "sparse_sbm"
DCSBM_DEGREE = "dcsbm_degree"
DCSBM_HUB = "dcsbm_hub"
DCSBM_BLOCK = "dcsbm_block"
RGG = "rgg"
ERGM = "ergm"

MODELS = (ER, SBM, SPARSE_SBM, DCSBM_DEGREE, DCSBM_HUB, DCSBM_BLOCK, RGG, ERGM)


def substream(seed: int, index: int) -> np.random.Generator:
    """Counter-based PRNG substream (Philox) keyed by (seed, index).

    Snapshot t uses index t (1-based); index 0 is reserved for
    sequence-level draws such as DCSBM degree parameters.
    """
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class GraphSnapshot:
    """One network observation: a symmetric weighted adjacency matrix.

    Weight 0 means no edge; binary graphs use weights in {0, 1}. The
    diagonal is identically 0.
    """

    n_nodes: int
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=float)
        if adj.shape != (self.n_nodes, self.n_nodes):
            raise ParameterError(
                f"adjacency shape {adj.shape} does not match n_nodes={self.n_nodes}"
            )
        if not np.all(np.isfinite(adj)):
            raise ParameterError("adjacency contains non-finite weights")
        if not np.array_equal(adj, adj.T):
            raise ParameterError("adjacency must be symmetric")
        if np.any(np.diagonal(adj) != 0):
            raise ParameterError("adjacency diagonal must be zero")
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)

    @property
    def is_binary(self) -> bool:
        a = self.adjacency
        return bool(np.all((a == 0) | (a == 1)))

    def edge_count(self) -> int:
        return int(np.count_nonzero(self.adjacency) // 2)


class GraphSequence:
    """Ordered snapshots sharing a node set; immutable after construction."""

    def __init__(self, snapshots: Sequence[GraphSnapshot]):
        snapshots = tuple(snapshots)
        if not snapshots:
            raise ParameterError("a sequence needs at least one snapshot")
        n_nodes = snapshots[0].n_nodes
        for idx, snap in enumerate(snapshots):
            if snap.n_nodes != n_nodes:
                raise ParameterError(
                    f"snapshot {idx} has n_nodes={snap.n_nodes}, expected {n_nodes}"
                )
        self._snapshots = snapshots
        self.n_nodes = n_nodes

    def __len__(self) -> int:
        return len(self._snapshots)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return GraphSequence(self._snapshots[idx])
        return self._snapshots[idx]

    def __iter__(self):
        return iter(self._snapshots)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphSequence):
            return NotImplemented
        return len(self) == len(other) and all(
            np.array_equal(a.adjacency, b.adjacency) for a, b in zip(self, other)
        )

    @property
    def is_binary(self) -> bool:
        return all(s.is_binary for s in self._snapshots)


# ---------------------------------------------------------------------------
# Generator parameter records


@dataclass(frozen=True)
class ERParams:
    p: float

    def validate(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"edge probability must be in [0,1], got {self.p}")


@dataclass(frozen=True)
class SBMParams:
    """Block connectivity matrix; nodes are split into contiguous balanced
    blocks, remainder nodes going to the last block."""

    block_matrix: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.block_matrix, dtype=float)
        object.__setattr__(self, "block_matrix", lam)

    def validate(self):
        lam = self.block_matrix
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ParameterError("block matrix must be square")
        if np.any(lam < 0) or np.any(lam > 1):
            raise ParameterError("block matrix entries must be in [0,1]")

    @staticmethod
    def homogeneous(k: int, p_within: float, p_across: float) -> "SBMParams":
        lam = np.full((k, k), p_across, dtype=float)
        np.fill_diagonal(lam, p_within)
        return SBMParams(lam)


@dataclass(frozen=True)
class DCSBMParams:
    """Degree-corrected SBM: Pr(edge i,j) = theta_i * theta_j * Lambda[z_i, z_j].

    ``theta=None`` requests LogNormal(0, 0.25) degree parameters normalized
    to mean one, drawn once per sequence from the reserved substream.
    """

    block_matrix: np.ndarray
    theta: np.ndarray | None = None

    def __post_init__(self):
        lam = np.asarray(self.block_matrix, dtype=float)
        object.__setattr__(self, "block_matrix", lam)
        if self.theta is not None:
            object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))

    def validate(self):
        SBMParams(self.block_matrix).validate()
        if self.theta is not None and np.any(self.theta <= 0):
            raise ParameterError("degree parameters must be positive")


@dataclass(frozen=True)
class RGGParams:
    radius: float

    def validate(self):
        if not 0.0 < self.radius:
            raise ParameterError(f"connection radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class ERGMParams:
    """Edge + triangle ERGM sampled by a single-site Gibbs chain."""

    edge: float
    triangle: float
    burnin_factor: int = 20

    def validate(self):
        if self.burnin_factor < 1:
            raise ParameterError("burnin_factor must be >= 1")


_PARAM_TYPES = {
    ER: ERParams,
    SBM: SBMParams,
    SPARSE_SBM: SBMParams,
    DCSBM_DEGREE: DCSBMParams,
    DCSBM_HUB: DCSBMParams,
    DCSBM_BLOCK: DCSBMParams,
    RGG: RGGParams,
    ERGM: ERGMParams,
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Full recipe for one random sequence: model, size, change point, seed.

    Snapshots 1..tau are drawn from ``params``, snapshots tau+1..n from
    ``post_change_params`` (defaults to ``params``). Draws are independent
    across t and fully reproducible from ``seed``.
    """

    model: str
    n_nodes: int
    n: int
    params: object
    seed: int
    tau: int | None = None
    post_change_params: object | None = None

    def validate(self):
        if self.model not in MODELS:
            raise ParameterError(f"unknown model {self.model!r}")
        if self.n_nodes < 1:
            raise ParameterError("n_nodes must be positive")
        if self.n < 1:
            raise ParameterError("sequence length must be positive")
        if self.tau is not None and not 1 <= self.tau < self.n:
            raise ParameterError(f"tau must satisfy 1 <= tau < n, got {self.tau}")
        want = _PARAM_TYPES[self.model]
        for rec in (self.params, self.post_change_params):
            if rec is None:
                continue
            if not isinstance(rec, want):
                raise ParameterError(
                    f"model {self.model} expects {want.__name__}, got {type(rec).__name__}"
                )
            rec.validate()


# ---------------------------------------------------------------------------
# Samplers


def contiguous_blocks(n_nodes: int, k: int) -> np.ndarray:
    """Community labels: K contiguous balanced blocks, remainder in the last."""
    size = n_nodes // k
    labels = np.repeat(np.arange(k), size)
    return np.concatenate([labels, np.full(n_nodes - size * k, k - 1, dtype=int)])


def lognormal_theta(n_nodes: int, rng: np.random.Generator) -> np.ndarray:
    """LogNormal(0, 0.25) degree parameters normalized to mean exactly one."""
    y = rng.lognormal(mean=0.0, sigma=0.25, size=n_nodes)
    return y / y.mean()


def _sample_from_prob_matrix(prob: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = prob.shape[0]
    iu = np.triu_indices(n, k=1)
    edges = rng.random(iu[0].size) < prob[iu]
    adj = np.zeros((n, n))
    adj[iu] = edges
    return adj + adj.T


def _sample_er(params: ERParams, n_nodes: int, rng) -> np.ndarray:
    return _sample_from_prob_matrix(np.full((n_nodes, n_nodes), params.p), rng)


def _sample_sbm(params: SBMParams, n_nodes: int, rng) -> np.ndarray:
    z = contiguous_blocks(n_nodes, params.block_matrix.shape[0])
    return _sample_from_prob_matrix(params.block_matrix[np.ix_(z, z)], rng)


def _sample_dcsbm(params: DCSBMParams, n_nodes: int, rng, theta: np.ndarray) -> tuple[np.ndarray, int]:
    z = contiguous_blocks(n_nodes, params.block_matrix.shape[0])
    prob = np.outer(theta, theta) * params.block_matrix[np.ix_(z, z)]
    iu = np.triu_indices(n_nodes, k=1)
    clamped = int(np.count_nonzero(prob[iu] > 1.0))
    return _sample_from_prob_matrix(np.clip(prob, 0.0, 1.0), rng), clamped


def _sample_rgg(params: RGGParams, n_nodes: int, rng) -> np.ndarray:
    pos = rng.random((n_nodes, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    adj = (dist <= params.radius).astype(float)
    np.fill_diagonal(adj, 0.0)
    return adj


def rgg_default_radius(n_nodes: int) -> float:
    """Radius 0.9 * sqrt(log(N) / (pi * N)), just below the RGG connectivity
    threshold."""
    return 0.9 * math.sqrt(math.log(n_nodes) / (math.pi * n_nodes))


def _sample_ergm(params: ERGMParams, n_nodes: int, rng) -> np.ndarray:
    """Fresh single-site Gibbs chain: resample one uniformly chosen dyad per
    step from its full conditional, burn-in ``burnin_factor * N**2`` steps.

    The conditional log-odds of dyad (i,j) being present is
    edge_coef + triangle_coef * (#common neighbors of i and j).
    """
    n_steps = params.burnin_factor * n_nodes * n_nodes
    iu, ju = np.triu_indices(n_nodes, k=1)
    n_dyads = iu.size
    # start near the triangle-free stationary density
    p0 = 1.0 / (1.0 + math.exp(-params.edge))
    adj = np.zeros((n_nodes, n_nodes))
    init = rng.random(n_dyads) < p0
    adj[iu, ju] = init
    adj += adj.T

    picks = rng.integers(0, n_dyads, size=n_steps)
    unif = rng.random(n_steps)
    for step in range(n_steps):
        d = picks[step]
        i = iu[d]
        j = ju[d]
        common = adj[i] @ adj[j]  # zero diagonal keeps i,j terms out
        logit = params.edge + params.triangle * common
        p_on = 1.0 / (1.0 + math.exp(-logit))
        val = 1.0 if unif[step] < p_on else 0.0
        adj[i, j] = val
        adj[j, i] = val
    return adj


def generate_sequence(spec: GeneratorSpec) -> GraphSequence:
    """Draw the sequence described by ``spec``; bit-identical for equal specs."""
    spec.validate()
    pre = spec.params
    post = spec.post_change_params if spec.post_change_params is not None else pre

    theta_pre = theta_post = None
    if spec.model in (DCSBM_DEGREE, DCSBM_HUB, DCSBM_BLOCK):
        shared = None
        if pre.theta is None or post.theta is None:
            shared = lognormal_theta(spec.n_nodes, substream(spec.seed, 0))
        theta_pre = pre.theta if pre.theta is not None else shared
        theta_post = post.theta if post.theta is not None else shared
        for th in (theta_pre, theta_post):
            if th.shape != (spec.n_nodes,):
                raise ParameterError("theta length must equal n_nodes")

    tau = spec.tau if spec.tau is not None else spec.n
    snapshots = []
    clamped_total = 0
    for t in range(1, spec.n + 1):
        rng = substream(spec.seed, t)
        params = pre if t <= tau else post
        if spec.model == ER:
            adj = _sample_er(params, spec.n_nodes, rng)
        elif spec.model in (SBM, SPARSE_SBM):
            adj = _sample_sbm(params, spec.n_nodes, rng)
        elif spec.model in (DCSBM_DEGREE, DCSBM_HUB, DCSBM_BLOCK):
            theta = theta_pre if t <= tau else theta_post
            adj, clamped = _sample_dcsbm(params, spec.n_nodes, rng, theta)
            clamped_total += clamped
        elif spec.model == RGG:
            adj = _sample_rgg(params, spec.n_nodes, rng)
        else:
            adj = _sample_ergm(params, spec.n_nodes, rng)
        snapshots.append(GraphSnapshot(spec.n_nodes, adj))
    if clamped_total:
        logger.warning(
            "DCSBM edge probabilities clamped to [0,1] for %d dyad draws", clamped_total
        )
    return GraphSequence(snapshots)


def threshold_binarize(g: GraphSnapshot, cutoff: float = 0.5) -> GraphSnapshot:
    """Edge iff |weight| >= cutoff; used to feed weighted graphs to the
    graphlet kernel."""
    if not cutoff > 0:
        raise ParameterError(f"cutoff must be positive, got {cutoff}")
    return GraphSnapshot(g.n_nodes, (np.abs(g.adjacency) >= cutoff).astype(float))


# ---------------------------------------------------------------------------
# GSEQ v1 text format


def write_sequence(seq: GraphSequence, path) -> None:
    """Write GSEQ v1: header, then per snapshot a `T <t> <m>` line and m
    `<i> <j> <w>` edge lines with 0-based i < j."""
    flavor = "binary" if seq.is_binary else "weighted"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"GSEQ 1 {len(seq)} {seq.n_nodes} {flavor}\n")
        for t, snap in enumerate(seq, start=1):
            iu = np.triu_indices(snap.n_nodes, k=1)
            weights = snap.adjacency[iu]
            present = np.nonzero(weights)[0]
            fh.write(f"T {t} {present.size}\n")
            for idx in present:
                w = weights[idx]
                wtxt = "1" if flavor == "binary" else repr(float(w))
                fh.write(f"{iu[0][idx]} {iu[1][idx]} {wtxt}\n")


def read_sequence(path) -> GraphSequence:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise FormatError("missing header", line=1)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "GSEQ" or head[1] != "1":
        raise FormatError(f"malformed header {lines[0]!r}", line=1)
    try:
        n, n_nodes = int(head[2]), int(head[3])
    except ValueError:
        raise FormatError(f"non-integer sizes in header {lines[0]!r}", line=1) from None
    if head[4] not in ("binary", "weighted"):
        raise FormatError(f"unknown flavor {head[4]!r}", line=1)
    if n < 1 or n_nodes < 1:
        raise FormatError("header sizes must be positive", line=1)

    snapshots = []
    ln = 1
    for t in range(1, n + 1):
        ln += 1
        if ln > len(lines):
            raise FormatError(f"expected snapshot line 'T {t} <m>', got end of file", line=ln)
        parts = lines[ln - 1].split()
        if len(parts) != 3 or parts[0] != "T":
            raise FormatError(f"expected snapshot line 'T {t} <m>', got {lines[ln-1]!r}", line=ln)
        try:
            t_read, m = int(parts[1]), int(parts[2])
        except ValueError:
            raise FormatError(f"non-integer snapshot line {lines[ln-1]!r}", line=ln) from None
        if t_read != t:
            raise FormatError(f"snapshot index {t_read}, expected {t}", line=ln)
        if m < 0:
            raise FormatError("negative edge count", line=ln)
        adj = np.zeros((n_nodes, n_nodes))
        for _ in range(m):
            ln += 1
            if ln > len(lines):
                raise FormatError("unexpected end of file inside snapshot", line=ln)
            fields = lines[ln - 1].split()
            if len(fields) != 3:
                raise FormatError(f"expected '<i> <j> <w>', got {lines[ln-1]!r}", line=ln)
            try:
                i, j = int(fields[0]), int(fields[1])
                w = float(fields[2])
            except ValueError:
                raise FormatError(f"malformed edge line {lines[ln-1]!r}", line=ln) from None
            if not 0 <= i < n_nodes or not 0 <= j < n_nodes:
                raise FormatError(
                    f"node index out of range [0, {n_nodes}) in {lines[ln-1]!r}", line=ln
                )
            if i >= j:
                raise FormatError(f"edge endpoints must satisfy i < j, got {i} >= {j}", line=ln)
            if not math.isfinite(w):
                raise FormatError("non-finite weight", line=ln)
            adj[i, j] = adj[j, i] = w
        snapshots.append(GraphSnapshot(n_nodes, adj))
    if ln != len(lines) and any(s.strip() for s in lines[ln:]):
        raise FormatError("trailing content after last snapshot", line=ln + 1)
    return GraphSequence(snapshots)
