"""Kernel matrices over a graph sequence: Gaussian RBF with the median
heuristic and the size-3 graphlet kernel, plus kernel CSV I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, FormatError, ParameterError
from .graphs import GraphSequence, GraphSnapshot, threshold_binarize

GAUSSIAN = "gaussian"
GRAPHLET = "graphlet"
EXTERNAL = "external"

_SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class KernelMatrix:
    """n x n similarity matrix over the sequence's time indices.

    Built-in kinds keep entries in [0,1]; external matrices only need to be
    symmetric and finite. ``bandwidth`` is set for the Gaussian kind.
    """

    entries: np.ndarray
    kind: str
    bandwidth: float | None = None

    def __post_init__(self):
        k = np.asarray(self.entries, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ParameterError(f"kernel must be square, got shape {k.shape}")
        if not np.all(np.isfinite(k)):
            raise ParameterError("kernel entries must be finite")
        if not np.allclose(k, k.T, rtol=0.0, atol=_SYMMETRY_TOL):
            raise ParameterError("kernel must be symmetric")
        k = (k + k.T) / 2.0
        if self.kind in (GAUSSIAN, GRAPHLET):
            if np.any(k < -1e-12) or np.any(k > 1.0 + 1e-12):
                raise ParameterError(f"{self.kind} kernel entries must lie in [0,1]")
            k = np.clip(k, 0.0, 1.0)
        k.flags.writeable = False
        object.__setattr__(self, "entries", k)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def permuted(self, order: np.ndarray) -> "KernelMatrix":
        """Row/column relabeling by ``order`` (time permutation)."""
        return KernelMatrix(self.entries[np.ix_(order, order)], self.kind, self.bandwidth)


def _upper_triangle_vectors(seq: GraphSequence) -> np.ndarray:
    iu = np.triu_indices(seq.n_nodes, k=1)
    return np.stack([snap.adjacency[iu] for snap in seq])


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between rows of x."""
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def median_bandwidth(dist: np.ndarray) -> float:
    """Lower median of the off-diagonal (i<j) distance multiset."""
    iu = np.triu_indices(dist.shape[0], k=1)
    vals = np.sort(dist[iu])
    return float(vals[(vals.size - 1) // 2])


def gaussian_kernel(seq: GraphSequence) -> KernelMatrix:
    """k_ij = exp(-d_ij^2 / (2 sigma^2)) on upper-triangle weight vectors,
    sigma = median pairwise distance."""
    if len(seq) < 2:
        raise ParameterError("gaussian kernel needs at least two snapshots")
    x = _upper_triangle_vectors(seq)
    dist = pairwise_distances(x)
    sigma = median_bandwidth(dist)
    if sigma == 0.0:
        raise DegeneracyError(
            "degenerate kernel: median pairwise distance is zero "
            "(at least half of the snapshot pairs are identical)"
        )
    entries = np.exp(-(dist ** 2) / (2.0 * sigma * sigma))
    np.fill_diagonal(entries, 1.0)
    return KernelMatrix(entries, GAUSSIAN, bandwidth=sigma)


@dataclass(frozen=True)
class GraphletProfile:
    """Counts of the four 3-node graphlet classes over all C(N,3) triples:
    (empty, one edge, two-edge path, triangle)."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (4,) or np.any(c < 0):
            raise ParameterError("graphlet counts must be 4 non-negative integers")
        object.__setattr__(self, "counts", c)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def graphlet_profile(g: GraphSnapshot) -> GraphletProfile:
    """Exact 3-node graphlet counts from edge count, degree sequence, and
    triangle count (no triple enumeration)."""
    if g.n_nodes < 3:
        raise ParameterError("graphlet profile needs at least 3 nodes")
    if not g.is_binary:
        raise TypeError("graphlet profile requires a binary graph; threshold weighted input first")
    adj = g.adjacency
    n = g.n_nodes
    deg = adj.sum(axis=1)
    m = deg.sum() / 2.0
    cherries = (deg * (deg - 1.0)).sum() / 2.0
    triangles = ((adj @ adj) * adj).sum() / 6.0
    paths = cherries - 3.0 * triangles
    one_edge = m * (n - 2.0) - 2.0 * cherries + 3.0 * triangles
    total = n * (n - 1) * (n - 2) // 6
    empty = total - triangles - paths - one_edge
    counts = np.rint([empty, one_edge, paths, triangles]).astype(np.int64)
    if counts.sum() != total:
        raise AssertionError("graphlet counts do not sum to C(N,3)")
    return GraphletProfile(counts)


def graphlet_kernel(seq: GraphSequence) -> KernelMatrix:
    """Cosine similarity of graphlet frequency vectors; entries in [0,1]."""
    freqs = np.stack([graphlet_profile(snap).frequencies for snap in seq])
    norms = np.linalg.norm(freqs, axis=1, keepdims=True)
    unit = freqs / norms
    entries = np.clip(unit @ unit.T, 0.0, 1.0)
    np.fill_diagonal(entries, 1.0)
    return KernelMatrix(entries, GRAPHLET)


def build_kernel(seq: GraphSequence, kind: str, threshold: float = 0.5) -> KernelMatrix:
    """Dispatcher used by the CLI and segmentation: weighted sequences go to
    the graphlet kernel through |w| >= threshold binarization."""
    if kind == GAUSSIAN:
        return gaussian_kernel(seq)
    if kind == GRAPHLET:
        if not seq.is_binary:
            seq = GraphSequence([threshold_binarize(s, threshold) for s in seq])
        return graphlet_kernel(seq)
    raise ParameterError(f"unknown kernel kind {kind!r}")


# ---------------------------------------------------------------------------
# Kernel CSV (square matrix, no header)


def write_kernel(k: KernelMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in k.entries:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_kernel(path) -> KernelMatrix:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                rows.append([float(v) for v in fields])
            except ValueError:
                raise FormatError(f"non-numeric entry in {line!r}", line=ln) from None
            if len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"row has {len(rows[-1])} columns, expected {len(rows[0])}", line=ln
                )
    if not rows:
        raise FormatError("empty kernel file", line=1)
    mat = np.array(rows)
    if mat.shape[0] != mat.shape[1]:
        raise FormatError(f"kernel must be square, got {mat.shape[0]}x{mat.shape[1]}")
    if not np.all(np.isfinite(mat)):
        raise FormatError("kernel entries must be finite")
    if not np.allclose(mat, mat.T, rtol=0.0, atol=_SYMMETRY_TOL):
        ij = np.unravel_index(np.argmax(np.abs(mat - mat.T)), mat.shape)
        raise FormatError(f"kernel asymmetric at entry {ij}, tolerance {_SYMMETRY_TOL}")
    return KernelMatrix(mat, EXTERNAL)
