"""Graphs, Laplacians, graph Fourier bases and edge-toggle algebra."""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

Pair = tuple[int, int]


class GFTError(RuntimeError):
    """Eigendecomposition of a graph Laplacian failed."""


def canonical_pair(i, j, n: int | None = None) -> Pair:
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"self-loop ({i}, {j}) is not a valid node pair")
    if i > j:
        i, j = j, i
    if i < 0 or (n is not None and j >= n):
        raise ValueError(f"pair ({i}, {j}) out of range for n={n}")
    return (i, j)


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted simple graph on nodes ``0..n-1``."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        edges = frozenset(canonical_pair(i, j, self.n) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable) -> "Graph":
        return cls(n, frozenset(canonical_pair(i, j, n) for i, j in pairs))

    @classmethod
    def from_adjacency(cls, W) -> "Graph":
        W = np.asarray(W)
        iu, ju = np.nonzero(np.triu(W, 1))
        return cls(W.shape[0], frozenset(zip(iu.tolist(), ju.tolist())))

    def __len__(self):
        return len(self.edges)

    def __contains__(self, pair) -> bool:
        return canonical_pair(*pair) in self.edges

    def sorted_edges(self) -> list[Pair]:
        return sorted(self.edges)

    def key(self) -> str:
        """Stable hash of the sorted edge list, used as a GFT cache key."""
        h = hashlib.sha1(str(self.n).encode())
        if self.edges:
            h.update(np.asarray(self.sorted_edges(), dtype=np.int64).tobytes())
        return h.hexdigest()

    def adjacency(self) -> np.ndarray:
        W = np.zeros((self.n, self.n), dtype=np.int64)
        if self.edges:
            e = np.asarray(self.sorted_edges())
            W[e[:, 0], e[:, 1]] = 1
            W[e[:, 1], e[:, 0]] = 1
        return W

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def complement(self) -> "Graph":
        all_pairs = {(i, j) for i in range(self.n) for j in range(i + 1, self.n)}
        return Graph(self.n, frozenset(all_pairs - self.edges))

    def n_components(self) -> int:
        from scipy.sparse.csgraph import connected_components

        return int(connected_components(self.adjacency(), directed=False)[0])


def all_pairs(n: int) -> list[Pair]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian ``D - W`` as an integer matrix."""
    W = g.adjacency()
    return np.diag(W.sum(axis=1)) - W


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Laplacian eigenpairs; columns of ``vectors`` are eigenvectors, eigenvalues ascend."""

    vectors: np.ndarray
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def transform(self, x) -> np.ndarray:
        return self.vectors.T @ np.asarray(x, dtype=float)

    def inverse(self, theta) -> np.ndarray:
        return self.vectors @ np.asarray(theta, dtype=float)


def canonicalize_signs(V: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def basis_from_laplacian(L, label: str = "") -> SpectralBasis:
    L = np.asarray(L, dtype=float)
    try:
        values, vectors = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise GFTError(f"eigendecomposition failed for graph {label}: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise GFTError(f"non-finite eigenvalues for graph {label}")
    vectors = canonicalize_signs(vectors)
    vectors.setflags(write=False)
    values.setflags(write=False)
    return SpectralBasis(vectors, values)


def gft(g: Graph) -> SpectralBasis:
    """Graph Fourier basis of ``g``.

    Eigenvector signs are canonical; inside numerically degenerate eigenvalue
    clusters the basis is an arbitrary orthonormal one, so comparisons between
    bases must be made on eigenspace projectors.
    """
    return basis_from_laplacian(laplacian(g), label=g.key())


def eigen_projectors(basis: SpectralBasis, rtol: float = 1e-9) -> list[tuple[float, np.ndarray]]:
    """Group eigenvalues into clusters and return ``(mean eigenvalue, projector)`` per cluster."""
    lam, V = basis.values, basis.vectors
    tol = rtol * max(1.0, float(lam[-1]))
    out = []
    start = 0
    for k in range(1, len(lam) + 1):
        if k == len(lam) or lam[k] - lam[k - 1] > tol:
            Vc = V[:, start:k]
            out.append((float(lam[start:k].mean()), Vc @ Vc.T))
            start = k
    return out


class GFTCache:
    """Thread-safe LRU cache of spectral bases keyed by edge-set hash."""

    def __init__(self, maxsize: int = 2048):
        self.maxsize = maxsize
        self._lock = threading.Lock()
        self._store: OrderedDict[str, SpectralBasis] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._store)

    def get(self, g: Graph) -> SpectralBasis:
        key = g.key()
        with self._lock:
            basis = self._store.get(key)
            if basis is not None:
                self.hits += 1
                self._store.move_to_end(key)
                return basis
            self.misses += 1
        basis = gft(g)
        with self._lock:
            basis = self._store.setdefault(key, basis)
            self._store.move_to_end(key)
            if len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return basis


def perturb_edges(g: Graph, pairs: Iterable) -> Graph:
    """Toggle each pair: present edges are removed, absent ones added."""
    edges = set(g.edges)
    for i, j in pairs:
        e = canonical_pair(i, j, g.n)
        if e in edges:
            edges.remove(e)
        else:
            edges.add(e)
    return Graph(g.n, frozenset(edges))


def _edge_set(x) -> frozenset:
    return x.edges if isinstance(x, Graph) else frozenset(canonical_pair(*p) for p in x)


def perturbation_distance(a, b) -> int:
    """Size of the symmetric difference of two edge sets (or graphs)."""
    return len(_edge_set(a) ^ _edge_set(b))


def toggled_pairs(a, b) -> list[Pair]:
    """Sorted pairs whose membership differs between ``a`` and ``b``."""
    return sorted(_edge_set(a) ^ _edge_set(b))


def write_edge_list(g: Graph, path) -> None:
    lines = [f"n {g.n}"] + [f"{i} {j}" for i, j in g.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Graph:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n "):
        raise ValueError(f"{path}: edge list must start with 'n <count>'")
    n = int(lines[0].split()[1])
    pairs = []
    for ln in lines[1:]:
        i, j = ln.split()
        pairs.append((int(i), int(j)))
    return Graph.from_pairs(n, pairs)
