"""First-order eigenvector updates for edge toggles and their validity heuristic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_core import Graph, SpectralBasis, canonical_pair, gft
from .graph_models import GeneratedGraph, GraphFamilyConfig, generate
from .rng import substream

GAP_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class PerturbedBasisApprox:
    vectors: np.ndarray
    source: SpectralBasis
    pairs: tuple
    signs: tuple
    valid: np.ndarray

    @property
    def values(self):
        # eigenvalues are not updated; downstream code only needs the vectors
        return self.source.values


def toggle_signs(g: Graph, pairs) -> tuple[int, ...]:
    """+1 for pairs absent from ``g`` (additions), -1 for present ones (deletions)."""
    return tuple(-1 if canonical_pair(*p) in g.edges else 1 for p in pairs)


def approx_perturbed_basis(basis: SpectralBasis, pairs, signs, normalize: bool = True,
                           scale: float = 1.0) -> PerturbedBasisApprox:
    """First-order update of every eigenvector after toggling ``pairs``.

    Each toggle adds ``sign * scale * a a^T`` with ``a = e_i - e_j`` to the
    Laplacian. The correction of ``v_k`` sums over all other eigenvectors
    except the constant one (index 0). Terms with an eigengap below 1e-12 are
    skipped and ``valid[k]`` is cleared. Columns are rescaled to unit norm.
    """
    pairs = tuple(canonical_pair(*p, basis.n) for p in pairs)
    signs = tuple(int(s) for s in signs)
    if len(signs) != len(pairs):
        raise ValueError("need one sign per pair")
    if any(s not in (-1, 1) for s in signs):
        raise ValueError("signs must be +1 or -1")
    V, lam = basis.vectors, basis.values
    n = V.shape[1]
    valid = np.ones(n, dtype=bool)
    if not pairs:
        return PerturbedBasisApprox(V, basis, pairs, signs, valid)
    idx = np.asarray(pairs)
    D = V[idx[:, 0]] - V[idx[:, 1]]
    S = D.T @ (scale * np.asarray(signs, dtype=float)[:, None] * D)
    gap = lam[None, :] - lam[:, None]  # gap[l, k] = lam_k - lam_l
    off = ~np.eye(n, dtype=bool)
    off[0, :] = False
    tiny = off & (np.abs(gap) < GAP_EPS)
    use = off & ~tiny
    C = np.zeros((n, n))
    C[use] = S[use] / gap[use]
    valid &= ~np.any(tiny, axis=0)
    Vt = V + V @ C
    if normalize:
        Vt = Vt / np.linalg.norm(Vt, axis=0)
    return PerturbedBasisApprox(Vt, basis, pairs, signs, valid)


def condition_violated(basis: SpectralBasis, pair, sign: int, k: int) -> bool:
    """Factor-4 test of whether eigenvector ``k`` (0-based) moves too much.

    Additions compare the squared endpoint difference against four times the
    gap to the next eigenvalue, deletions against the gap to the previous
    one. A missing neighbour counts as an infinite gap.
    """
    i, j = canonical_pair(*pair, basis.n)
    lam, V = basis.values, basis.vectors
    n = lam.shape[0]
    if not 0 <= k < n:
        raise ValueError(f"eigenvector index {k} outside [0, {n})")
    d2 = (V[i, k] - V[j, k]) ** 2
    if sign > 0:
        gap = lam[k + 1] - lam[k] if k + 1 < n else np.inf
    else:
        gap = lam[k] - lam[k - 1] if k > 0 else np.inf
    return bool(d2 > 4.0 * gap)


def any_violated(basis, pair, sign, ks) -> bool:
    return any(condition_violated(basis, pair, sign, int(k)) for k in ks)


def match_columns(approx: np.ndarray, exact: np.ndarray) -> np.ndarray:
    """Sign-insensitive distance from each approximate column to its best-matching exact one."""
    a = approx / np.linalg.norm(approx, axis=0)
    ip = exact.T @ a
    best = np.argmax(np.abs(ip), axis=0)
    s = np.sign(ip[best, np.arange(a.shape[1])])
    s[s == 0] = 1
    return np.linalg.norm(a - exact[:, best] * s, axis=0)


@dataclass
class ViolationStats:
    trials: int
    rates: dict
    counts: dict

    def rows(self):
        return [{"scenario": k, "trials": self.counts[k][1], "violations": self.counts[k][0],
                 "rate": self.rates[k]} for k in self.rates]


def violation_rates(cfg: GraphFamilyConfig | None = None, graphs: int = 50, pairs_per_graph: int = 10,
                    n_vectors: int = 5, seed: int = 0) -> ViolationStats:
    """Monte-Carlo frequencies of the factor-4 violation.

    Scenarios per sampled graph: an inter-cluster and an intra-cluster pair
    tested on the first ``n_vectors`` eigenvectors, and a uniformly random
    pair tested on ``n_vectors`` random eigenvectors. Toggle direction follows
    the pair's membership in the graph.
    """
    cfg = cfg or GraphFamilyConfig("PPM")
    tally = {"inter-first": [0, 0], "intra-first": [0, 0], "random-any": [0, 0]}
    has_comm = cfg.family in ("PPM", "SBM", "KARATE")
    for gi in range(graphs):
        gen: GeneratedGraph = generate(GraphFamilyConfig.from_dict({**cfg.to_dict(), "seed": gi}),
                                       substream(seed, "violation-graph", gi))
        basis = gft(gen.graph)
        n = gen.n
        rng = substream(seed, "violation-pairs", gi)
        first = range(n_vectors)
        for _ in range(pairs_per_graph):
            if has_comm:
                for key, want_same in (("inter-first", False), ("intra-first", True)):
                    while True:
                        i, j = (int(v) for v in rng.choice(n, 2, replace=False))
                        if (gen.communities[i] == gen.communities[j]) == want_same:
                            break
                    sign = -1 if (min(i, j), max(i, j)) in gen.graph.edges else 1
                    tally[key][0] += any_violated(basis, (i, j), sign, first)
                    tally[key][1] += 1
            i, j = (int(v) for v in rng.choice(n, 2, replace=False))
            ks = rng.choice(n, n_vectors, replace=False)
            sign = -1 if (min(i, j), max(i, j)) in gen.graph.edges else 1
            tally["random-any"][0] += any_violated(basis, (i, j), sign, ks)
            tally["random-any"][1] += 1
    rates = {k: (v[0] / v[1] if v[1] else float("nan")) for k, v in tally.items() if v[1]}
    counts = {k: tuple(v) for k, v in tally.items() if v[1]}
    return ViolationStats(graphs * pairs_per_graph, rates, counts)
