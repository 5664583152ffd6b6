"""Seeded random graph families, edge categories and perturbation sampling."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import numpy as np

from .graph_core import Graph, Pair, all_pairs, canonical_pair
from .rng import as_generator

FAMILIES = ("PPM", "SBM", "ER", "RGG", "BA", "KARATE")

# Zachary's karate club, 34 members, 78 friendships.
KARATE_EDGES: tuple[Pair, ...] = (
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10),
    (0, 11), (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2),
    (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30), (2, 3),
    (2, 7), (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7),
    (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16), (6, 16),
    (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33),
    (15, 32), (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33),
    (22, 32), (22, 33), (23, 25), (23, 27), (23, 29), (23, 32), (23, 33),
    (24, 25), (24, 27), (24, 31), (25, 31), (26, 29), (26, 33), (27, 33),
    (28, 31), (28, 33), (29, 32), (29, 33), (30, 32), (30, 33), (31, 32),
    (31, 33), (32, 33),
)
# Faction after the split: 0 = instructor's club, 1 = administrator's club.
KARATE_CLUBS: tuple[int, ...] = (
    0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0,
    0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
)


@dataclass(frozen=True)
class GraphFamilyConfig:
    """Parameters of one graph family.

    Only the fields relevant to ``family`` are used: PPM uses
    ``communities``/``community_size``/``p``/``q``; SBM uses ``sizes``/``p``/``q``;
    ER uses ``p``; RGG uses ``radius``; BA uses ``attach``. ``n`` is derived for
    PPM, SBM and KARATE.
    """

    family: str = "PPM"
    n: int = 100
    communities: int = 5
    community_size: int = 20
    sizes: tuple = ()
    p: float = 0.9
    q: float = 0.01
    radius: float = 0.27
    attach: int = 10
    seed: int = 0

    def __post_init__(self):
        fam = self.family.upper()
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if fam == "PPM":
            object.__setattr__(self, "n", self.communities * self.community_size)
        elif fam == "SBM":
            object.__setattr__(self, "n", sum(self.sizes))
        elif fam == "KARATE":
            object.__setattr__(self, "n", 34)
        self.validate()

    def validate(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown graph family {self.family!r}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if self.family == "PPM" and (self.communities < 1 or self.community_size < 1):
            raise ValueError("PPM needs positive community count and size")
        if self.family == "SBM" and (not self.sizes or min(self.sizes) < 1):
            raise ValueError("SBM needs positive community sizes")
        if self.family == "RGG" and not 0.0 < self.radius < np.sqrt(2.0):
            raise ValueError(f"RGG radius {self.radius} outside (0, sqrt 2)")
        if self.family == "BA" and not 1 <= self.attach < self.n:
            raise ValueError(f"BA attachment count {self.attach} must be in [1, n)")
        if self.n < 2:
            raise ValueError("graph needs at least two nodes")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GraphFamilyConfig":
        d = dict(d)
        if "sizes" in d:
            d["sizes"] = tuple(d["sizes"])
        return cls(**d)


def category_names(family: str) -> tuple[str, ...]:
    family = family.upper()
    if family in ("ER", "RGG"):
        return ("present", "absent")
    if family in ("PPM", "SBM", "KARATE"):
        return ("present-intra", "present-inter", "absent-intra", "absent-inter")
    if family == "BA":
        return tuple(f"{s}-{d}" for s in ("present", "absent")
                     for d in ("low-low", "high-high", "low-high"))
    raise ValueError(f"unknown graph family {family!r}")


@dataclass(frozen=True, eq=False)
class GeneratedGraph:
    """A sampled graph with the side information its edge categories need."""

    graph: Graph
    config: GraphFamilyConfig
    communities: np.ndarray | None = None
    coords: np.ndarray | None = None
    high_degree: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.graph.n

    def category(self, pair) -> str:
        i, j = canonical_pair(*pair, self.n)
        presence = "present" if (i, j) in self.graph.edges else "absent"
        fam = self.config.family
        if fam in ("ER", "RGG"):
            return presence
        if fam == "BA":
            hi, hj = bool(self.high_degree[i]), bool(self.high_degree[j])
            kind = "high-high" if hi and hj else ("low-low" if not (hi or hj) else "low-high")
            return f"{presence}-{kind}"
        same = self.communities[i] == self.communities[j]
        return f"{presence}-{'intra' if same else 'inter'}"

    def metadata(self) -> dict:
        counts = {c: 0 for c in category_names(self.config.family)}
        for pair in all_pairs(self.n):
            counts[self.category(pair)] += 1
        meta = {"config": self.config.to_dict(), "n": self.n,
                "edge_count": len(self.graph), "category_counts": counts}
        if self.communities is not None:
            meta["communities"] = self.communities.tolist()
        if self.coords is not None:
            meta["coords"] = self.coords.tolist()
        return meta


def _block_graph(labels: np.ndarray, p: float, q: float, rng) -> Graph:
    n = labels.shape[0]
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(labels[iu] == labels[ju], p, q)
    keep = rng.random(iu.shape[0]) < prob
    return Graph(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))


def _barabasi_albert(n: int, r: int, rng) -> Graph:
    # star on r + 1 nodes, then preferential attachment of r edges per new node
    edges = {(0, k) for k in range(1, r + 1)}
    ends = [0] * r + list(range(1, r + 1))
    for new in range(r + 1, n):
        targets: set[int] = set()
        while len(targets) < r:
            targets.add(ends[int(rng.integers(len(ends)))])
        for t in sorted(targets):
            edges.add((t, new))
            ends.extend((t, new))
    return Graph(n, frozenset(edges))


def generate(cfg: GraphFamilyConfig, rng=None) -> GeneratedGraph:
    """Sample a graph from ``cfg``; ``rng`` defaults to a stream seeded by ``cfg.seed``."""
    rng = as_generator(cfg.seed if rng is None else rng)
    fam = cfg.family
    if fam == "PPM":
        labels = np.repeat(np.arange(cfg.communities), cfg.community_size)
        return GeneratedGraph(_block_graph(labels, cfg.p, cfg.q, rng), cfg, communities=labels)
    if fam == "SBM":
        labels = np.repeat(np.arange(len(cfg.sizes)), cfg.sizes)
        return GeneratedGraph(_block_graph(labels, cfg.p, cfg.q, rng), cfg, communities=labels)
    if fam == "ER":
        labels = np.zeros(cfg.n, dtype=int)
        return GeneratedGraph(_block_graph(labels, cfg.p, cfg.p, rng), cfg)
    if fam == "RGG":
        pts = rng.random((cfg.n, 2))
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        iu, ju = np.nonzero(np.triu(d <= cfg.radius, 1))
        g = Graph(cfg.n, frozenset(zip(iu.tolist(), ju.tolist())))
        return GeneratedGraph(g, cfg, coords=pts)
    if fam == "BA":
        g = _barabasi_albert(cfg.n, cfg.attach, rng)
        deg = g.degrees()
        return GeneratedGraph(g, cfg, high_degree=deg > np.median(deg))
    g = Graph.from_pairs(34, KARATE_EDGES)
    return GeneratedGraph(g, cfg, communities=np.asarray(KARATE_CLUBS))


@dataclass(frozen=True)
class PriorSet:
    """Pool of potentially faulty node pairs with their category labels."""

    pairs: tuple = ()
    categories: tuple = ()
    category_order: tuple = field(default=(), compare=False)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def counts(self) -> dict[str, int]:
        out = {c: 0 for c in self.category_order}
        for c in self.categories:
            out[c] = out.get(c, 0) + 1
        return out


def _quotas(available: list[int], size: int) -> list[int]:
    # equal split, remainder and deficits handed out round-robin
    k = len(available)
    quota = [0] * k
    remaining = size
    while remaining > 0:
        open_ = [c for c in range(k) if quota[c] < available[c]]
        if not open_:
            break
        for c in open_:
            if remaining == 0:
                break
            quota[c] += 1
            remaining -= 1
    return quota


def sample_prior_set(gen: GeneratedGraph, size: int = 100, rng=0) -> PriorSet:
    """Draw ``size`` distinct pairs with category counts as equal as availability allows."""
    n = gen.n
    total = n * (n - 1) // 2
    if size < 0 or size > total:
        raise ValueError(f"prior set size {size} must be in [0, {total}]")
    rng = as_generator(rng)
    names = category_names(gen.config.family)
    buckets: dict[str, list[Pair]] = {c: [] for c in names}
    for pair in all_pairs(n):
        buckets[gen.category(pair)].append(pair)
    quota = _quotas([len(buckets[c]) for c in names], size)
    chosen: list[tuple[Pair, str]] = []
    for c, k in zip(names, quota):
        if k:
            idx = rng.choice(len(buckets[c]), size=k, replace=False)
            chosen.extend((buckets[c][i], c) for i in sorted(idx.tolist()))
    chosen.sort()
    return PriorSet(tuple(p for p, _ in chosen), tuple(c for _, c in chosen), names)


def sample_perturbation(prior, d: int, rng=0) -> tuple[Pair, ...]:
    """Draw ``d`` distinct pairs uniformly from ``prior`` (order of the draw preserved)."""
    pairs = list(prior)
    if d < 0 or d > len(pairs):
        raise ValueError(f"cannot draw {d} perturbations from a pool of {len(pairs)}")
    if d == 0:
        return ()
    rng = as_generator(rng)
    idx = rng.choice(len(pairs), size=d, replace=False)
    return tuple(pairs[i] for i in idx.tolist())


def expected_edge_count(cfg: GraphFamilyConfig) -> float:
    """Expected edge count of the block families (PPM/SBM/ER)."""
    n = cfg.n
    if cfg.family == "ER":
        return cfg.p * n * (n - 1) / 2
    if cfg.family in ("PPM", "SBM"):
        sizes = cfg.sizes if cfg.family == "SBM" else (cfg.community_size,) * cfg.communities
        intra = sum(s * (s - 1) // 2 for s in sizes)
        return cfg.p * intra + cfg.q * (n * (n - 1) // 2 - intra)
    raise ValueError(f"no closed form for {cfg.family}")


def ppm(seed: int = 0, communities: int = 5, size: int = 20, p: float = 0.9, q: float = 0.01):
    return GraphFamilyConfig("PPM", communities=communities, community_size=size, p=p, q=q, seed=seed)


__all__ = [
    "FAMILIES", "GraphFamilyConfig", "GeneratedGraph", "PriorSet", "category_names",
    "generate", "sample_prior_set", "sample_perturbation", "expected_edge_count", "ppm",
    "KARATE_EDGES", "KARATE_CLUBS",
]
