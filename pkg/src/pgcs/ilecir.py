"""Patch-wise compressive image recovery with inferred linear image edges.

An image is cut into non-overlapping ``h x w`` patches, each flattened in
row-major order and measured with one shared Gaussian matrix. A patch is
decoded with the DCT (the lattice-graph GFT) and, unless the DCT fit already
reaches the noise floor, with the GFT of every lattice graph split by a
straight line between two boundary pixels. The best split is kept only if it
beats the DCT cross-validation error by the factor ``tau``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .ges import GesConfig, ges, noise_floor
from .graph_core import GFTCache, Graph, SpectralBasis, gft
from .rng import as_generator
from .sensing import cv_row_count, noise_sigma, rrmse
from .solver import (MU_GRID, FoldOperators, TvFoldOperators, best_mu, check_grid,
                     scan_at_mu)

BANK_VERSION = 1
ON_LINE_TOL = 1e-9


# lattice and DCT

def lattice(h: int, w: int) -> Graph:
    """4-neighbour grid on ``h x w`` pixels; node ``(r, c)`` is ``r * w + c``."""
    if h < 1 or w < 1:
        raise ValueError("patch dimensions must be positive")
    edges = []
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if c + 1 < w:
                edges.append((i, i + 1))
            if r + 1 < h:
                edges.append((i, i + w))
    return Graph(h * w, frozenset(edges))


def _path_basis(n: int):
    k = np.arange(n)
    i = np.arange(n)
    U = np.sqrt(2.0 / n) * np.cos(np.pi * np.outer(i + 0.5, k) / n)
    U[:, 0] = 1.0 / np.sqrt(n)
    return U, 2.0 - 2.0 * np.cos(np.pi * k / n)


def dct_basis(h: int, w: int) -> SpectralBasis:
    """Separable 2-D DCT-II atoms as lattice Laplacian eigenvectors, eigenvalues ascending."""
    if h < 1 or w < 1:
        raise ValueError("patch dimensions must be positive")
    Ur, lr = _path_basis(h)
    Uc, lc = _path_basis(w)
    V = np.kron(Ur, Uc)
    lam = (lr[:, None] + lc[None, :]).ravel()
    order = np.argsort(lam, kind="stable")
    V = np.ascontiguousarray(V[:, order])
    lam = lam[order]
    V.setflags(write=False)
    lam.setflags(write=False)
    return SpectralBasis(V, lam)


# linear image edges

def boundary_pixels(h: int, w: int) -> list[int]:
    return [r * w + c for r in range(h) for c in range(w)
            if r in (0, h - 1) or c in (0, w - 1)]


@dataclass(frozen=True)
class LinearImageEdge:
    """Straight line through the centres of two boundary pixels ``a`` and ``b``."""

    h: int
    w: int
    a: int
    b: int

    def sides(self) -> np.ndarray:
        """True where ``(b - a) x (p - a) >= -1e-9``; on-line pixels go to the positive side."""
        r = np.arange(self.h * self.w) // self.w
        c = np.arange(self.h * self.w) % self.w
        ar, ac = divmod(self.a, self.w)
        br, bc = divmod(self.b, self.w)
        cross = (bc - ac) * (r - ar) - (br - ar) * (c - ac)
        return cross >= -ON_LINE_TOL

    def dropped(self) -> tuple:
        s = self.sides()
        return tuple(sorted(e for e in lattice(self.h, self.w).edges if s[e[0]] != s[e[1]]))


def partition_graph(lat: Graph, dropped) -> Graph:
    """Lattice minus the given edges."""
    if isinstance(dropped, LinearImageEdge):
        dropped = dropped.dropped()
    return Graph(lat.n, lat.edges - frozenset(dropped))


def segmentation_drops(lat: Graph, labels) -> tuple:
    labels = np.asarray(labels).ravel()
    return tuple(sorted(e for e in lat.edges if labels[e[0]] != labels[e[1]]))


@dataclass(frozen=True, eq=False)
class PatchEdgeModel:
    edge: LinearImageEdge
    dropped: tuple
    graph: Graph
    basis: SpectralBasis


def enumerate_linear_edges(h: int, w: int, cache: GFTCache | None = None):
    """Distinct edge models from all boundary-pixel pairs, in endpoint order.

    Lines that cut no lattice edge are skipped, and a line whose cut set
    equals an earlier one's is folded into it. Returns ``(models, line_map)``
    where ``line_map`` sends every retained raw line to its model index.
    """
    if h < 2 or w < 2:
        raise ValueError("need at least a 2 x 2 patch")
    lat = lattice(h, w)
    cache = cache if cache is not None else GFTCache()
    models: list[PatchEdgeModel] = []
    seen: dict = {}
    line_map = {}
    for a, b in combinations(boundary_pixels(h, w), 2):
        e = LinearImageEdge(h, w, a, b)
        drop = e.dropped()
        if not drop:
            continue
        if drop not in seen:
            g = partition_graph(lat, drop)
            seen[drop] = len(models)
            models.append(PatchEdgeModel(e, drop, g, cache.get(g)))
        else:
            cache.get(partition_graph(lat, drop))
        line_map[(a, b)] = seen[drop]
    return models, line_map


class EdgeModelBank:
    """DCT basis plus all linear-edge models for one patch size, optionally disk-cached."""

    def __init__(self, h: int = 8, w: int = 8, cache_dir=None):
        self.h, self.w = h, w
        self.lattice = lattice(h, w)
        self.dct = dct_basis(h, w)
        self.gft_cache = GFTCache()
        path = self._path(cache_dir)
        if path is not None and path.exists():
            try:
                self._load(path)
                return
            except (OSError, ValueError, KeyError):
                pass
        self.models, self.line_map = enumerate_linear_edges(h, w, self.gft_cache)
        if path is not None:
            self._save(path)

    def __len__(self):
        return len(self.models)

    def _path(self, cache_dir):
        if cache_dir is None:
            cache_dir = os.environ.get("PGCS_CACHE")
        if not cache_dir:
            return None
        return Path(cache_dir) / f"edge_models_{self.h}x{self.w}_v{BANK_VERSION}.npz"

    def _save(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        ends = np.array([[m.edge.a, m.edge.b] for m in self.models], dtype=np.int64)
        drops = [np.asarray(m.dropped, dtype=np.int64).reshape(-1, 2) for m in self.models]
        lines = np.array([[a, b, i] for (a, b), i in self.line_map.items()], dtype=np.int64)
        np.savez(path, version=BANK_VERSION, h=self.h, w=self.w, ends=ends,
                 drop_sizes=np.array([len(d) for d in drops]),
                 drops=np.concatenate(drops), lines=lines,
                 vectors=np.stack([m.basis.vectors for m in self.models]),
                 values=np.stack([m.basis.values for m in self.models]))

    def _load(self, path: Path):
        z = np.load(path)
        if int(z["version"]) != BANK_VERSION or int(z["h"]) != self.h or int(z["w"]) != self.w:
            raise ValueError("stale edge-model cache")
        splits = np.cumsum(z["drop_sizes"])[:-1]
        self.models = []
        for (a, b), d, V, lam in zip(z["ends"], np.split(z["drops"], splits), z["vectors"],
                                     z["values"]):
            drop = tuple(map(tuple, d.tolist()))
            V = V.copy()
            lam = lam.copy()
            V.setflags(write=False)
            lam.setflags(write=False)
            self.models.append(PatchEdgeModel(LinearImageEdge(self.h, self.w, int(a), int(b)),
                                              drop, partition_graph(self.lattice, drop),
                                              SpectralBasis(V, lam)))
        self.line_map = {(int(a), int(b)): int(i) for a, b, i in z["lines"]}


# patches and measurements

def image_to_patches(img, h: int, w: int) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    H, W = img.shape
    if H % h or W % w:
        raise ValueError(f"image {H}x{W} is not tileable by {h}x{w} patches")
    return img.reshape(H // h, h, W // w, w).transpose(0, 2, 1, 3).reshape(-1, h * w)


def patches_to_image(patches, H: int, W: int, h: int, w: int) -> np.ndarray:
    P = np.asarray(patches)
    return P.reshape(H // h, W // w, h, w).transpose(0, 2, 1, 3).reshape(H, W)


def crop_to_tiles(img, h: int, w: int) -> np.ndarray:
    H, W = np.shape(img)
    return np.asarray(img)[: H - H % h, : W - W % w]


def clip(x, mode: str = "gray") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if mode == "gray":
        return np.rint(np.clip(x, 0.0, 255.0))
    if mode == "depth":
        return np.maximum(x, 0.0)
    if mode == "none":
        return x
    raise ValueError(f"unknown value mode {mode!r}")


@dataclass(frozen=True, eq=False)
class ImageMeasurements:
    Phi: np.ndarray
    Y: np.ndarray
    sigmas: np.ndarray
    shape: tuple
    h: int = 8
    w: int = 8
    mode: str = "gray"


def acquire_image(img, m: int, beta: float = 0.0, rng=0, h: int = 8, w: int = 8,
                  mode: str = "gray", crop: bool = False) -> ImageMeasurements:
    """Measure every patch with one ``m x hw`` Gaussian matrix plus per-patch noise."""
    img = np.asarray(img, dtype=float)
    if crop:
        img = crop_to_tiles(img, h, w)
    X = image_to_patches(img, h, w)
    rng = as_generator(rng)
    Phi = rng.standard_normal((m, h * w))
    clean = X @ Phi.T
    sigmas = np.array([noise_sigma(c, beta) for c in clean])
    noise = rng.standard_normal(clean.shape)
    Y = clean + sigmas[:, None] * noise
    return ImageMeasurements(Phi, Y, sigmas, img.shape, h, w, mode)


# metrics

def ssim(a, b, data_range: float | None = None, sigma: float = 1.5, K1: float = 0.01,
         K2: float = 0.03) -> float:
    """Mean SSIM with an 11 x 11 Gaussian window (sigma 1.5), borders excluded."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if data_range is None:
        data_range = 255.0
    trunc = 3.5
    pad = int(trunc * sigma + 0.5)
    if min(a.shape) < 2 * pad + 1:
        raise ValueError(f"images must be at least {2 * pad + 1} pixels on each side")

    def filt(z):
        return gaussian_filter(z, sigma, truncate=trunc, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    va = filt(a * a) - mu_a * mu_a
    vb = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    C1 = (K1 * data_range) ** 2
    C2 = (K2 * data_range) ** 2
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a ** 2 + mu_b ** 2 + C1) * (va + vb + C2)
    S = num / den
    return float(S[pad:-pad, pad:-pad].mean())


def image_range(truth, mode: str) -> float:
    if mode == "depth":
        t = np.asarray(truth, dtype=float)
        return float(t.max() - t.min()) or 1.0
    return 255.0


def edge_map(shape, h: int, w: int, drops_per_patch) -> np.ndarray:
    """White (255) at the right or bottom pixel of every dropped lattice edge."""
    H, W = shape
    tiles = np.zeros((H // h * (W // w), h * w), dtype=np.uint8)
    for p, drops in enumerate(drops_per_patch):
        for i, j in drops:
            tiles[p, max(i, j)] = 255
    return patches_to_image(tiles, H, W, h, w).astype(np.uint8)


# per-patch decoding

@dataclass(frozen=True)
class IlecirConfig:
    tau: float = 0.99
    g: float = 3.0
    K: int = 5
    grid: tuple = MU_GRID
    mode: str = "gray"

    def __post_init__(self):
        object.__setattr__(self, "grid", check_grid(self.grid))
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau={self.tau} outside (0, 1]")
        if self.mode not in ("gray", "depth", "none"):
            raise ValueError(f"unknown value mode {self.mode!r}")


@dataclass
class PatchResult:
    patch: np.ndarray
    model: int | None
    dropped: tuple
    mu: float
    cv_error: float
    base_error: float
    base_mu: float


class PatchDecoder:
    """Fold operators for the DCT and every edge model under one shared Phi.

    ``solver="tv"`` swaps the sparse decoder for graph-TV recovery on the
    lattice and on each partitioned graph.
    """

    def __init__(self, Phi, bank: EdgeModelBank, cfg: IlecirConfig = IlecirConfig(),
                 solver: str = "lasso"):
        self.Phi = np.asarray(Phi, dtype=float)
        self.bank = bank
        self.cfg = cfg
        self.solver = solver
        self.m = self.Phi.shape[0]
        self.m_cv = cv_row_count(self.m, cfg.K)
        if solver == "lasso":
            self.base = FoldOperators(self.Phi, bank.dct.vectors, cfg.K)
            self._build = lambda mdl: FoldOperators(self.Phi, mdl.basis.vectors, cfg.K)
        elif solver == "tv":
            self.base = TvFoldOperators(self.Phi, bank.lattice, cfg.K)
            self._build = lambda mdl: TvFoldOperators(self.Phi, mdl.graph, cfg.K)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        self._ops = {}

    def model_ops(self, i: int):
        ops = self._ops.get(i)
        if ops is None:
            ops = self._ops[i] = self._build(self.bank.models[i])
        return ops

    def prepare(self):
        for i in range(len(self.bank)):
            self.model_ops(i)
        return self

    def base_only(self, y) -> PatchResult:
        errs, _ = self.base.grid_errors(y, self.cfg.grid)
        mu = best_mu(errs)
        x = self.base.refit(y, mu, self.cfg.grid)[0]
        return PatchResult(self._shape(x), None, (), mu, errs[mu], errs[mu], mu)

    def decode(self, y, sigma: float = 0.0, mapper=map) -> PatchResult:
        cfg = self.cfg
        y = np.asarray(y, dtype=float)
        errs, _ = self.base.grid_errors(y, cfg.grid)
        mu_b = best_mu(errs)
        e_b = errs[mu_b]
        ops, mu, err, model = self.base, mu_b, e_b, None
        if e_b > noise_floor(self.m_cv, sigma, cfg.g):
            res = scan_at_mu(y, mu_b, range(len(self.bank)), self.model_ops, cfg.tau * e_b,
                             mapper, self.base.fold_signals(y, mu_b))
            i = min(range(len(res)), key=lambda k: (res[k][0], k))
            if res[i][0] < cfg.tau * e_b:
                model, ops, err = i, res[i][1], res[i][0]
                errs_i, _ = ops.grid_errors(y, cfg.grid)
                mu_i = best_mu(errs_i)
                if errs_i[mu_i] < err:
                    mu, err = mu_i, errs_i[mu_i]
        x = ops.refit(y, mu, cfg.grid)[0]
        drops = self.bank.models[model].dropped if model is not None else ()
        return PatchResult(self._shape(x), model, drops, mu, err, e_b, mu_b)

    def _shape(self, x):
        return clip(x, self.cfg.mode).reshape(self.bank.h, self.bank.w)


def ilecir_patch(y, Phi, bank: EdgeModelBank | None = None, cfg: IlecirConfig = IlecirConfig(),
                 sigma: float = 0.0) -> PatchResult:
    bank = bank or EdgeModelBank()
    return PatchDecoder(Phi, bank, cfg).decode(y, sigma)


def seg_gft_patch(y, Phi, labels, h: int = 8, w: int = 8, cfg: IlecirConfig = IlecirConfig(),
                  cache: GFTCache | None = None) -> PatchResult:
    """LASSO-CV in the GFT of the lattice split along a known segmentation."""
    lat = lattice(h, w)
    drops = segmentation_drops(lat, labels)
    g = partition_graph(lat, drops)
    basis = cache.get(g) if cache is not None else gft(g)
    ops = FoldOperators(Phi, basis.vectors, cfg.K)
    res = ops.lasso_cv(y, cfg.grid)
    patch = clip(res.x, cfg.mode).reshape(h, w)
    return PatchResult(patch, None, drops, res.mu, res.error, res.error, res.mu)


def seg_gft_baseline(y, Phi, labels, cfg: IlecirConfig = IlecirConfig(), h: int = 8, w: int = 8):
    return seg_gft_patch(y, Phi, labels, h, w, cfg).patch


def ges_patch(y, Phi, sigma: float, d0: int, h: int = 8, w: int = 8,
              cfg: IlecirConfig = IlecirConfig(), cache: GFTCache | None = None) -> PatchResult:
    """Greedy edge selection on the lattice, restricted to deleting lattice edges."""
    lat = lattice(h, w)
    gcfg = GesConfig(d0=d0, tau=cfg.tau, g=cfg.g, grid=cfg.grid, K=cfg.K, sigma=sigma,
                     prior=tuple(lat.sorted_edges()))
    res = ges(y, Phi, lat, gcfg, cache=cache)
    drops = tuple(sorted(p for p in res.perturbations if p in lat.edges))
    patch = clip(res.x, cfg.mode).reshape(h, w)
    return PatchResult(patch, None, drops, res.mu, res.cv_error, res.trace.initial_error,
                       res.trace.initial_mu)


# whole images

METHODS = ("ilecir", "dct", "seggft", "tv", "tv-ilecir", "ges")


@dataclass
class ImageResult:
    image: np.ndarray
    edges: np.ndarray
    patches: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def patch_rows(self) -> list[dict]:
        return [{"patch": p, "model": -1 if r.model is None else r.model,
                 "dropped": len(r.dropped), "mu": r.mu, "cv_error": r.cv_error,
                 "base_cv_error": r.base_error} for p, r in enumerate(self.patches)]


def reconstruct_image(meas: ImageMeasurements, method: str = "ilecir",
                      bank: EdgeModelBank | None = None, cfg: IlecirConfig | None = None,
                      truth=None, segmentation=None, d0: int = 1, workers: int = 1) -> ImageResult:
    """Decode every patch, stitch the image and the edge map, and score against ``truth``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    cfg = cfg or IlecirConfig(mode=meas.mode)
    h, w = meas.h, meas.w
    H, W = meas.shape
    n_patches = (H // h) * (W // w)
    if meas.Y.shape[0] != n_patches:
        raise ValueError(f"{meas.Y.shape[0]} measurement rows for {n_patches} patches")
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    mapper = pool.map if pool is not None else map
    try:
        if method in ("ilecir", "dct", "tv", "tv-ilecir"):
            bank = bank or EdgeModelBank(h, w)
            dec = PatchDecoder(meas.Phi, bank, cfg, "tv" if method.startswith("tv") else "lasso")
            if method in ("ilecir", "tv-ilecir"):
                dec.prepare()
                work = lambda p: dec.decode(meas.Y[p], meas.sigmas[p])
            else:
                work = lambda p: dec.base_only(meas.Y[p])
        elif method == "seggft":
            if segmentation is None:
                raise ValueError("seggft needs a segmentation label image")
            seg = image_to_patches(segmentation, h, w)
            cache = GFTCache()
            work = lambda p: seg_gft_patch(meas.Y[p], meas.Phi, seg[p], h, w, cfg, cache)
        else:
            cache = GFTCache()
            work = lambda p: ges_patch(meas.Y[p], meas.Phi, meas.sigmas[p], d0, h, w, cfg, cache)
        results = list(mapper(work, range(n_patches)))
    finally:
        if pool is not None:
            pool.shutdown()
    img = patches_to_image(np.stack([r.patch.ravel() for r in results]), H, W, h, w)
    emap = edge_map((H, W), h, w, [r.dropped for r in results])
    out = ImageResult(img, emap, results)
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        out.metrics = {"rrmse": rrmse(img, truth),
                       "ssim": ssim(img, truth, image_range(truth, cfg.mode))}
    return out


# synthetic piece-wise polynomial images

def _border_point(rng, H, W):
    t = rng.random() * 2 * (H + W)
    if t < W:
        return np.array([0.0, t])
    if t < W + H:
        return np.array([t - W, W])
    if t < 2 * W + H:
        return np.array([H, 2 * W + H - t])
    return np.array([2 * (W + H) - t, 0.0])


def line_labels(H: int, W: int, lines) -> np.ndarray:
    """Region label per pixel from the side pattern of each ``(p0, p1)`` line (row, col points)."""
    r, c = np.mgrid[0:H, 0:W].astype(float)
    code = np.zeros((H, W), dtype=np.int64)
    for k, (p0, p1) in enumerate(lines):
        (r0, c0), (r1, c1) = p0, p1
        cross = (c1 - c0) * (r - r0) - (r1 - r0) * (c - c0)
        code |= (cross >= 0).astype(np.int64) << k
    _, labels = np.unique(code, return_inverse=True)
    return labels.reshape(H, W)


def synthetic_image(H: int = 64, W: int = 64, n_lines: int = 3, degree: int = 1, rng=0,
                    slope: float = 0.6):
    """Piece-wise polynomial image: regions cut by random straight lines.

    Each region gets intensity ``c + sum a_ij r^i c^j`` (total degree up to
    ``degree``) with a base level drawn in [30, 225] and gentle slopes.
    Returns ``(image, labels)`` with the image rounded to [0, 255].
    """
    rng = as_generator(rng)
    lines = [(_border_point(rng, H, W), _border_point(rng, H, W)) for _ in range(n_lines)]
    labels = line_labels(H, W, lines)
    r, c = np.mgrid[0:H, 0:W].astype(float)
    rn, cn = r / H - 0.5, c / W - 0.5
    img = np.zeros((H, W))
    for lab in range(labels.max() + 1):
        mask = labels == lab
        val = np.full((H, W), rng.uniform(30, 225))
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                if i + j:
                    val += slope * 100 * rng.uniform(-1, 1) * rn ** i * cn ** j / (i + j)
        img[mask] = val[mask]
    return np.rint(np.clip(img, 0, 255)), labels


def two_region_image(H: int, W: int, p0, p1, low: float = 60.0, high: float = 190.0):
    """Two constant regions separated by the line through ``p0`` and ``p1`` (row, col)."""
    labels = line_labels(H, W, [(p0, p1)])
    return np.where(labels == 1, high, low).astype(float), labels
