"""Seeded experiment sweeps over graph families, perturbation counts and noise levels.

Every trial derives its random draws from substreams keyed by the master
seed and the trial coordinates, so rows do not depend on worker count or
execution order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import graph_models as gm
from .graph_core import GFTCache, gft, perturb_edges
from .ges import GesConfig, bfgs, edge_metrics, ges
from .rng import substream
from .sensing import band_limited_signal, measure, rrmse, sparse_spectrum_signal
from .solver import lasso_cv

GRAPH_ALGORITHMS = ("GES", "GES-AE", "BFGS", "NGFT", "AGFT")
IMAGE_ALGORITHMS = ("ILECIR", "DCT", "SegGFT", "GraphTV", "GraphTV-ILECIR")
_IMAGE_METHOD = {"ILECIR": "ilecir", "DCT": "dct", "SegGFT": "seggft", "GraphTV": "tv",
                 "GraphTV-ILECIR": "tv-ilecir"}
_GES_KEYS = {"tau", "g", "grid", "K", "eigens", "mu_reuse"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One sweep. JSON round-trips through :meth:`to_dict` / :meth:`from_dict`.

    ``d0=None`` means twice the number of true perturbations. ``ges`` holds
    overrides for :class:`GesConfig` (``tau``, ``g``, ``grid``, ``K``,
    ``eigens``, ``mu_reuse``). ``images`` lists PGM/CSV paths, or the word
    ``synthetic`` for a generated piece-wise polynomial image.
    """

    experiment: str = "sweep"
    seed: int = 0
    graph: dict = field(default_factory=lambda: {"family": "PPM"})
    graphs: int = 5
    signals: int = 5
    s: int = 5
    m: int = 50
    betas: tuple = (0.0,)
    ds: tuple = (1, 2)
    d0: int | None = None
    prior_size: int = 100
    restrict_to_prior: bool = True
    signal: str = "sparse"
    algorithms: tuple = ("GES", "NGFT", "AGFT")
    ges: dict = field(default_factory=dict)
    bfgs_max_candidates: int = 10 ** 6
    images: tuple = ()
    image_m: int = 20
    image_algorithms: tuple = ("ILECIR", "DCT")
    image_size: int = 64
    output: str | None = None

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        self.ds = tuple(int(d) for d in self.ds)
        self.algorithms = tuple(self.algorithms)
        self.images = tuple(self.images)
        self.image_algorithms = tuple(self.image_algorithms)
        self.validate()

    def validate(self):
        try:
            self.family_config()
            self.ges_config(1, 0.0, None)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        if self.graphs < 0 or self.signals < 0:
            raise ConfigError("trial counts must be non-negative")
        if self.s < 1 or self.m < 1:
            raise ConfigError("s and m must be positive")
        if any(b < 0 for b in self.betas) or any(d < 0 for d in self.ds):
            raise ConfigError("betas and ds must be non-negative")
        if self.d0 is not None and self.d0 < 0:
            raise ConfigError("d0 must be non-negative")
        if self.signal not in ("sparse", "band"):
            raise ConfigError(f"signal must be 'sparse' or 'band', not {self.signal!r}")
        bad = set(self.algorithms) - set(GRAPH_ALGORITHMS)
        if bad:
            raise ConfigError(f"unknown algorithms {sorted(bad)}")
        bad = set(self.image_algorithms) - set(IMAGE_ALGORITHMS)
        if bad:
            raise ConfigError(f"unknown image algorithms {sorted(bad)}")
        if self.prior_size < max(self.ds, default=0):
            raise ConfigError("prior set smaller than the largest d")
        unknown = set(self.ges) - _GES_KEYS
        if unknown:
            raise ConfigError(f"unknown ges keys {sorted(unknown)}")

    def family_config(self) -> gm.GraphFamilyConfig:
        return gm.GraphFamilyConfig.from_dict(self.graph)

    def d0_for(self, d: int) -> int:
        return 2 * d if self.d0 is None else self.d0

    def ges_config(self, d: int, sigma: float, prior) -> GesConfig:
        return GesConfig(d0=self.d0_for(d), sigma=sigma, prior=prior, **self.ges)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("betas", "ds", "algorithms", "images", "image_algorithms"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


METRIC_COLUMNS = ("experiment", "trial", "seed", "graph", "signal", "algorithm", "d", "beta",
                  "rrmse", "recovered", "detected", "spurious", "missed", "status", "error")
SUMMARY_COLUMNS = ("algorithm", "d", "beta", "rows", "failed", "rrmse_mean", "rrmse_std",
                   "recovered_fraction", "detected_mean", "spurious_mean")


@dataclass
class MetricsRow:
    experiment: str
    trial: str
    seed: int
    graph: int
    signal: int
    algorithm: str
    d: int
    beta: float
    rrmse: float = math.nan
    recovered: bool = False
    detected: int = 0
    spurious: int = 0
    missed: int = 0
    status: str = "ok"
    error: str = ""
    runtime: float = 0.0
    categories: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class Trial:
    graph: int
    signal: int
    d: int
    beta_index: int
    beta: float

    @property
    def tag(self) -> str:
        return f"g{self.graph}-s{self.signal}-d{self.d}-b{self.beta_index}"


def trials(cfg: ExperimentConfig) -> list[Trial]:
    return [Trial(g, j, d, bi, b) for g in range(cfg.graphs) for j in range(cfg.signals)
            for d in cfg.ds for bi, b in enumerate(cfg.betas)]


def _graph_instance(cfg: ExperimentConfig, g: int):
    gen = gm.generate(cfg.family_config(), substream(cfg.seed, "graph", g))
    prior = gm.sample_prior_set(gen, cfg.prior_size, substream(cfg.seed, "prior", g))
    return gen, prior


def run_trial(cfg: ExperimentConfig, t: Trial) -> list[MetricsRow]:
    """All requested algorithms on one (graph, signal, d, beta) draw."""

    def row(alg, **kw):
        return MetricsRow(cfg.experiment, t.tag, cfg.seed, t.graph, t.signal, alg, t.d, t.beta,
                          **kw)

    try:
        gen, prior = _graph_instance(cfg, t.graph)
        omega = gm.sample_perturbation(prior, t.d, substream(cfg.seed, "omega", t.graph,
                                                             t.signal, t.d))
        actual = gen.graph
        nominal = perturb_edges(actual, omega)
        basis = gft(actual)
        draw = sparse_spectrum_signal if cfg.signal == "sparse" else band_limited_signal
        sig = draw(basis, cfg.s, substream(cfg.seed, "signal", t.graph, t.signal))
        ms = measure(sig.x, cfg.m, t.beta,
                     substream(cfg.seed, "measure", t.graph, t.signal, t.d, t.beta_index))
    except Exception as e:  # noqa: BLE001 - any failure becomes a failed row
        return [row(a, status="failed", error=f"{type(e).__name__}: {e}")
                for a in cfg.algorithms]

    truth = {p for p in omega}
    cache = GFTCache()
    out = []
    for alg in cfg.algorithms:
        t0 = time.perf_counter()
        try:
            if alg in ("NGFT", "AGFT"):
                g = nominal if alg == "NGFT" else actual
                res = lasso_cv(ms.y, ms.Phi, cache.get(g), K=cfg.ges.get("K", 5),
                               grid=cfg.ges.get("grid", GesConfig().grid))
                est = () if alg == "NGFT" else tuple(omega)
                x = res.x
            else:
                gcfg = cfg.ges_config(t.d, ms.sigma,
                                      prior.pairs if cfg.restrict_to_prior else None)
                if alg == "BFGS":
                    res = bfgs(ms.y, ms.Phi, nominal, gcfg.d0, gcfg, cfg.bfgs_max_candidates)
                else:
                    mode = "approx" if alg == "GES-AE" else gcfg.eigens
                    gcfg = GesConfig.from_dict({**gcfg.to_dict(), "eigens": mode})
                    res = ges(ms.y, ms.Phi, nominal, gcfg, cache=cache)
                est = res.perturbations
                x = res.x
            em = edge_metrics(est, truth)
            # toggling a pair twice cancels, so compare graphs rather than pair sets
            recovered = perturb_edges(nominal, est).edges == actual.edges
            cats = [{"pair": list(p), "category": gen.category(p), "detected": p in set(est)}
                    for p in omega]
            out.append(row(alg, rrmse=rrmse(x, sig.x), recovered=recovered,
                           runtime=time.perf_counter() - t0, categories=cats, **em))
        except Exception as e:  # noqa: BLE001
            out.append(row(alg, status="failed", error=f"{type(e).__name__}: {e}",
                           runtime=time.perf_counter() - t0))
    return out


def run_image_trial(cfg: ExperimentConfig, index: int) -> list[MetricsRow]:
    from . import ilecir
    from .imageio import read_image

    spec = cfg.images[index]
    tag = f"img{index}"

    def row(alg, **kw):
        return MetricsRow(cfg.experiment, tag, cfg.seed, index, 0, alg, 0, cfg.betas[0], **kw)

    try:
        labels = None
        if spec == "synthetic":
            img, labels = ilecir.synthetic_image(cfg.image_size, cfg.image_size,
                                                 rng=substream(cfg.seed, "image", index))
            mode = "gray"
        else:
            img, mode = read_image(spec)
            seg = Path(spec).with_suffix(".labels.csv")
            if seg.exists():
                labels = np.loadtxt(seg, delimiter=",")
        meas = ilecir.acquire_image(img, cfg.image_m, cfg.betas[0],
                                    substream(cfg.seed, "image-measure", index), mode=mode,
                                    crop=True)
        truth = ilecir.crop_to_tiles(img, 8, 8)
        if labels is not None:
            labels = ilecir.crop_to_tiles(labels, 8, 8)
        bank = ilecir.EdgeModelBank(8, 8)
    except Exception as e:  # noqa: BLE001
        return [row(a, status="failed", error=f"{type(e).__name__}: {e}")
                for a in cfg.image_algorithms]
    out = []
    for alg in cfg.image_algorithms:
        t0 = time.perf_counter()
        try:
            icfg = ilecir.IlecirConfig(mode=mode, **{k: v for k, v in cfg.ges.items()
                                                     if k in ("tau", "g", "K", "grid")})
            res = ilecir.reconstruct_image(meas, _IMAGE_METHOD[alg], bank, icfg, truth=truth,
                                           segmentation=labels)
            out.append(row(alg, rrmse=res.metrics["rrmse"], runtime=time.perf_counter() - t0))
        except Exception as e:  # noqa: BLE001
            out.append(row(alg, status="failed", error=f"{type(e).__name__}: {e}",
                           runtime=time.perf_counter() - t0))
    return out


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("PGCS_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError as e:
            raise ConfigError(f"PGCS_THREADS={env!r} is not an integer") from e
    return cap if requested is None else max(1, min(requested, cap))


def _job(args):
    cfg, kind, item = args
    return run_trial(cfg, item) if kind == "graph" else run_image_trial(cfg, item)


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[MetricsRow]:
    """Every trial of ``cfg``; rows come back in trial order regardless of ``workers``."""
    jobs = [(cfg, "graph", t) for t in trials(cfg)]
    jobs += [(cfg, "image", i) for i in range(len(cfg.images))]
    n = worker_count(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(n, len(jobs))) as pool:
            parts = list(pool.map(_job, jobs))
    else:
        parts = [_job(j) for j in jobs]
    return [r for p in parts for r in p]


# tables

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def metrics_csv(rows) -> str:
    # runtime is kept out so that repeated runs give byte-identical files
    return _csv(METRIC_COLUMNS, ([getattr(r, c) for c in METRIC_COLUMNS] for r in rows))


def timings_csv(rows) -> str:
    return _csv(("trial", "algorithm", "runtime"),
                ((r.trial, r.algorithm, round(r.runtime, 6)) for r in rows))


def category_rows(rows) -> list[tuple]:
    return [(r.trial, r.algorithm, r.d, r.beta, "-".join(map(str, c["pair"])), c["category"],
             c["detected"]) for r in rows if r.ok for c in r.categories]


def categories_csv(rows) -> str:
    return _csv(("trial", "algorithm", "d", "beta", "pair", "category", "detected"),
                category_rows(rows))


def read_metrics_csv(path) -> list[MetricsRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(MetricsRow(
                rec["experiment"], rec["trial"], int(rec["seed"]), int(rec["graph"]),
                int(rec["signal"]), rec["algorithm"], int(rec["d"]), float(rec["beta"]),
                float(rec["rrmse"]), rec["recovered"] == "1", int(rec["detected"]),
                int(rec["spurious"]), int(rec["missed"]), rec["status"], rec["error"]))
    return out


def _std(v) -> float:
    return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def report(rows) -> list[dict]:
    """Per (algorithm, d, beta) summary rows, sorted by that key.

    Failed rows are counted but left out of the means.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("empty metrics table")
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.algorithm, r.d, r.beta), []).append(r)
    out = []
    for key in sorted(groups):
        grp = groups[key]
        good = [r for r in grp if r.ok]
        err = sorted(r.rrmse for r in good)  # order-free sums
        nan = math.nan
        out.append({
            "algorithm": key[0], "d": key[1], "beta": key[2], "rows": len(grp),
            "failed": len(grp) - len(good),
            "rrmse_mean": float(np.mean(err)) if good else nan,
            "rrmse_std": _std(err) if good else nan,
            "recovered_fraction": sum(r.recovered for r in good) / len(good) if good else nan,
            "detected_mean": float(np.mean(sorted(r.detected for r in good))) if good else nan,
            "spurious_mean": float(np.mean(sorted(r.spurious for r in good))) if good else nan,
        })
    return out


def summary_csv(summary) -> str:
    return _csv(SUMMARY_COLUMNS, ([s[c] for c in SUMMARY_COLUMNS] for s in summary))


def category_rates(rows) -> dict:
    """Detection rate of true perturbations per (algorithm, category)."""
    tally: dict = {}
    for _, alg, _, _, _, cat, hit in category_rows(rows):
        n, k = tally.get((alg, cat), (0, 0))
        tally[(alg, cat)] = (n + 1, k + int(hit))
    return {key: k / n for key, (n, k) in sorted(tally.items())}


def write_outputs(directory, cfg: ExperimentConfig, rows) -> dict:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": d / "metrics.csv", "timings": d / "timings.csv",
             "categories": d / "categories.csv", "summary": d / "summary.csv",
             "config": d / "config.json"}
    paths["metrics"].write_text(metrics_csv(rows))
    paths["timings"].write_text(timings_csv(rows))
    paths["categories"].write_text(categories_csv(rows))
    if rows:
        paths["summary"].write_text(summary_csv(report(rows)))
    paths["config"].write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return paths
