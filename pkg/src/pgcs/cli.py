"""Command line entry point: ``pgcs <command> ...``.

Exit status is 0 on success, 1 when any trial failed and 2 for bad
configuration or input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class _Usage(Exception):
    pass


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise _Usage(f"cannot read {path}: {e}") from e
    if not isinstance(data, dict):
        raise _Usage(f"{path}: expected a JSON object")
    return data


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_graph(a) -> int:
    from . import graph_models as gm
    from .graph_core import write_edge_list

    cfg = _load_json(a.config)
    for key in ("family", "n", "communities", "community_size", "p", "q", "radius", "attach"):
        v = getattr(a, key)
        if v is not None:
            cfg[key] = v
    cfg["seed"] = a.seed
    gen = gm.generate(gm.GraphFamilyConfig.from_dict(cfg))
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_edge_list(gen.graph, out)
    meta = gen.metadata()
    meta["seed"] = a.seed
    if a.prior_size:
        prior = gm.sample_prior_set(gen, a.prior_size, a.seed)
        meta["prior"] = [{"pair": list(p), "category": c}
                         for p, c in zip(prior.pairs, prior.categories)]
    _dump(out.with_name(out.name + ".json"), meta)
    print(f"{out}: {gen.n} nodes, {len(gen.graph)} edges")
    return EXIT_OK


def _problem(a):
    """(y, Phi, sigma, nominal graph, optional truth) from files or a generated trial."""
    from .graph_core import perturb_edges, read_edge_list
    from .sensing import load_measurements, save_measurements

    if a.generate:
        from . import graph_models as gm
        from .harness import ExperimentConfig, Trial, _graph_instance
        from .graph_core import gft
        from .rng import substream
        from .sensing import measure, sparse_spectrum_signal

        ecfg = ExperimentConfig.from_dict(_load_json(a.generate))
        d = ecfg.ds[0]
        t = Trial(0, 0, d, 0, ecfg.betas[0])
        gen, prior = _graph_instance(ecfg, 0)
        omega = gm.sample_perturbation(prior, d, substream(ecfg.seed, "omega", 0, 0, d))
        nominal = perturb_edges(gen.graph, omega)
        sig = sparse_spectrum_signal(gft(gen.graph), ecfg.s, substream(ecfg.seed, "signal", 0, 0))
        ms = measure(sig.x, ecfg.m, t.beta, substream(ecfg.seed, "measure", 0, 0, d, 0))
        out = Path(a.out)
        save_measurements(out / "measurements", ms, sig.x)
        return ms, nominal, sig.x, {"omega": [list(p) for p in omega],
                                    "prior": [list(p) for p in prior.pairs]}, gen.graph
    if not (a.graph and a.measurements):
        raise _Usage("give --graph and --measurements, or --generate")
    ms, x_true = load_measurements(a.measurements)
    return ms, read_edge_list(a.graph), x_true, {}, None


def _ges_config(a, sigma, extra):
    from .ges import GesConfig

    d = _load_json(a.config)
    d.setdefault("sigma", sigma)
    if getattr(a, "d0", None) is not None:
        d["d0"] = a.d0
    if d.get("prior") == "generated":
        d["prior"] = extra.get("prior")
    return GesConfig.from_dict(d)


def _write_result(a, res, x_true, extra, actual) -> None:
    from .ges import edge_metrics
    from .graph_core import write_edge_list
    from .sensing import rrmse, write_vector_csv

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(res.graph, out / "graph.txt")
    write_vector_csv(out / "x.csv", "x", res.x)
    trace = res.trace.to_dict() if res.trace is not None else {}
    trace.update(perturbations=[list(p) for p in res.perturbations], mu=res.mu,
                 cv_error=res.cv_error, converged=res.converged)
    if x_true is not None:
        trace["rrmse"] = rrmse(res.x, x_true)
    if "omega" in extra:
        trace["truth"] = extra["omega"]
        trace.update(edge_metrics(res.perturbations, [tuple(p) for p in extra["omega"]]))
        trace["recovered"] = res.graph.edges == actual.edges
    _dump(out / "trace.json", trace)
    print(json.dumps({k: trace[k] for k in ("perturbations", "mu", "cv_error", "rrmse")
                      if k in trace}))


def cmd_run_ges(a) -> int:
    from .ges import ges

    ms, nominal, x_true, extra, actual = _problem(a)
    cfg = _ges_config(a, ms.sigma, extra)
    res = ges(ms.y, ms.Phi, nominal, cfg)
    _write_result(a, res, x_true, extra, actual)
    return EXIT_OK if res.converged else EXIT_FAILED


def cmd_run_bfgs(a) -> int:
    from .ges import bfgs

    ms, nominal, x_true, extra, actual = _problem(a)
    cfg = _ges_config(a, ms.sigma, extra)
    res = bfgs(ms.y, ms.Phi, nominal, cfg.d0, cfg, a.max_candidates)
    _write_result(a, res, x_true, extra, actual)
    return EXIT_OK if res.converged else EXIT_FAILED


def cmd_run_ilecir(a) -> int:
    from . import ilecir
    from .imageio import read_image, write_depth_csv, write_pgm
    from .rng import substream

    cfg = _load_json(a.config)
    known = {"m", "beta", "seed", "tau", "g", "K", "grid", "mode", "method", "crop", "d0"}
    unknown = set(cfg) - known
    if unknown:
        raise _Usage(f"unknown ilecir config keys {sorted(unknown)}")
    labels = None
    if a.image == "synthetic":
        img, labels = ilecir.synthetic_image(64, 64, rng=substream(cfg.get("seed", 0), "image"))
        mode = "gray"
    else:
        img, mode = read_image(a.image)
    mode = cfg.get("mode", mode)
    if a.segmentation:
        labels = np.loadtxt(a.segmentation, delimiter=",")
    crop = bool(cfg.get("crop", a.crop))
    meas = ilecir.acquire_image(img, int(cfg.get("m", 20)), float(cfg.get("beta", 0.0)),
                                substream(cfg.get("seed", 0), "image-measure"), mode=mode,
                                crop=crop)
    truth = ilecir.crop_to_tiles(img, 8, 8) if crop else img
    if labels is not None and crop:
        labels = ilecir.crop_to_tiles(labels, 8, 8)
    icfg = ilecir.IlecirConfig(**{k: cfg[k] for k in ("tau", "g", "K", "grid") if k in cfg},
                               mode=mode)
    method = cfg.get("method", "ilecir")
    res = ilecir.reconstruct_image(meas, method, cfg=icfg, truth=truth, segmentation=labels,
                                   d0=int(cfg.get("d0", 1)), workers=a.workers)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "gray":
        write_pgm(out / "reconstruction.pgm", res.image)
    else:
        write_depth_csv(out / "reconstruction.csv", res.image)
    write_pgm(out / "edges.pgm", res.edges)
    rows = res.patch_rows()
    with open(out / "metrics.csv", "w") as fh:
        fh.write("metric,value\n")
        for k, v in res.metrics.items():
            fh.write(f"{k},{v!r}\n")
    with open(out / "patches.csv", "w") as fh:
        fh.write(",".join(rows[0]) + "\n")
        for r in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in r.values())
                     + "\n")
    print(json.dumps(res.metrics))
    return EXIT_OK


def cmd_perturb_stats(a) -> int:
    from .graph_models import GraphFamilyConfig
    from .spectral_perturb import violation_rates

    cfg = GraphFamilyConfig.from_dict(_load_json(a.config) or {"family": "PPM"})
    stats = violation_rates(cfg, a.graphs, a.pairs, a.vectors, a.seed)
    print("scenario,trials,violations,rate")
    for r in stats.rows():
        print(f"{r['scenario']},{r['trials']},{r['violations']},{r['rate']!r}")
    return EXIT_OK


def cmd_bounds(a) -> int:
    from .ges import mcv_bound_thm1, mcv_bound_thm2, mcv_bound_thm3

    if a.which == "thm1":
        v = mcv_bound_thm1(a.c, a.delta, a.grid_size, a.d0, a.n)
    elif a.which == "thm2":
        v = mcv_bound_thm2(a.c, a.delta, a.grid_size, a.n)
    else:
        v = mcv_bound_thm3(a.c, a.delta, a.grid_size, a.edges)
    print(v)
    return EXIT_OK


def cmd_sweep(a) -> int:
    from .harness import ExperimentConfig, run_sweep, write_outputs

    cfg = ExperimentConfig.load(a.config)
    out = a.out or cfg.output
    if not out:
        raise _Usage("no output directory (use --out or set 'output' in the config)")
    rows = run_sweep(cfg, a.workers)
    paths = write_outputs(out, cfg, rows)
    failed = sum(not r.ok for r in rows)
    print(f"{len(rows)} rows, {failed} failed -> {paths['metrics']}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_report(a) -> int:
    from .harness import read_metrics_csv, report, summary_csv

    rows = read_metrics_csv(a.metrics)
    text = summary_csv(report(rows))
    if a.out:
        Path(a.out).write_text(text)
    sys.stdout.write(text)
    cats = Path(a.metrics).with_name("categories.csv")
    if cats.exists() and a.categories:
        import csv
        tally: dict = {}
        with open(cats, newline="") as fh:
            for rec in csv.DictReader(fh):
                n, k = tally.get((rec["algorithm"], rec["category"]), (0, 0))
                tally[(rec["algorithm"], rec["category"])] = (n + 1, k + int(rec["detected"]))
        print("algorithm,category,detection_rate")
        for (alg, cat), (n, k) in sorted(tally.items()):
            print(f"{alg},{cat},{k / n!r}")
    return EXIT_FAILED if any(not r.ok for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pgcs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-graph", help="generate a random graph and write its edge list")
    g.add_argument("--config", help="graph family JSON")
    g.add_argument("--family")
    g.add_argument("--n", type=int)
    g.add_argument("--communities", type=int)
    g.add_argument("--community-size", dest="community_size", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--radius", type=float)
    g.add_argument("--attach", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--prior-size", type=int, default=0,
                   help="also sample a prior set of this size into the sidecar")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_graph)

    for name, func in (("run-ges", cmd_run_ges), ("run-bfgs", cmd_run_bfgs)):
        r = sub.add_parser(name, help=f"{name[4:].upper()} on one measurement set")
        r.add_argument("--graph", help="nominal graph edge list")
        r.add_argument("--measurements", help="directory with y.csv, phi.csv, sigma.csv")
        r.add_argument("--generate", help="experiment config JSON; runs its first trial")
        r.add_argument("--config", help="GES config JSON")
        r.add_argument("--d0", type=int)
        r.add_argument("--out", required=True)
        if name == "run-bfgs":
            r.add_argument("--max-candidates", type=int, default=10 ** 6)
        r.set_defaults(func=func)

    i = sub.add_parser("run-ilecir", help="patch-wise compressive image recovery")
    i.add_argument("--image", required=True, help="PGM, depth CSV, or 'synthetic'")
    i.add_argument("--segmentation", help="label CSV for the seggft method")
    i.add_argument("--config", help="JSON with m, beta, seed, tau, g, K, grid, mode, method")
    i.add_argument("--crop", action="store_true")
    i.add_argument("--workers", type=int, default=1)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_run_ilecir)

    s = sub.add_parser("perturb-stats", help="violation rates of the first-order condition")
    s.add_argument("--config", help="graph family JSON (default PPM)")
    s.add_argument("--graphs", type=int, default=50)
    s.add_argument("--pairs", type=int, default=10)
    s.add_argument("--vectors", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_perturb_stats)

    b = sub.add_parser("bounds", help="held-out row counts for the CV guarantees")
    b.add_argument("which", choices=("thm1", "thm2", "thm3"))
    b.add_argument("--c", type=float, default=2.0)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--grid-size", type=int, default=20)
    b.add_argument("--d0", type=int, default=1)
    b.add_argument("--n", type=int, default=100)
    b.add_argument("--edges", type=int, default=268, help="number of image-edge models")
    b.set_defaults(func=cmd_bounds)

    w = sub.add_parser("sweep", help="run an experiment config")
    w.add_argument("--config", required=True)
    w.add_argument("--out")
    w.add_argument("--workers", type=int)
    w.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="summarize a metrics CSV")
    rp.add_argument("metrics")
    rp.add_argument("--out")
    rp.add_argument("--categories", action="store_true",
                    help="also print detection rates per edge category")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    from .harness import ConfigError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (_Usage, ConfigError) as e:
        print(f"pgcs: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as e:
        print(f"pgcs: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
