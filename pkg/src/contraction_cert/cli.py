"""Command line entry point: contraction-cert <subcommand> ..."""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import config, euler, verify
from .errors import CertError, ConfigError, VerificationFailed
from .metric import ConcaveDistance, Metric


def _threads(args):
    if args.threads:
        return args.threads
    return verify.default_threads()


def _dump(obj):
    print(json.dumps(obj, indent=2, default=float))


def _write_metric(metric, info, paths):
    os.makedirs(os.path.dirname(paths["metric_csv"]) or ".", exist_ok=True)
    metric.base.to_csv(paths["metric_csv"])
    f = metric.base
    top = max(f.r2 * 1.5, 1e-12)
    rs = np.linspace(0.0, top, 401)
    with open(paths["plot_csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "f"])
        for r in rs:
            w.writerow([repr(float(r)), repr(float(f(r)))])
    out = {k: v for k, v in info.items() if k != "build"}
    out["knots_csv_path"] = paths["metric_csv"]
    out["jump_a"] = f.a
    out.setdefault("lyapunov_weight", metric.lyapunov_weight)
    if metric.lyapunov_weight > 0:
        out["lyapunov_V"] = "quadratic"
    with open(paths["rate_json"], "w") as fh:
        json.dump(out, fh, indent=2, default=float)
    return out


def load_metric(path):
    """Metric from a rate JSON (pointing at its knots CSV) or a knots CSV directly."""
    if path is None:
        return Metric(ConcaveDistance.identity())
    if path.endswith(".csv"):
        return Metric(ConcaveDistance.from_csv(path))
    with open(path) as fh:
        info = json.load(fh)
    csv_path = info["knots_csv_path"]
    if not os.path.isabs(csv_path) and not os.path.exists(csv_path):
        csv_path = os.path.join(os.path.dirname(path), os.path.basename(csv_path))
    base = ConcaveDistance.from_csv(csv_path)
    wt = float(info.get("lyapunov_weight", 0.0) or 0.0)
    if wt > 0:
        return Metric(base, wt, lambda x: np.sum(np.square(x), axis=-1))
    return Metric(base)


def _load_cfg(args):
    cfg = config.load(args.config)
    if getattr(args, "theorem", None):
        cfg.setdefault("metric_request", {})["theorem"] = args.theorem
        config.validate(cfg)
    if getattr(args, "out_dir", None):
        cfg.setdefault("output", {})["dir"] = args.out_dir
    return cfg


def cmd_constants(args):
    u = euler.universal_constants()
    _dump({"quadrature": {"c0": u.c0, "p0": u.p0, "ctilde0": u.ctilde0},
           "paper_bounds": dict(euler.PAPER_CONSTANTS),
           "bounds_hold": u.c0 >= u.c0_paper and u.p0 >= u.p0_paper and u.ctilde0 >= u.ctilde0_paper})
    return 0


def cmd_metric(args):
    cfg = _load_cfg(args)
    metric, info = config.build(cfg, args.seed if args.seed is not None else 0)
    out = _write_metric(metric, info, config.output_paths(cfg))
    _dump(out)
    return 0


def cmd_rate(args):
    cfg = _load_cfg(args)
    metric, info = config.build(cfg, args.seed if args.seed is not None else 0)
    info = {k: v for k, v in info.items() if k != "build"}
    if args.write:
        info = _write_metric(metric, info, config.output_paths(cfg))
    _dump(info)
    return 0


def _sweep(cfg, metric, info, seed, threads, claimed):
    mcfg = cfg["model"]
    vcfg = cfg.get("verify", {})
    d = mcfg.get("d", 1)
    pairs = config.start_pairs(cfg, d)
    if mcfg["kind"] == "mala":
        t = config.mala_target(mcfg)
        for x, y in pairs:
            if max(t.norm_minus(x[None])[0], t.norm_minus(y[None])[0]) > t.R_ball:
                raise ConfigError("start pair outside the ball of radius %g" % t.R_ball)
    if claimed is None:
        claimed = vcfg.get("claimed_rate", info.get("claimed_rate", 0.0))
    return verify.contraction_sweep(config.kernel_for(cfg), metric, pairs, vcfg.get("N", 200000), claimed,
                                    seed, threads, vcfg.get("confidence", 0.99))


def cmd_verify(args):
    cfg = _load_cfg(args)
    paths = config.output_paths(cfg)
    metric, info = config.build(cfg, args.seed)
    rep = _sweep(cfg, metric, info, args.seed, _threads(args), args.claimed_rate)
    _write_metric(metric, info, paths)
    rep.to_csv(paths["report_csv"])
    rep.to_json(paths["report_json"])
    _dump(rep.summary())
    if not rep.verdict:
        raise VerificationFailed("%d of %d pairs contradict the claimed rate" % (rep.summary()["failed"], len(rep.rows)))
    return 0


def cmd_mala(args):
    cfg = _load_cfg(args)
    if cfg["model"]["kind"] != "mala":
        raise ConfigError("mala subcommand needs a mala model")
    cfg.setdefault("metric_request", {})["theorem"] = "mala"
    paths = config.output_paths(cfg)
    metric, info = config.build(cfg, args.seed)
    out = _write_metric(metric, info, paths)
    if args.verify:
        rep = _sweep(cfg, metric, info, args.seed, _threads(args), None)
        rep.to_csv(paths["report_csv"])
        rep.to_json(paths["report_json"])
        out["verify"] = rep.summary()
        _dump(out)
        if not rep.verdict:
            raise VerificationFailed("coupled MALA sweep contradicts 1 - c3 h")
        return 0
    _dump(out)
    return 0


def _read_samples(path):
    rows = []
    with open(path) as fh:
        for r in csv.reader(fh):
            if not r or r[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in r])
            except ValueError:
                if rows:
                    raise ConfigError("non-numeric row in %s" % path)
    if not rows:
        raise ConfigError("no samples in %s" % path)
    return np.array(rows)


def cmd_ot(args):
    a, b = _read_samples(args.a), _read_samples(args.b)
    if a.shape[1] != b.shape[1]:
        raise ConfigError("sample dimensions differ")
    w = verify.discrete_wasserstein(a, b, load_metric(args.metric))
    print(repr(w))
    return 0


def cmd_decay(args):
    cfg = _load_cfg(args)
    paths = config.output_paths(cfg)
    dc = cfg.get("decay", {})
    d = cfg["model"].get("d", 1)
    if dc.get("identity_metric", True):
        metric, claimed = Metric(ConcaveDistance.identity()), None
    else:
        metric, info = config.build(cfg, args.seed)
        claimed = info.get("claimed_rate")
    x = np.asarray(dc.get("x", [1.0] * d), dtype=float)
    y = np.asarray(dc.get("y", [-1.0] * d), dtype=float)
    res = verify.decay_fit(config.kernel_for(cfg), metric, [(x, y)], dc.get("n_steps", 50), dc.get("N", 10000),
                           args.seed, _threads(args), claimed_rate=claimed)
    os.makedirs(os.path.dirname(paths["decay_csv"]) or ".", exist_ok=True)
    res.to_csv(paths["decay_csv"])
    out = {"slope": res.slope, "per_step_bound": res.per_step_bound, "note": res.note,
           "decay_csv": paths["decay_csv"]}
    if res.slope is not None and cfg["model"]["kind"] == "euler":
        out["log(1-h)"] = float(np.log1p(-cfg["model"]["h"]))
    _dump(out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="contraction-cert", description="Designed Kantorovich metrics and contraction certificates.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, seed_required):
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, required=seed_required)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out-dir", default=None)

    sub.add_parser("constants", help="universal constants by quadrature").set_defaults(fn=cmd_constants)
    sp = sub.add_parser("metric", help="build a metric and write its knots")
    common(sp, False)
    sp.add_argument("--theorem", default=None)
    sp.set_defaults(fn=cmd_metric)
    sp = sub.add_parser("rate", help="print the certified rate")
    common(sp, False)
    sp.add_argument("--theorem", default=None)
    sp.add_argument("--write", action="store_true")
    sp.set_defaults(fn=cmd_rate)
    sp = sub.add_parser("verify", help="Monte Carlo sweep against the claimed rate")
    common(sp, True)
    sp.add_argument("--theorem", default=None)
    sp.add_argument("--claimed-rate", type=float, default=None)
    sp.set_defaults(fn=cmd_verify)
    sp = sub.add_parser("mala", help="MALA certificate via the perturbation route")
    common(sp, True)
    sp.add_argument("--verify", action="store_true")
    sp.set_defaults(fn=cmd_mala)
    sp = sub.add_parser("ot", help="exact W_rho between two sample files")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--metric", default=None)
    sp.set_defaults(fn=cmd_ot)
    sp = sub.add_parser("decay", help="multi-step decay of coupled replicas")
    common(sp, True)
    sp.set_defaults(fn=cmd_decay)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: seed must be a 64-bit unsigned integer", file=sys.stderr)
        return ConfigError.exit_code
    try:
        return args.fn(args)
    except CertError as exc:
        print("error (%s): %s" % (type(exc).__name__, exc), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print("error (ConfigError): %s" % exc, file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
