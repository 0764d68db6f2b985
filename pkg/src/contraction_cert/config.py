"""Run configuration: JSON schema, validation and construction of models and metrics."""
import json
import math

import jsonschema
import numpy as np

from . import builders, euler, mala
from .errors import ConfigError, InvalidParameter

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_params = {"type": "object", "additionalProperties": _num}
_vec = {"type": "array", "items": _num, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["euler", "mala"]}},
            "allOf": [
                {"if": {"properties": {"kind": {"const": "euler"}}}, "then": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "drift", "h"],
                    "properties": {
                        "kind": {"const": "euler"},
                        "drift": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["name"],
                            "properties": {
                                "name": {"enum": ["ou", "tanh_perturbed", "dissipative_quadratic", "tabulated"]},
                                "params": _params,
                                "path": {"type": "string"},
                            },
                        },
                        "d": {"type": "integer", "minimum": 1},
                        "h": _pos,
                        "constants": {
                            "type": "object",
                            "additionalProperties": False,
                            "properties": {"J": _num, "K": _pos, "R_out": _pos, "L": _pos},
                        },
                    },
                }},
                {"if": {"properties": {"kind": {"const": "mala"}}}, "then": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "target", "h"],
                    "properties": {
                        "kind": {"const": "mala"},
                        "target": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["name"],
                            "properties": {"name": {"enum": ["zero", "cosine", "quartic_well"]}, "params": _params},
                        },
                        "d": {"type": "integer", "minimum": 1},
                        "R_ball": _pos,
                        "h": _pos,
                    },
                }},
            ],
        },
        "metric_request": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theorem": {"enum": ["thm1", "thm2", "thm3", "euler7", "euler8a", "euler8", "euler8b", "mala"]},
                "a": {"type": "number", "minimum": 0},
                "eps": _pos,
                "mode": {"enum": ["paper", "sharpened"]},
                "constants": {"enum": ["paper", "quadrature"]},
                "n_knots": {"type": "integer", "minimum": 8},
                "mc_budget": {"type": "integer", "minimum": 1000},
                "lyapunov": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "V": {"enum": ["quadratic"]},
                        "lam": _pos,
                        "C": _pos,
                        "M1": _num,
                        "M2": _pos,
                        "L0": _pos,
                    },
                },
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pairs": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "r_min": _pos,
                        "r_max": _pos,
                        "n": {"type": "integer", "minimum": 1},
                        "center": _vec,
                        "list": {"type": "array", "items": {"type": "array", "items": _vec,
                                                            "minItems": 2, "maxItems": 2}},
                    },
                },
                "N": {"type": "integer", "minimum": 1000},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "claimed_rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
        "decay": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x": _vec,
                "y": _vec,
                "n_steps": {"type": "integer", "minimum": 5},
                "N": {"type": "integer", "minimum": 1},
                "identity_metric": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "string"} for k in
                           ("dir", "metric_csv", "rate_json", "report_csv", "report_json", "decay_csv", "plot_csv")},
        },
    },
}

DEFAULT_OUTPUT = {"dir": ".", "metric_csv": "metric.csv", "rate_json": "rate.json", "report_csv": "report.csv",
                  "report_json": "report.json", "decay_csv": "decay.csv", "plot_csv": "plot_f.csv"}


def load(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    validate(cfg)
    return cfg


def validate(cfg):
    errors = list(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg))
    if errors:
        exc = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError("config invalid at %s: %s" % (where, exc.message))
    return cfg


def output_paths(cfg):
    import os
    out = dict(DEFAULT_OUTPUT)
    out.update(cfg.get("output", {}))
    base = out.pop("dir")
    return {k: os.path.join(base, v) for k, v in out.items()}


def euler_model(mcfg):
    d = mcfg.get("d", 1)
    h = mcfg["h"]
    dr = mcfg["drift"]
    p = dr.get("params", {})
    name = dr["name"]
    if name == "ou":
        m = euler.ou_model(h, p.get("k", 1.0), d, p.get("R_out", 1.0))
    elif name == "tanh_perturbed":
        m = euler.tanh_model(h, p.get("amp", 0.6), p.get("slope", 2.0), d, p.get("K", 0.5))
    elif name == "dissipative_quadratic":
        m = euler.dissipative_model(h, p.get("kappa", 1.0), p.get("beta", 1.0), d)
    else:
        if "path" not in dr:
            raise ConfigError("tabulated drift needs a path")
        if "K" not in p or "R_out" not in p:
            raise ConfigError("tabulated drift needs params K and R_out")
        m = euler.tabulated_model(h, dr["path"], p["K"], p["R_out"])
    over = mcfg.get("constants")
    if over:
        fields = dict(m.__dict__)
        fields.update(over)
        m = euler.EulerModel(**fields)
    return m.validate()


def mala_target(mcfg):
    t = mcfg["target"]
    return mala.make_target(t["name"], mcfg.get("d", 1), mcfg.get("R_ball", 5.0), **t.get("params", {}))


def lyapunov_spec(req, m, mcfg):
    ly = req.get("lyapunov")
    if ly is None:
        raise ConfigError("theorem needs metric_request.lyapunov")
    if "lam" in ly and "C" in ly:
        V = lambda x: np.sum(np.square(x), axis=-1)
        return builders.LyapunovSpec(V, ly["lam"], ly["C"], lambda r: 0.5 * np.square(r))
    p = mcfg["drift"].get("params", {})
    if mcfg["drift"]["name"] == "dissipative_quadratic":
        kap, beta = p.get("kappa", 1.0), p.get("beta", 1.0)
        M1, M2, L0 = ly.get("M1", beta), ly.get("M2", kap), ly.get("L0", (kap + beta) ** 2)
    elif {"M1", "M2", "L0"} <= set(ly):
        M1, M2, L0 = ly["M1"], ly["M2"], ly["L0"]
    else:
        raise ConfigError("lyapunov needs either lam and C, or M1, M2 and L0")
    return euler.dissipative_lyapunov(M1, M2, L0, m.h, m.d)


def build(cfg, rng=0):
    """Metric and certified per-step rate for a validated config.

    Returns (metric, info) where info carries the claimed per-step rate and
    everything written to rate.json.
    """
    mcfg = cfg["model"]
    req = cfg.get("metric_request", {})
    thm = req.get("theorem", "mala" if mcfg["kind"] == "mala" else "euler7")
    consts = req.get("constants", "paper")
    n = req.get("n_knots", builders.N_KNOTS)
    if mcfg["kind"] == "mala":
        if thm != "mala":
            raise ConfigError("a mala model only supports theorem 'mala'")
        t = mala_target(mcfg)
        cert = mala.mala_pipeline(t, mcfg["h"], req.get("mc_budget", 200000), rng, n=n)
        info = {"theorem": "mala", "c3": cert.c3, "h0_d": cert.h0_d, "claimed_rate": cert.c3 * mcfg["h"],
                **cert.diagnostics}
        return cert.metric, info
    if thm == "mala":
        raise ConfigError("theorem 'mala' needs a mala model")
    m = euler_model(mcfg)
    h = m.h
    info = {"theorem": thm, "h": h, "model": m.name, "Lambda": m.Lambda}
    if thm == "euler7":
        res = euler.rate_thm7(m, req.get("a", 0.0), consts, n)
        info.update(c1=res.rate, h0=res.h0, claimed_rate=res.rate * h, built_rate=res.metric.meta["built_rate"])
        return res.metric, info
    if thm == "euler8a":
        a = req.get("a", 2 * math.sqrt(h))
        res = euler.rate_thm8a(m, a, consts, n)
        info.update(a=a, c2_a=res.rate, h0=res.h0, claimed_rate=res.rate * h, built_rate=res.metric.meta["built_rate"])
        return res.metric, info
    if thm == "euler8":
        res = euler.rate_thm8(m, consts, n)
        info.update(c2=res.c2, q=res.q, r1=res.r1, h0=res.h0, claimed_rate=res.c2 * h)
        return res.metric, info
    if thm == "euler8b":
        lyap = lyapunov_spec(req, m, mcfg)
        a = req.get("a", 3 * math.sqrt(h))
        res = euler.rate_thm8b(m, lyap, a, consts, n)
        info.update(a=a, c2_a=res.c2_a, h0=res.h0, M=res.M, claimed_rate=res.c2_a * h,
                    built_rate=res.metric.meta["built_rate"], lyapunov_weight=res.metric.lyapunov_weight)
        return res.metric, info
    mode = req.get("mode", "sharpened")
    geom = "thm3" if thm == "thm3" else "thm1"
    prof = euler.lemma6_profile(m, mode, geom, "full", consts)
    if thm == "thm1":
        b = builders.build_thm1(prof, a=req.get("a"), n=n)
    elif thm == "thm3":
        b = builders.build_thm3(prof, n=n)
    else:
        b = builders.build_thm2(prof, lyapunov_spec(req, m, mcfg), n=n)
    info.update(b.to_json())
    info.update(claimed_rate=b.rate_c, lyapunov_weight=b.metric.lyapunov_weight)
    return b.metric, info


def kernel_for(cfg):
    mcfg = cfg["model"]
    if mcfg["kind"] == "mala":
        return mala.MalaCoupling(mala_target(mcfg), mcfg["h"])
    return euler.EulerCoupling(euler_model(mcfg))


def start_pairs(cfg, d, metric=None):
    from .verify import log_pairs
    pc = cfg.get("verify", {}).get("pairs", {})
    if "list" in pc:
        pairs = [(np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for x, y in pc["list"]]
    else:
        pairs = log_pairs(d, pc.get("r_min", 1e-2), pc.get("r_max", 1e2), pc.get("n", 20), pc.get("center"))
    for x, y in pairs:
        if len(x) != d or len(y) != d:
            raise ConfigError("start pair dimension differs from model dimension %d" % d)
    return pairs
