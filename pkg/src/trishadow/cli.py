"""Command-line front end: ``trishadow <command> --config run.json``.

Every run writes ``certificate.json`` (and trajectory CSVs where relevant)
into the output directory and echoes the certificate on stdout.  Exit codes:
0 pass, 2 certified failure, 1 input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .apps import ConjugacyFamily, Recurrence, gh_forward, gh_inverse, hyers_ulam_solve
from .detect import admissibility_probe
from .errors import ShadowingError
from .flow import (SampledPath, constant_system, continuous_shadow, integrate_path, ode_residual,
                   read_path_csv, sine_nonlinearity, tabulated_system, write_path_csv)
from .green import GreenKernel, exact_section_norm, green_norm_estimate
from .linsys import TrichotomyData, _expand, system_from_dict, verify_trichotomy
from .seqspace import WindowSequence, parse_kind, read_csv, write_csv
from .shadow import (Perturbation, random_pseudotrajectory, scaled_sine, scaled_tanh,
                     shadow_one_sided, shadow_two_sided, tabulated, zero_perturbation)

log = logging.getLogger("trishadow")

COMMANDS = ("verify", "green-norm", "shadow", "shadow-one-sided", "detect", "flow-shadow",
            "hyers-ulam", "conjugacy")
CONFIG_VERSION = 1
CONFIG_KEYS = {
    "version", "command", "system", "system_file", "kind", "norm", "tol", "seed", "out",
    "mode", "verify_tol", "trials", "gnorm", "perturbation", "pseudotrajectory", "pad",
    "boundary", "widths", "flow", "recurrence", "sequence", "conjugacy",
}
PASS, INPUT_ERROR, CERTIFIED_FAILURE = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- certificate output ----------------------------------------------------

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dump_certificate(obj, indent: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dump_certificate(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dump_certificate(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dump_certificate(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, np.ndarray):
        return dump_certificate(obj.tolist(), indent)
    return json.dumps(str(obj))


# -- config parsing --------------------------------------------------------

def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {cfg.get('version')!r}")
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def merge_flags(cfg: dict, args) -> dict:
    """Fold command-line flags into the config; config values win on conflict."""
    for key, flag in (("command", args.command), ("seed", args.seed), ("out", args.out), ("tol", args.tol)):
        if flag is None:
            continue
        if key in cfg and cfg[key] != flag:
            log.warning("config sets %s=%r; ignoring --%s %r", key, cfg[key], key, flag)
            continue
        cfg[key] = flag
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.get('command')!r}; choose from {', '.join(COMMANDS)}")
    return cfg


def _path(cfg, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p


def _number(cfg, key, default, positive=True):
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key} must be positive, got {v!r}")
    return float(v)


def _system(cfg, need_tri=True):
    if "system" in cfg and "system_file" in cfg:
        raise ConfigError("give either 'system' or 'system_file', not both")
    if "system_file" in cfg:
        data = json.loads(_path(cfg, cfg["system_file"]).read_text())
    elif "system" in cfg:
        data = cfg["system"]
    else:
        raise ConfigError("config needs a 'system' or 'system_file'")
    cocycle, tri = system_from_dict(data)
    if need_tri and tri is None:
        raise ConfigError("this command needs projections, C and lambda in the system")
    return cocycle, tri


def _perturbation(spec) -> tuple[Perturbation, float]:
    """Built-in perturbation and its sup bound."""
    spec = dict(spec or {"name": "zero"})
    name = spec.pop("name", None)
    if name == "zero":
        allowed, pert, sup = set(), zero_perturbation(), 0.0
    elif name in ("scaled-sine", "scaled-tanh"):
        allowed = {"c"}
        c = float(spec.get("c", 0.0))
        pert = scaled_sine(c) if name == "scaled-sine" else scaled_tanh(c)
        sup = abs(c)
    elif name == "tabulated":
        allowed = {"knots", "values"}
        pert = tabulated(spec["knots"], spec["values"])
        sup = float(np.max(np.abs(spec["values"])))
    else:
        raise ConfigError(f"unknown perturbation {name!r}; built-ins: zero, scaled-sine, scaled-tanh, tabulated")
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"perturbation {name}: unknown keys {sorted(extra)}")
    return pert, sup


def _pseudotrajectory(cfg, cocycle, pert, kind, norm, rng):
    spec = dict(cfg.get("pseudotrajectory") or {})
    extra = set(spec) - {"delta", "csv", "smooth"}
    if extra:
        raise ConfigError(f"pseudotrajectory: unknown keys {sorted(extra)}")
    if "csv" in spec:
        return read_csv(_path(cfg, spec["csv"]))
    delta = _number(spec, "delta", 1e-3)
    return random_pseudotrajectory(cocycle, pert, delta, kind, rng, norm, bool(spec.get("smooth", False)))


def _gnorm(cfg):
    g = cfg.get("gnorm")
    if g is None or g in ("analytic", "exact"):
        return g
    return _number(cfg, "gnorm", None)


# -- commands --------------------------------------------------------------

def cmd_verify(cfg, out):
    cocycle, tri = _system(cfg)
    rep = verify_trichotomy(cocycle, tri, mode=cfg.get("mode", "kernel"),
                            tol=_number(cfg, "verify_tol", 1e-8), norm=cfg.get("norm", "max"))
    cert = {"verification": rep.to_dict(), "C": tri.C, "lambda": tri.lam}
    return (PASS if rep.passes else CERTIFIED_FAILURE), cert


def cmd_green_norm(cfg, out):
    cocycle, tri = _system(cfg)
    kind = parse_kind(cfg.get("kind", "linf"))
    gk = GreenKernel(cocycle, tri, norm=cfg.get("norm", "max"))
    lower, upper = green_norm_estimate(gk, kind, int(cfg.get("trials", 16)), np.random.default_rng(cfg.get("seed", 0)))
    exact = exact_section_norm(gk, kind)
    cert = {"kind": str(kind), "lower": lower, "upper": upper, "exact_section_norm": exact,
            "C": tri.C, "lambda": tri.lam}
    ok = lower <= upper * (1 + 1e-12)
    return (PASS if ok else CERTIFIED_FAILURE), cert


def _shadow_common(cfg, out, one_sided):
    cocycle, tri = _system(cfg)
    kind = parse_kind(cfg.get("kind", "linf"))
    norm = cfg.get("norm", "max")
    tol = _number(cfg, "tol", 1e-12)
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    pert, _ = _perturbation(cfg.get("perturbation"))
    y = _pseudotrajectory(cfg, cocycle, pert, kind, norm, rng)
    seq = y.y if hasattr(y, "y") else y
    if one_sided:
        pad = None if cfg.get("pad") is None else np.array(cfg["pad"], dtype=float)
        res = shadow_one_sided(cocycle, tri, pert, y, pad=pad, tol=tol, kind=kind, norm=norm,
                               gnorm=_gnorm(cfg))
    else:
        res = shadow_two_sided(cocycle, tri, pert, y, tol=tol, kind=kind, norm=norm, gnorm=_gnorm(cfg))
    write_csv(seq, out / "pseudotrajectory.csv")
    write_csv(res.x, out / "shadow.csv")
    cert = {"C": tri.C, "lambda": tri.lam, "perturbation": pert.name, "c": pert.c, **res.summary()}
    ok = res.residual <= 1e-9 * max(1.0, float(np.max(np.abs(res.x.values)))) \
        and res.correction_norm <= res.certified_bound * (1 + 1e-6) + 1e-300
    cert["passes"] = bool(ok)
    return (PASS if ok else CERTIFIED_FAILURE), cert


def cmd_shadow(cfg, out):
    return _shadow_common(cfg, out, one_sided=False)


def cmd_shadow_one_sided(cfg, out):
    return _shadow_common(cfg, out, one_sided=True)


def cmd_detect(cfg, out):
    cocycle, _ = _system(cfg, need_tri=False)
    rep = admissibility_probe(cocycle, parse_kind(cfg.get("kind", "linf")), int(cfg.get("trials", 32)),
                              cfg.get("boundary", "free"), tuple(cfg.get("widths", (40, 80))),
                              np.random.default_rng(int(cfg.get("seed", 0))))
    return PASS, {"detection": rep.to_dict()}


FLOW_KEYS = {"A", "f", "horizon", "grid_per_unit", "x_start", "perturbation_amplitude",
             "perturbation_frequency", "path_csv", "h", "trichotomy"}


def _flow_system(spec):
    A = spec.get("A")
    f, c = None, 0.0
    fs = spec.get("f")
    if fs is not None:
        if set(fs) != {"sine"}:
            raise ConfigError("flow.f supports only {'sine': c}")
        c = float(fs["sine"])
        f = sine_nonlinearity(c)
    if not isinstance(A, dict) or len(A) != 1:
        raise ConfigError("flow.A must be one of {'diagonal': [...]}, {'matrix': [[...]]}, {'tabulated': {...}}")
    (k, v), = A.items()
    if k == "diagonal":
        return constant_system(np.diag(np.asarray(v, dtype=float)), f, c)
    if k == "matrix":
        return constant_system(np.asarray(v, dtype=float), f, c)
    if k == "tabulated":
        return tabulated_system(v["times"], v["matrices"], f, c)
    raise ConfigError(f"unknown flow.A kind {k!r}")


def cmd_flow_shadow(cfg, out):
    spec = dict(cfg.get("flow") or {})
    extra = set(spec) - FLOW_KEYS
    if extra:
        raise ConfigError(f"flow: unknown keys {sorted(extra)}")
    sys_ = _flow_system(spec)
    h = _number(spec, "h", 1e-2)
    tol = _number(cfg, "tol", 1e-12)
    if "path_csv" in spec:
        y = read_path_csv(_path(cfg, spec["path_csv"]))
    else:
        t0, t1 = (int(v) for v in spec.get("horizon", (-20, 20)))
        per = int(spec.get("grid_per_unit", 100))
        grid = np.arange(t0 * per, t1 * per + 1) / per
        true = integrate_path(sys_, grid, spec.get("x_start", [1.0] * sys_.d), h)
        amp = float(spec.get("perturbation_amplitude", 1e-3))
        freq = float(spec.get("perturbation_frequency", 5.0))
        bump = np.zeros_like(true.values)
        bump[:, 0] = amp * np.sin(freq * grid)
        y = SampledPath(grid, true.values + bump)
    tri = None
    if "trichotomy" in spec:
        ts = spec["trichotomy"]
        lo, hi = int(round(y.t[0])), int(round(y.t[-1]))
        raw = _expand(ts["projections"], lo, hi - lo + 1, "trichotomy.projections")
        P = []
        for e in raw:
            e = np.array(e, dtype=float).reshape(-1, sys_.d, sys_.d)
            P.append(np.concatenate([e, np.zeros((3 - e.shape[0], sys_.d, sys_.d))]))
        tri = TrichotomyData(lo, np.array(P), float(ts["C"]), float(ts["lambda"]), int(ts.get("origin", 0)))
    res = continuous_shadow(sys_, tri, y, tol=tol, h=h)
    resid = ode_residual(sys_, res.path, h / 4)
    write_path_csv(y, out / "pseudotrajectory.csv")
    write_path_csv(res.path, out / "shadow.csv")
    cert = {**res.summary(), "ode_residual": resid, "N": sys_.N, "c": sys_.c}
    ok = res.sup_deviation <= res.epsilon and resid <= 1e-6
    cert["passes"] = bool(ok)
    return (PASS if ok else CERTIFIED_FAILURE), cert


def cmd_hyers_ulam(cfg, out):
    rspec = cfg.get("recurrence")
    if not isinstance(rspec, dict) or set(rspec) != {"a", "b"}:
        raise ConfigError("recurrence must be {'a': ..., 'b': ...}")
    rec = Recurrence(rspec["a"], rspec["b"])
    sspec = dict(cfg.get("sequence") or {})
    extra = set(sspec) - {"csv", "x0", "x1", "length", "noise"}
    if extra:
        raise ConfigError(f"sequence: unknown keys {sorted(extra)}")
    if "csv" in sspec:
        w = read_csv(_path(cfg, sspec["csv"])).values[:, 0]
    else:
        length = int(sspec.get("length", 60))
        if length < 3:
            raise ConfigError("sequence.length must be >= 3")
        a, b = rec.coefficients(length - 2)
        w = np.zeros(length)
        w[0], w[1] = float(sspec.get("x0", 1.0)), float(sspec.get("x1", 0.5))
        for n in range(length - 2):
            w[n + 2] = a[n] * w[n + 1] + b[n] * w[n]
        rng = np.random.default_rng(int(cfg.get("seed", 0)))
        w = w + rng.uniform(-1.0, 1.0, length) * float(sspec.get("noise", 1e-4))
    res = hyers_ulam_solve(rec, w, tol=_number(cfg, "tol", 1e-12))
    write_csv(WindowSequence(0, w), out / "w.csv")
    write_csv(WindowSequence(0, res.x), out / "x.csv")
    cert = res.certificate()
    ok = res.deviation <= res.epsilon * (1 + 1e-9) and res.recurrence_residual <= 1e-10 * max(1.0, float(np.max(np.abs(res.x))))
    cert["passes"] = bool(ok)
    return (PASS if ok else CERTIFIED_FAILURE), cert


def cmd_conjugacy(cfg, out):
    cocycle, tri = _system(cfg)
    pert, sup = _perturbation(cfg.get("perturbation"))
    spec = dict(cfg.get("conjugacy") or {})
    extra = set(spec) - {"samples", "m_range", "radius", "delta"}
    if extra:
        raise ConfigError(f"conjugacy: unknown keys {sorted(extra)}")
    tol = _number(cfg, "tol", 1e-10)
    conj = ConjugacyFamily(cocycle, tri, pert, float(spec.get("delta", sup)), tol=tol)
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    m_lo, m_hi = (int(v) for v in spec.get("m_range", (-10, 10)))
    radius = float(spec.get("radius", 1.0))
    worst = {"conjugation_residual": 0.0, "near_identity": 0.0, "round_trip_forward_inverse": 0.0,
             "round_trip_inverse_forward": 0.0}
    samples = int(spec.get("samples", 20))
    for _ in range(samples):
        m = int(rng.integers(m_lo, m_hi + 1))
        y = rng.uniform(-radius, radius, cocycle.d)
        h = gh_forward(conj, m, y)
        h_next = gh_forward(conj, m + 1, conj.G(m, y))
        worst["conjugation_residual"] = max(worst["conjugation_residual"], float(np.max(np.abs(h_next - cocycle.A(m) @ h))))
        worst["near_identity"] = max(worst["near_identity"], float(np.max(np.abs(h - y))))
        xi = gh_inverse(conj, m, y)
        worst["round_trip_forward_inverse"] = max(worst["round_trip_forward_inverse"], float(np.max(np.abs(gh_forward(conj, m, xi) - y))))
        worst["round_trip_inverse_forward"] = max(worst["round_trip_inverse_forward"], float(np.max(np.abs(gh_inverse(conj, m, h) - y))))
    cert = {"samples": samples, "margin": conj.margin, "gnorm": conj.gnorm, "K": conj.K,
            "delta": conj.delta, "epsilon": conj.epsilon, "c": pert.c,
            "inversion_rate": conj.inversion_rate, "c_times_gnorm": conj.q, **worst}
    ok = (worst["conjugation_residual"] <= 10 * tol and worst["near_identity"] <= conj.epsilon
          and worst["round_trip_forward_inverse"] <= 10 * tol and worst["round_trip_inverse_forward"] <= 10 * tol)
    cert["passes"] = bool(ok)
    return (PASS if ok else CERTIFIED_FAILURE), cert


HANDLERS = {
    "verify": cmd_verify, "green-norm": cmd_green_norm, "shadow": cmd_shadow,
    "shadow-one-sided": cmd_shadow_one_sided, "detect": cmd_detect, "flow-shadow": cmd_flow_shadow,
    "hyers-ulam": cmd_hyers_ulam, "conjugacy": cmd_conjugacy,
}


def run(cfg: dict) -> tuple[int, dict]:
    """Dispatch a merged config; returns ``(exit_code, certificate)``."""
    command = cfg["command"]
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    cert = {"command": command, "version": __version__, "seed": cfg.get("seed", 0)}
    try:
        code, body = HANDLERS[command](cfg, out)
        cert.update(body)
    except ShadowingError as exc:
        code = CERTIFIED_FAILURE
        cert.update(passes=False, failure=type(exc).__name__, message=str(exc))
    cert["exit_code"] = code
    (out / "certificate.json").write_text(dump_certificate(cert) + "\n")
    return code, cert


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trishadow", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--tol", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else {"version": CONFIG_VERSION}
        cfg = merge_flags(cfg, args)
        code, cert = run(cfg)
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    print(dump_certificate(cert))
    return code


if __name__ == "__main__":
    sys.exit(main())
