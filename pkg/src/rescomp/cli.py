"""Command line runner: ``rescomp run | describe | repro``.

Exit status is 0 on success, 2 for configuration or parse errors and 3 for
numerical failures.  Errors are also printed to stderr as one JSON object.
"""
import argparse
from dataclasses import asdict
import json
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from . import acceptance as ACC
from . import analysis as AN
from . import calculus as C
from .errors import ConfigInvalid, ExperimentFailed, ParseError, RescompError
from .linalg import LinearMap, matrix_from_json
from .oracle import graph_residual

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
KINDS = ("identity-suite", "sweep", "hausdorff", "dr-demo", "sample-graph", "modulus")


# -- config helpers ------------------------------------------------------------

def _need(cfg, key):
    if key not in cfg or cfg[key] is None:
        raise ConfigInvalid(key, "required field is missing")
    return cfg[key]


def _real(cfg, key, default=None, positive=True):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigInvalid(key, "required field is missing")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigInvalid(key, f"expected a number, got {v!r}")
    if positive and not v > 0:
        raise ConfigInvalid(key, f"must be positive, got {v!r}")
    return float(v)


def _count(cfg, key, default):
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < 2:
        raise ConfigInvalid(key, f"sample count must be an integer >= 2, got {v!r}")
    return v


def _expr(cfg, key, required=True):
    if key not in cfg:
        if required:
            raise ConfigInvalid(key, "required field is missing")
        return None
    try:
        return C.from_json(cfg[key])
    except (ParseError, ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid(key, f"bad expression: {exc}") from exc


def _matrix(cfg, key, required=True):
    if key not in cfg:
        if required:
            raise ConfigInvalid(key, "required field is missing")
        return None
    try:
        return LinearMap(matrix_from_json(cfg[key]))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid(key, f"bad matrix: {exc}") from exc


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("config", f"invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config", "top level must be an object")
    return cfg


def bundled_configs():
    root = resources.files("rescomp") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config(path):
    """A file path, or the name of a bundled config such as ``cor515_sweep``."""
    if os.path.exists(path):
        return load_config(path)
    name = path[:-5] if path.endswith(".json") else path
    if name in bundled_configs():
        text = (resources.files("rescomp") / "configs" / f"{name}.json").read_text()
        return json.loads(text)
    raise ConfigInvalid("config", f"no such file or bundled config: {path}")


def validate(cfg):
    kind = _need(cfg, "kind")
    if kind not in KINDS:
        raise ConfigInvalid("kind", f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    seed = _need(cfg, "seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigInvalid("seed", f"expected an unsigned 64-bit integer, got {seed!r}")
    return kind


# -- experiments ---------------------------------------------------------------

def _csv(columns, rows):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(ACC._fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def _sweep_spec(cfg):
    kind = _need(cfg, "sweep")
    if kind not in AN.SWEEP_KINDS:
        raise ConfigInvalid("sweep", f"unknown sweep {kind!r}; expected one of {', '.join(AN.SWEEP_KINDS)}")
    grid = _need(cfg, "gammas")
    if not isinstance(grid, list) or not grid:
        raise ConfigInvalid("gammas", "grid must be a nonempty list")
    lo = 0.0 if kind == "Prop70" else None
    for g in grid:
        if isinstance(g, bool) or not isinstance(g, (int, float)) or not (g > 0 or (lo == 0.0 and g == 0)):
            raise ConfigInvalid("gammas", f"grid values must be positive, got {g!r}")
    if any(b == a for a, b in zip(grid, grid[1:])) or not (
            all(b > a for a, b in zip(grid, grid[1:])) or all(b < a for a, b in zip(grid, grid[1:]))):
        raise ConfigInvalid("gammas", "grid must be strictly monotone")
    spec = AN.SweepSpec(kind, [float(g) for g in grid], rho=_real(cfg, "rho", 1.0),
                        delta=None if cfg.get("delta") is None else _real(cfg, "delta"),
                        n=_count(cfg, "samples", 400), seed=cfg["seed"],
                        modulus_n=_count(cfg, "modulus_samples", 40))
    if kind == "Cor515":
        spec.a = _expr(cfg, "a")
    else:
        spec.lmap = _matrix(cfg, "L")
        spec.b = _expr(cfg, "b")
    if kind in ("Prop510a", "Prop510b"):
        spec.limit = _expr(cfg, "limit")
    mode = cfg.get("mode", "plain")
    if mode not in ("plain", "co"):
        raise ConfigInvalid("mode", f"expected 'plain' or 'co', got {mode!r}")
    spec.mode = mode
    if kind == "Prop74":
        spec.s_map = _matrix(cfg, "S", required=False)
        if cfg.get("eta") is not None:
            spec.eta = _real(cfg, "eta")
    if kind == "Prop70":
        spec.gamma_fixed = _real(cfg, "gamma", 1.0)
        if "dL" in cfg:
            spec.d_lmap = _matrix(cfg, "dL").matrix
        if "d_shift" in cfg:
            spec.d_shift = np.asarray(cfg["d_shift"], dtype=float)
        spec.d_gamma = _real(cfg, "d_gamma", 0.0, positive=False)
    return spec


def _run_sweep(cfg, name, h, threads):
    spec = _sweep_spec(cfg)
    rep = AN.gamma_sweep(spec, experiment_id=name, cfg_hash=h, threads=threads)
    return {f"{name}.csv": rep.to_csv(), f"{name}.json": rep.to_json()}, True


def _run_identity(cfg, name, h, threads):
    rows = ACC.identity_suite(cfg["seed"], _count(cfg, "samples", 1000))
    tol = _real(cfg, "tol", 1e-8)
    ok = all(r[2] <= tol for r in rows)
    return {f"{name}.csv": _csv(("invariant", "case", "max_residual", "samples"), rows)}, ok


def _run_hausdorff(cfg, name, h, threads):
    rec = AN.hausdorff_estimate(_expr(cfg, "a1"), _expr(cfg, "a2"), _real(cfg, "rho", 1.0),
                                _real(cfg, "gamma_probe", 1.0), _count(cfg, "samples", 400), cfg["seed"])
    row = (rec.gamma, rec.delta, rec.rho, rec.d_gamma_delta, rec.haus_lower, rec.haus_upper_bound,
           rec.beta_hat, rec.bound)
    return {f"{name}.csv": _csv(AN.SweepReport.COLUMNS, [row]),
            f"{name}.json": json.dumps(asdict(rec), sort_keys=True, indent=1)}, True


def _run_dr(cfg, name, h, threads):
    a1, a2 = _expr(cfg, "a1"), _expr(cfg, "a2")
    if a1.dim != a2.dim:
        raise ConfigInvalid("a2", "operands act on different spaces")
    node = C.DouglasRachford(a1, a2)
    lifted = C.dr_via_composition(a1, a2)
    iters = int(cfg.get("iterations", 50))
    x = np.asarray(cfg.get("start", [1.0] * a1.dim), dtype=float)
    if x.shape != (a1.dim,):
        raise ConfigInvalid("start", f"expected {a1.dim} coordinates")
    d = a1.dim
    cols = ["k"] + [f"x{i}" for i in range(d)] + [f"shadow{i}" for i in range(d)] + ["step", "lifted_gap"]
    rows = []
    for k in range(iters + 1):
        nxt = C.resolvent(node, 1.0, x)
        gap = float(np.linalg.norm(nxt - C.resolvent(lifted, 1.0, x)))
        shadow = C.resolvent(a1, 1.0, x)
        rows.append([k, *x, *shadow, float(np.linalg.norm(nxt - x)), gap])
        x = nxt
    return {f"{name}.csv": _csv(cols, rows)}, True


def _run_sample(cfg, name, h, threads):
    e = _expr(cfg, "expr")
    g = _real(cfg, "gamma", 1.0)
    s = AN.minty_sample(e, g, _real(cfg, "radius", 3.0), _count(cfg, "samples", 100), cfg["seed"])
    d = e.dim
    cols = [f"x{i}" for i in range(d)] + [f"xstar{i}" for i in range(d)] + ["minty_error"]
    err = np.sqrt(np.sum((s.x + g * s.xstar - s.y) ** 2, axis=1))
    data = np.hstack([s.x, s.xstar, err[:, None]])
    if cfg.get("check_graph", False):
        cols.append("graph_residual")
        data = np.hstack([data, graph_residual(e, s.x, s.xstar)[:, None]])
    return {f"{name}.csv": _csv(cols, data.tolist())}, True


def _run_modulus(cfg, name, h, threads):
    e = _expr(cfg, "expr")
    g = _real(cfg, "gamma", 1.0)
    s = AN.minty_sample(e, g, _real(cfg, "radius", 3.0), _count(cfg, "samples", 100), cfg["seed"])
    ip = getattr(e, "inner_product", None) if cfg.get("inner_product") == "weighted" else None
    rep = AN.modulus_estimate(s, ip)
    return {f"{name}.csv": _csv(("beta_hat", "pair_count"), [(rep.beta_hat, rep.pair_count)])}, True


RUNNERS = {"identity-suite": _run_identity, "sweep": _run_sweep, "hausdorff": _run_hausdorff,
           "dr-demo": _run_dr, "sample-graph": _run_sample, "modulus": _run_modulus}


def run(cfg, out_dir, threads=1, seed=None):
    """Execute one experiment config and write its outputs plus ``manifest.json``."""
    cfg = dict(cfg)
    if seed is not None:
        cfg["seed"] = seed
    kind = validate(cfg)
    name = str(cfg.get("name", kind.replace("-", "_")))
    h = AN.config_hash(cfg)
    try:
        files, ok = RUNNERS[kind](cfg, name, h, threads)
    except ConfigInvalid:
        raise
    except RescompError as exc:
        raise ExperimentFailed(f"{kind} experiment {name!r} failed: {type(exc).__name__}: {exc}") from exc
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fname, text in files.items():
        with open(os.path.join(out_dir, fname), "w", newline="\n") as fh:
            fh.write(text)
        written.append(fname)
    manifest = {"config_hash": h, "version": __version__,
                "experiments": [{"name": name, "kind": kind, "status": "ok" if ok else "check-failed"}],
                "outputs": written}
    with open(os.path.join(out_dir, "manifest.json"), "w", newline="\n") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


# -- describe ------------------------------------------------------------------

def _lmap_notes(lm):
    m = lm.matrix
    notes = [f"L {lm.rows}x{lm.cols}", f"|L|={lm.norm_estimate:.6g}"]
    if lm.rows == lm.cols and np.array_equal(m, np.eye(lm.rows)):
        notes.append("L=Id")
    if lm.is_isometry:
        notes.append("isometry")
    if lm.is_coisometry:
        notes.append("coisometry")
    return notes


def describe_lines(e, depth=0):
    pad = "  " * depth
    name = type(e).__name__
    bits = [f"dim={e.dim}"]
    ng = e.native_gamma
    bits.append(f"native_gamma={ng:.6g}" if ng is not None else "exact at every gamma")
    if isinstance(e, C.Leaf):
        bits.insert(0, type(e.atom).__name__)
    lm = getattr(e, "lmap", None)
    if lm is not None:
        bits.extend(_lmap_notes(lm))
    lines = [f"{pad}{name}: " + ", ".join(bits)]
    if isinstance(e, (C.Compose, C.Cocompose)):
        m = e.lmap.matrix
        if e.lmap.rows == e.lmap.cols and np.array_equal(m, np.eye(e.lmap.rows)):
            lines.append(f"{pad}  note: L=Id, collapses to B (resolvent is J_(gamma B))")
        elif e.lmap.is_coisometry:
            lines.append(f"{pad}  note: coisometry collapse available: <> is the parallel composition "
                         "L^T |> B and <>* is the standard composition L^T B L")
    if isinstance(e, C.PsiLift):
        ok = e.lmap.norm_estimate < 1.0 - 1e-9
        lines.append(f"{pad}  note: |L| < 1 check {'passed' if ok else 'FAILED'}; "
                     f"|L_Psi L_Psi^T - I| = {e.coisometry_residual():.3e}")
    if isinstance(e, C.Mixture):
        for t in e.terms:
            lines.append(f"{pad}  term alpha={t.alpha:.6g}, " + ", ".join(_lmap_notes(t.lmap)))
            lines.extend(describe_lines(t.b, depth + 2))
        return lines
    if isinstance(e, C.Average):
        for a, b in e.terms:
            lines.append(f"{pad}  term alpha={a:.6g}")
            lines.extend(describe_lines(b, depth + 2))
        return lines
    for ch in e.children():
        lines.extend(describe_lines(ch, depth + 1))
    return lines


def describe(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    try:
        e = C.from_json(obj)
    except ParseError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(str(exc)) from exc
    return "\n".join(describe_lines(e))


# -- entry point ---------------------------------------------------------------

def _parse_ids(arg):
    if arg == "all":
        return list(ACC.CRITERIA)
    ids = []
    for part in arg.split(","):
        try:
            i = int(part)
        except ValueError:
            raise ConfigInvalid("criterion", f"expected an id in 1..10 or 'all', got {part!r}") from None
        if i not in ACC.CRITERIA:
            raise ConfigInvalid("criterion", f"no criterion {i}")
        ids.append(i)
    return ids


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="rescomp", description="Resolvent composition experiments.")
    p.add_argument("--version", action="version", version=f"rescomp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=_u64, default=None, help="override the config seed")
    r = sub.add_parser("run", parents=[common], help="run an experiment config")
    r.add_argument("config", help="config path or bundled config name")
    d = sub.add_parser("describe", help="print an expression tree")
    d.add_argument("expr")
    q = sub.add_parser("repro", parents=[common], help="reproduce acceptance criteria")
    q.add_argument("criterion", help="criterion id, comma list, or 'all'")
    sub.add_parser("list", help="list bundled configs")
    return p


def _fail(code, exc):
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigInvalid):
        rec.update(field=exc.field, message=exc.message)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            print("\n".join(bundled_configs()))
            return EXIT_OK
        if args.command == "describe":
            print(describe(args.expr))
            return EXIT_OK
        if args.threads < 1:
            raise ConfigInvalid("threads", "must be >= 1")
        if args.command == "run":
            cfg = resolve_config(args.config)
            m = run(cfg, args.out or ".", threads=args.threads, seed=args.seed)
            print(json.dumps(m, sort_keys=True))
            return EXIT_OK if all(e["status"] == "ok" for e in m["experiments"]) else EXIT_NUMERIC
        ids = _parse_ids(args.criterion)
        seed = 0 if args.seed is None else args.seed
        results = ACC.run_criteria(ids, seed=seed, out_dir=args.out or "repro_out")
        for res in results:
            print(res.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC
    except (ConfigInvalid, ParseError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except RescompError as exc:
        return _fail(EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
