"""``symvar`` command line front end.

Every subcommand reads one JSON or TOML config file, runs a solver and emits
a schema-versioned JSON report.  Reports go to stdout, or to
``<out>/report.json`` with ``--out``; wall-clock timings are written to
``<out>/timings.json`` only, so report bytes depend on inputs and seed alone.

Exit codes: 0 success, 2 hypothesis violation, 1 anything else.
"""

import argparse
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from symvar import __version__
from symvar.errors import ConfigParse, HypothesisError, SymvarError, UnknownSubcommand

SCHEMA = "symvar.report"
SCHEMA_VERSION = 1

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


# ---------------------------------------------------------------------------
# config and output plumbing
# ---------------------------------------------------------------------------


def load_config(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(raw.decode())
        return json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigParse(f"cannot parse config {path}: {exc}") from exc


def jsonable(obj):
    """Recursively convert numpy values and non-finite floats to plain JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def dumps(report):
    return json.dumps(jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(rows):
    buf = io.StringIO()
    for row in rows:
        buf.write(",".join(str(v) for v in row) + "\n")
    return buf.getvalue()


def _need(cfg, key):
    if key not in cfg:
        raise ConfigParse(f"config is missing required key {key!r}")
    return cfg[key]


def _vec(v):
    return np.asarray(v, dtype=float)


class Context:
    def __init__(self, args, cfg, base):
        self.args = args
        self.cfg = cfg
        self.base = base
        self.seed = args.seed

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def group(self, spec, dim=None, norm=None):
        """Named group, inline dict, or path to a group file."""
        from symvar.group import load_group, named_group

        norm = norm or self.cfg.get("norm", "l2")
        if spec is None:
            return named_group("trivial", dim, norm)
        if isinstance(spec, str):
            if spec.endswith((".json", ".toml")):
                return load_group(load_config(self.path(spec)))
            if spec == "c3":
                spec = "cyclic"
            return named_group(spec, dim, norm)
        spec = dict(spec)
        spec.setdefault("norm", norm)
        if dim is not None:
            spec.setdefault("dimension", dim)
        return load_group(spec)


# ---------------------------------------------------------------------------
# handlers: each returns (result, tolerances, artifacts, summary)
# ---------------------------------------------------------------------------


def cmd_group_check(ctx):
    from symvar.group import ALGEBRAIC_TOL, SAMPLED_TOL, load_group

    G = load_group(ctx.cfg)
    result = {"valid": True, "order": G.order, "dimension": G.dim, "norm": G.norm, "permutation_group": G.perms is not None}
    return result, {"algebraic": ALGEBRAIC_TOL, "isometry_sampled": SAMPLED_TOL}, {}, f"valid, order {G.order}"


def cmd_symmetrize(ctx):
    from symvar.group import ALGEBRAIC_TOL, is_invariant_point, separation, symmetrize

    cfg = ctx.cfg
    pts = np.atleast_2d(_vec(ctx.args.x.split(",")) if ctx.args.x else _vec(_need(cfg, "points")))
    spec = cfg.get("group")
    if spec is None and ("elements" in cfg or "named" in cfg):
        spec = {k: v for k, v in cfg.items() if k != "points"}  # a bare group file
    G = ctx.group(spec, pts.shape[1])
    bars = symmetrize(pts, G)
    rows = [
        {
            "x": x,
            "symmetrized": xb,
            "invariant": is_invariant_point(x, G),
            "separation": separation(x, G, ALGEBRAIC_TOL),
        }
        for x, xb in zip(pts, bars)
    ]
    return {"group_order": G.order, "points": rows}, {"invariance": ALGEBRAIC_TOL}, {}, f"symmetrized {len(pts)} point(s)"


def _samples(cfg, apex, dim):
    """Apex first (so a failing apex is reported as the witness), then a grid."""
    from symvar.geometry import grid_samples

    s = cfg.get("samples", {})
    if "points" in s:
        grid = _vec(s["points"])
    else:
        lo = _vec(s.get("lo", [-6.0] * dim))
        hi = _vec(s.get("hi", [6.0] * dim))
        per = int(s.get("per_axis", max(2, round(1000 ** (1.0 / dim)))))
        grid = grid_samples(lo, hi, per)
    return np.vstack([apex[None, :], grid])


def _set_svg(sets, points=(), extra_points=()):
    from symvar.geometry import Petal, petal_contains, drop_contains
    from symvar.svg import PALETTE, Scene, convex_outline

    outlines = []
    for S in sets:
        if isinstance(S, Petal):
            reach = 2.0 * S.radius() + 1e-9
            outlines.append(convex_outline(lambda X, S=S: petal_contains(S, X), S.a, reach))
        else:
            reach = 2.0 * S.bounding_radius() + 1e-9
            outlines.append(convex_outline(lambda X, S=S: drop_contains(S, X), S.a, reach))
    every = np.vstack(outlines + [np.atleast_2d(p) for p in points if len(p)] + [np.atleast_2d(p) for p in extra_points if len(p)])
    scene = Scene(every.min(axis=0), every.max(axis=0))
    for k, (S, out) in enumerate(zip(sets, outlines)):
        scene.polygon(out, PALETTE[k % len(PALETTE)], label=f"element {k}")
        scene.point(S.a, PALETTE[k % len(PALETTE)], r=3.0, label="apex")
    for group in points:
        for p in np.atleast_2d(group):
            scene.point(p, "#000000", r=2.0)
    for p in extra_points:
        scene.point(p, "#444444", r=4.0, label="focus")
    return scene.to_string()


def cmd_petal(ctx):
    from symvar.geometry import MEMBERSHIP_TOL, Petal, petal_contains, petal_equivariance_check, set_invariance_check

    cfg = ctx.cfg
    norm = cfg.get("norm", "l2")
    P = Petal(_vec(_need(cfg, "a")), _vec(_need(cfg, "b")), float(cfg.get("gamma", 1.0)), norm)
    G = ctx.group(cfg.get("group"), P.a.size, norm)
    X = _samples(cfg, P.a, P.a.size)
    equiv = []
    for k in range(G.order):
        ok, wit = petal_equivariance_check(P, G.matrices[k], X)
        equiv.append({"element": k, "holds": ok, "witness": wit})
    inv = set_invariance_check(lambda Y: petal_contains(P, Y), G, X)
    result = {
        "petal": {"a": P.a, "b": P.b, "gamma": P.gamma, "norm": norm},
        "n_samples": len(X),
        "equivariance": equiv,
        "invariant": inv.holds,
        "invariance_witness": inv.witness,
        "witness_element": inv.element,
    }
    if "query" in cfg:
        result["query"] = [{"x": q, "member": petal_contains(P, q)} for q in _vec(cfg["query"])]
    arts = {}
    if P.a.size == 2:
        arts["figure.svg"] = _set_svg([P.moved(M) for M in G.matrices], extra_points=[P.b])
    verdict = "invariant" if inv.holds else f"not invariant (witness {np.round(inv.witness, 12).tolist()})"
    return result, {"membership": MEMBERSHIP_TOL}, arts, f"petal {verdict}"


def cmd_drop(ctx):
    from symvar.geometry import MEMBERSHIP_TOL, Drop, drop_contains, drop_equivariance_check, set_invariance_check

    cfg = ctx.cfg
    norm = cfg.get("norm", "l2")
    D = Drop(_vec(_need(cfg, "a")), _vec(_need(cfg, "center")), float(_need(cfg, "radius")), norm)
    G = ctx.group(cfg.get("group"), D.a.size, norm)
    X = _samples(cfg, D.a, D.a.size)
    equiv = []
    for k in range(G.order):
        ok, wit = drop_equivariance_check(D, G.matrices[k], X)
        equiv.append({"element": k, "holds": ok, "witness": wit})
    inv = set_invariance_check(lambda Y: drop_contains(D, Y), G, X)
    result = {
        "drop": {"a": D.a, "center": D.center, "radius": D.radius, "norm": norm},
        "n_samples": len(X),
        "equivariance": equiv,
        "invariant": inv.holds,
        "invariance_witness": inv.witness,
        "witness_element": inv.element,
    }
    if "query" in cfg:
        result["query"] = [{"x": q, "member": drop_contains(D, q)} for q in _vec(cfg["query"])]
    arts = {}
    if D.a.size == 2:
        arts["figure.svg"] = _set_svg([D.moved(M) for M in G.matrices], extra_points=[D.center])
    verdict = "invariant" if inv.holds else f"not invariant (witness {np.round(inv.witness, 12).tolist()})"
    return result, {"membership": MEMBERSHIP_TOL}, arts, f"drop {verdict}"


def cmd_flower(ctx):
    from symvar.geometry import MEMBERSHIP_TOL, PointCloud, _orbit_sets, flower_disjointness

    cfg = ctx.cfg
    norm = cfg.get("norm", "l2")
    a, b = _vec(_need(cfg, "a")), _vec(_need(cfg, "b"))
    C = PointCloud(_vec(_need(cfg, "C")), norm)
    G = ctx.group(cfg.get("group"), a.size, norm)
    kind = cfg.get("kind", "petal")
    gamma = float(cfg.get("gamma", 1.0))
    radius = float(cfg.get("radius", 0.0))
    n_samples = int(cfg.get("n_samples", 10_000))
    rep = flower_disjointness(a, b, C, gamma, G, kind, radius, n_samples, ctx.seed)
    arts = {}
    if a.size == 2:
        arts["figure.svg"] = _set_svg(_orbit_sets(a, b, gamma, G, kind, radius), points=[C.points], extra_points=[G.act(k, b) for k in range(G.order)])
    summary = f"{kind} flower: {len(rep.pairs)} guarded pair(s), {'disjoint' if rep.disjoint else 'intersecting'}"
    return rep.to_dict(), {"membership": MEMBERSHIP_TOL, "samples_per_pair": n_samples}, arts, summary


def _instance(ctx):
    from symvar.instances import load_instance

    return load_instance(ctx.cfg)


def cmd_ekeland(ctx):
    from symvar.variational import FLOAT_TOL, ekeland_point

    inst = _instance(ctx)
    if inst.f is None:
        raise ConfigParse("instance needs an objective 'f'")
    gamma = ctx.args.gamma if ctx.args.gamma is not None else float(_need(ctx.cfg, "gamma"))
    x0 = ctx.args.x0 if ctx.args.x0 is not None else ctx.cfg.get("x0")
    if x0 is None:
        x0 = int(inst.space.invariant_indices[0]) if inst.space.invariant_indices.size else 0
    cert = ekeland_point(inst.space, inst.f, gamma, int(x0))
    tol = 0.0 if inst.space.exact else FLOAT_TOL
    trace = csv_text([("step", "index", "f")] + [(k, i, repr(float(inst.f[i]))) for k, i in enumerate(cert.trace)])
    return cert.to_dict(), {"comparison": tol}, {"trace.csv": trace}, f"a={cert.a} slack1={cert.slack1:.6g} slack2={cert.slack2:.6g}"


def _bifunction(ctx, inst):
    from symvar.instances import potential_bifunction, takahashi_scale

    if inst.bifunction is not None:
        return inst.bifunction
    pot = ctx.cfg.get("potential")
    if pot is None:
        raise ConfigParse("instance needs 'bifunction' or 'potential'")
    phi = _vec(pot["phi"])
    mu = float(pot.get("mu", 0.0))
    scale = pot.get("scale", "auto")
    scale = takahashi_scale(inst.space, phi, mu) if scale == "auto" else float(scale)
    return potential_bifunction(inst.space, phi, scale, mu)


def cmd_caristi(ctx):
    from symvar.variational import FLOAT_TOL, caristi_fixed_point

    inst = _instance(ctx)
    F = _bifunction(ctx, inst)
    if inst.T is None:
        raise ConfigParse("instance needs the multivalued map 'T'")
    res = caristi_fixed_point(inst.space, F, inst.T, ctx.cfg.get("x0"))
    return res.to_dict(), {"comparison": FLOAT_TOL}, {}, f"fixed point x_hat={res.x_hat}"


def cmd_takahashi(ctx):
    from symvar.variational import FLOAT_TOL, takahashi_minimizer

    inst = _instance(ctx)
    F = _bifunction(ctx, inst)
    res = takahashi_minimizer(inst.space, F, ctx.cfg.get("x0"))
    return res.to_dict(), {"comparison": FLOAT_TOL}, {}, f"minimizer x_hat={res.x_hat} margin={res.margin:.6g}"


def cmd_ps(ctx):
    from symvar.smooth import INVARIANCE_TOL, SAMPLE_INVARIANCE_TOL, dense_range_probe, make_functional, palais_smale

    cfg = dict(ctx.cfg)
    name = cfg.pop("functional", "quadratic")
    dim = cfg.pop("dim", None)
    group_spec = cfg.pop("group", None)
    x0 = cfg.pop("x0", None)
    k_max = int(cfg.pop("k_max", 10_000))
    grad_tol = float(cfg.pop("grad_tol", 1e-8))
    target = cfg.pop("target", None)
    k = cfg.pop("k", None)
    sequence_mode = bool(cfg.pop("sequence_mode", False))
    if name in ("plateau-energy", "p-energy"):
        cfg["group"] = group_spec or "identity"
        phi = make_functional(name, **cfg)
    else:
        if dim is None:
            dim = len(x0) if x0 is not None else len(target)
        G = ctx.group(group_spec, int(dim))
        phi = make_functional(name, int(dim), G, **cfg)
        phi.validate(seed=ctx.seed)
    start = np.zeros(phi.dim) if x0 is None else _vec(x0)
    tols = {"grad_tol": grad_tol, "iterate_invariance": INVARIANCE_TOL, "sampled_invariance": SAMPLE_INVARIANCE_TOL}
    if target is not None:
        probe = dense_range_probe(phi, _vec(target), float(k if k is not None else np.inf), grad_tol, k_max, start, ctx.seed)
        seq = probe.sequence
        result = probe.to_dict()
        summary = f"probe residual {probe.residual:.3g} after {seq.iterations} iterations"
    else:
        seq = palais_smale(phi, start, k_max, grad_tol, sequence_mode=sequence_mode)
        result = seq.to_dict()
        summary = f"|P grad| = {seq.grad_norm:.3g} after {seq.iterations} iterations ({seq.reason})"
    return result, tols, {"series.csv": csv_text(seq.csv_rows())}, summary


def _field_csv(u):
    return csv_text([[repr(float(v)) for v in row] for row in u])


def cmd_plateau(ctx):
    from symvar.pde import SYMMETRY_TOL, SymmetricGrid, grid_expression, solve_plateau
    from symvar.svg import contour_svg

    cfg = ctx.cfg
    grid = SymmetricGrid(int(_need(cfg, "m")), cfg.get("group", "identity"))
    boundary = grid_expression(grid, cfg.get("boundary", "0"))
    T = grid_expression(grid, cfg.get("T", "0"))
    tol = float(cfg.get("tol", 1e-8))
    res = solve_plateau(grid, boundary, T, tol, int(cfg.get("k_max", 200_000)), ctx.seed, bool(cfg.get("probes", True)))
    result = {"grid": grid.to_dict(), **res.to_dict()}
    arts = {"field.csv": _field_csv(res.u), "figure.svg": contour_svg(res.u)}
    tols = {"residual_l2": tol, "symmetry": SYMMETRY_TOL, "uniqueness_spread": 10 * tol, "max_principle_slack": 1e-9}
    return result, tols, arts, f"residual {res.residual_norm:.3g}, symmetry residual {res.symmetry_residual:.3g}"


def cmd_plap(ctx):
    import sympy

    from symvar.pde import SymmetricGrid, check_growth, grid_expression, p_energy_descent
    from symvar.svg import contour_svg

    cfg = ctx.cfg
    grid = SymmetricGrid(int(_need(cfg, "m")), cfg.get("group", "identity"))
    u0 = grid_expression(grid, cfg.get("u0", "0"))
    p = float(_need(cfg, "p"))
    tol = float(cfg.get("tol", 1e-4))
    res = p_energy_descent(grid, p, float(cfg.get("alpha", 0.0)), u0, tol, int(cfg.get("k_max", 100_000)))
    result = {"grid": grid.to_dict(), "p": p, **res.to_dict()}
    if "growth" in cfg:
        gcfg = cfg["growth"]
        syms = sympy.symbols("x y xi1 xi2")
        fp = sympy.lambdify(syms, [sympy.sympify(e) for e in gcfg["f_prime"]], "numpy")
        result["growth"] = check_growth(lambda x, xi: np.array(fp(*x, *xi), dtype=float), float(gcfg["a"]), float(gcfg["b"]), p, seed=ctx.seed)
    arts = {"field.csv": _field_csv(res.u), "figure.svg": contour_svg(res.u)}
    return result, {"dual_norm": tol}, arts, f"dual-norm surrogate {res.dual_norm:.3g} after {res.iterations} iterations"


def control_problem_from_config(cfg, group_resolver):
    from symvar.control import (
        ControlProblem,
        bilinear_dynamics,
        box_candidates,
        expression_cost,
        expression_dynamics,
        linear_dynamics,
        quadratic_cost,
    )

    x0 = np.atleast_1d(_vec(_need(cfg, "x0")))
    n = x0.size
    Kspec = _need(cfg, "K")
    if isinstance(Kspec, dict):
        bounds = Kspec["box"]
        G = group_resolver(cfg.get("group"), len(bounds))
        K = box_candidates(bounds, int(Kspec.get("per_axis", 3)), G)
    else:
        K = _vec(Kspec)
        K = K.reshape(-1, 1) if K.ndim == 1 else K
        G = group_resolver(cfg.get("group"), K.shape[1])
    m = K.shape[1]
    dyn = _need(cfg, "dynamics")
    kind = dyn.get("kind", "linear")
    if kind == "linear":
        f, jac = linear_dynamics(dyn.get("A", np.zeros((n, n))), dyn.get("B", np.eye(n, m)))
    elif kind == "bilinear":
        f, jac = bilinear_dynamics(dyn.get("A", np.zeros((n, n))), dyn["B"])
    elif kind == "expression":
        f, jac = expression_dynamics(dyn["f"], n, m)
    else:
        raise ConfigParse(f"unknown dynamics kind {kind!r}")
    cost = cfg.get("cost", {"kind": "quadratic"})
    if cost.get("kind", "quadratic") == "quadratic":
        h, dh = quadratic_cost(cost.get("target", np.zeros(n)))
    elif cost["kind"] == "expression":
        h, dh = expression_cost(cost["h"], n)
    else:
        raise ConfigParse(f"unknown cost kind {cost['kind']!r}")
    return ControlProblem(f, h, dh, K, x0, float(cfg.get("T", 1.0)), jac, G, cfg.get("name", "control"))


def cmd_control(ctx):
    from symvar.control import epsilon_optimal

    cfg = ctx.cfg
    P = control_problem_from_config(cfg, ctx.group)
    eps = float(cfg.get("eps", 1e-3))
    N = int(cfg.get("N", 8))
    res = epsilon_optimal(P, eps, N, max_iter=int(cfg.get("max_iter", 10_000)), substeps=int(cfg.get("substeps", 4)))
    result = {"K": P.K, "invariant_candidates": P.invariant_candidates(), **res.to_dict(P.K)}
    vals = res.signal.values(P.K)
    sig_rows = [("cell", "t_start", *[f"u{i + 1}" for i in range(P.K.shape[1])])]
    sig_rows += [(c, repr(c * res.signal.width), *map(repr, map(float, v))) for c, v in enumerate(vals)]
    traj_rows = [("t", *[f"x{i + 1}" for i in range(P.state_dim)], *[f"p{i + 1}" for i in range(P.state_dim)])]
    traj_rows += [(repr(float(t)), *map(repr, map(float, y)), *map(repr, map(float, p))) for t, y, p in zip(res.trajectory.times, res.trajectory.states, res.adjoint.p)]
    arts = {"signal.csv": csv_text(sig_rows), "trajectory.csv": csv_text(traj_rows)}
    tols = {"eps": eps, "needle_threshold": eps * P.T / N}
    return result, tols, arts, f"cost {res.cost:.6g}, max Hamiltonian slack {res.hamiltonian['max_slack']:.3g}"


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "invalid choice" in message or "required: command" in message:
            raise UnknownSubcommand(message)
        raise ConfigParse(message)


def _leaf(sub, name, handler, help_text, extra=None):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("config", help="JSON or TOML config file")
    p.add_argument("--out", help="directory for report.json, timings.json and artifacts")
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    p.add_argument("--svg", help="write the figure to this path")
    p.add_argument("--csv", help="write the (first) CSV artifact to this path")
    if extra:
        extra(p)
    p.set_defaults(handler=handler, command_name=name)
    return p


def build_parser():
    parser = _Parser(prog="symvar", description="Symmetric variational principles: certificates, solvers and figures.")
    parser.add_argument("--version", action="version", version=f"symvar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    grp = sub.add_parser("group", help="finite group utilities")
    gsub = grp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    _leaf(gsub, "check", cmd_group_check, "validate a group file").set_defaults(command_name="group check")

    _leaf(sub, "symmetrize", cmd_symmetrize, "orbit averages of points", lambda p: p.add_argument("--x", help="comma-separated point"))
    _leaf(sub, "petal", cmd_petal, "petal membership, equivariance and invariance")
    _leaf(sub, "drop", cmd_drop, "drop membership, equivariance and invariance")
    _leaf(sub, "flower", cmd_flower, "disjointness of a petal or drop orbit")

    ek = sub.add_parser("ekeland", help="finite Ekeland principle")
    esub = ek.add_subparsers(dest="action", required=True, parser_class=_Parser)

    def ek_args(p):
        p.add_argument("--gamma", type=float)
        p.add_argument("--x0", type=int)

    _leaf(esub, "run", cmd_ekeland, "invariant Ekeland point with certificate", ek_args).set_defaults(command_name="ekeland run")
    _leaf(sub, "caristi", cmd_caristi, "invariant Caristi fixed point")
    _leaf(sub, "takahashi", cmd_takahashi, "invariant Takahashi minimizer")
    _leaf(sub, "ps", cmd_ps, "Palais-Smale sequence or dense-range probe")
    _leaf(sub, "plateau", cmd_plateau, "symmetric discrete Plateau problem")
    _leaf(sub, "plap", cmd_plap, "p-Laplacian energy descent")
    _leaf(sub, "control", cmd_control, "epsilon-optimal symmetric control")
    return parser


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run(argv):
    """Run one command; returns ``(exit_code, report_text)``."""
    args = build_parser().parse_args(argv)
    cfg_path = Path(args.config)
    cfg = load_config(cfg_path)
    if not isinstance(cfg, dict):
        raise ConfigParse("config must be a JSON/TOML object")
    ctx = Context(args, cfg, cfg_path.parent)
    report = {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": args.command_name,
        "seed": args.seed,
        "inputs": {"config": cfg, "options": {k: getattr(args, k, None) for k in ("gamma", "x0", "x") if getattr(args, k, None) is not None}},
    }
    t0 = time.perf_counter()
    code = 0
    arts = {}
    try:
        result, tols, arts, summary = args.handler(ctx)
        report.update(status="ok", tolerances=tols, result=result)
    except HypothesisError as exc:
        code = 2
        summary = f"hypothesis violated: {type(exc).__name__}: {exc}"
        report.update(status="hypothesis-violated", error={"type": type(exc).__name__, "message": str(exc)})
        witness = getattr(exc, "witness", None)
        if witness is not None:
            report["error"]["witness"] = witness
    elapsed = time.perf_counter() - t0
    text = dumps(report)
    if args.out:
        out = Path(args.out)
        _write(out / "report.json", text)
        _write(out / "timings.json", dumps({"command": args.command_name, "seconds": elapsed}))
        for name, content in arts.items():
            _write(out / name, content)
    if args.svg and "figure.svg" in arts:
        _write(args.svg, arts["figure.svg"])
    csvs = [n for n in arts if n.endswith(".csv")]
    if args.csv and csvs:
        _write(args.csv, arts[csvs[0]])
    return code, text, summary


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        code, text, summary = run(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except HypothesisError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return 2
    except SymvarError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out_given = "--out" in argv or any(a.startswith("--out=") for a in argv)
    if not out_given:
        sys.stdout.write(text)
    print(summary, file=sys.stderr if not out_given else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
