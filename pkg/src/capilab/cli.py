"""Command-line front end.

Exit status: 0 when every embedded check passes, 1 when a check fails,
2 on usage or configuration errors.  All numeric defaults are listed by
``capilab <subcommand> --help``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from . import experiments as exp, fem, formats, quantities as qty
from .geometry import DomainSpec, SpecError, measures
from .meshgen import MeshQualityError, build_mesh

log = logging.getLogger("capilab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CONFIG_KEYS = {
    "subcommand", "mode", "r", "theta", "deg", "perturbation", "mesh", "c", "out", "k",
    "amplitudes", "levels", "threads", "plot", "tol", "gate", "min_order", "include_zero",
}
SUBCOMMANDS = ("solve", "check", "rigidity", "sweep-serrin", "sweep-cmc", "sweep-hk")


class UsageError(Exception):
    pass


def _mesh_size(text):
    try:
        nr, na = (int(t) for t in str(text).lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"mesh size must look like 64x128, got {text!r}") from None
    return nr, na


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _levels(text):
    return [_mesh_size(t) for t in str(text).split(",") if t.strip()]


def _perturbation(text):
    """'k:a[:delta],...' -> list of (k, a, delta)."""
    out = []
    for item in str(text).split(","):
        if not item.strip():
            continue
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise argparse.ArgumentTypeError(f"perturbation entries look like k:a[:delta], got {item!r}")
        try:
            out.append((int(parts[0]), float(parts[1]), float(parts[2]) if len(parts) == 3 else 0.0))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad perturbation entry {item!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capilab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    def common(sp, sweep=False):
        sp.add_argument("--config", type=Path, help="JSON config; explicit flags override its values")
        sp.add_argument("--mode", choices=("planar", "axisymmetric"), default=None,
                        help="planar (n=1) or axisymmetric (n=2) (default: planar)")
        sp.add_argument("--r", type=float, default=None, help="cap radius (default: 1)")
        sp.add_argument("--theta", type=float, default=None,
                        help="contact angle, radians unless --deg (default: pi/2)")
        sp.add_argument("--deg", action="store_true", default=None, help="read --theta in degrees")
        sp.add_argument("--out", type=Path, default=None, help="output directory (default: capilab-out)")
        sp.add_argument("--tol", type=float, default=None,
                        help="inequality tolerance (default: 10 x finest identity residual)")
        if not sweep:
            sp.add_argument("--perturbation", type=_perturbation, default=None,
                            help="modes k:a[:delta],... of the radial graph (default: none)")
            sp.add_argument("--mesh", type=_mesh_size, default=None,
                            help="n_radial x n_angular (default: 64x128)")
            sp.add_argument("--c", type=float, default=None,
                            help="Neumann constant (default: c(theta, Omega))")
        else:
            sp.add_argument("--k", type=int, default=None, help="perturbation frequency (default: 2)")
            sp.add_argument("--amps", dest="amplitudes", type=_floats, default=None,
                            help="comma-separated amplitudes (default: 0.02,0.05,0.1,0.2)")
            sp.add_argument("--mesh", type=_mesh_size, default=None,
                            help="n_radial x n_angular per row (default: 64x128)")
            sp.add_argument("--threads", type=int, default=None,
                            help="worker threads (default: CAPILAB_THREADS or CPU count)")
            sp.add_argument("--gate", type=float, default=None,
                            help="relative identity residual admitted to the fit (default: 0.01)")
            sp.add_argument("--no-zero", dest="include_zero", action="store_false", default=None,
                            help="omit the amplitude-0 reference row")
            sp.add_argument("--plot", action="store_true", default=None,
                            help="also write an SVG log-log plot (needs matplotlib)")
        return sp

    common(sub.add_parser("solve", help="solve the mixed problem and export mesh and field"))
    common(sub.add_parser("check", help="deficit report and invariant suite for one domain"))
    rig = common(sub.add_parser("rigidity", help="refinement study on an unperturbed cap"))
    rig.add_argument("--levels", type=_levels, default=None,
                     help="mesh sizes, e.g. 8x16,16x32,32x64,64x128 (the default)")
    rig.add_argument("--min-order", dest="min_order", type=float, default=None,
                     help="smallest acceptable observed order (default: 1.5)")
    for name in ("serrin", "cmc", "hk"):
        sp = common(sub.add_parser(f"sweep-{name}", help=f"{name} stability sweep"), sweep=True)
        if name == "serrin":
            sp.add_argument("--c", type=float, default=None,
                            help="fixed Neumann constant (default: c(theta) of the cap)")
    return p


def load_config(path: Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve(args) -> dict:
    """Merge defaults, config file and explicit flags into one validated dict."""
    cfg = {"mode": "planar", "r": 1.0, "theta": math.pi / 2, "deg": False, "perturbation": [],
           "mesh": list(exp.DEFAULT_MESH), "c": None, "out": "capilab-out", "k": 2,
           "amplitudes": list(exp.DEFAULT_AMPLITUDES), "levels": [list(x) for x in exp.DEFAULT_LEVELS],
           "threads": None, "plot": False, "tol": None, "gate": exp.GATE,
           "min_order": exp.MIN_ORDER, "include_zero": True}
    if getattr(args, "config", None):
        file_cfg = load_config(args.config)
        sc = file_cfg.pop("subcommand", args.command)
        if sc != args.command:
            raise UsageError(f"config is for {sc!r}, not {args.command!r}")
        cfg.update(file_cfg)
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["deg"]:
        cfg["theta"] = math.radians(cfg["theta"])
    theta = float(cfg["theta"])
    if not (0.0 < theta <= math.pi / 2 + 1e-4):
        raise UsageError(f"theta must lie in (0, pi/2], got {theta}")
    mesh = cfg["mesh"]
    if len(mesh) != 2:
        raise UsageError("mesh needs two sizes")
    cfg["mesh"] = (int(mesh[0]), int(mesh[1]))
    cfg["levels"] = [tuple(int(v) for v in lv) for lv in cfg["levels"]]
    return cfg


def _spec(cfg) -> DomainSpec:
    return DomainSpec(cfg["mode"], cfg["r"], cfg["theta"], tuple(tuple(m) if not isinstance(m, dict) else m
                                                                 for m in cfg["perturbation"]))


def _field(cfg):
    spec = _spec(cfg)
    c = cfg["c"]
    if c is None:
        c = qty.capillary_constant(spec.theta, measures(spec))
    mesh = build_mesh(spec, *cfg["mesh"])
    return fem.solve_mixed_bvp(mesh, c)


def _write_json(path, obj):
    exp.write_json(path, obj)
    log.info("wrote %s", path)


def cmd_solve(cfg, out: Path) -> int:
    f = _field(cfg)
    formats.write_mesh(f.mesh, out / "mesh.txt")
    formats.write_field(f, out / "field.txt")
    comp = qty.compatibility_residual(f)
    fmax = qty.max_nodal_value(f)
    ok = comp <= 1e-8 and (f.c > 0 or fmax <= (cfg["tol"] or 1e-10))
    _write_json(out / "solve.json", {
        "spec": f.mesh.spec.to_dict(), "mesh": list(cfg["mesh"]), "h": f.mesh.h, "c": f.c,
        "cg_iterations": f.cg_iterations, "cg_residual": f.cg_residual,
        "compatibility_residual": comp, "max_f": fmax, "c_positive_warning": f.c_positive_warning,
        "passed": ok,
    })
    print(f"solved: {len(f.coeffs)} nodes, {f.cg_iterations} CG iterations, residual {f.cg_residual:.2e}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_check(cfg, out: Path) -> int:
    f = _field(cfg)
    rep = qty.deficit_report(f, *cfg["mesh"])
    checks = qty.invariant_suite(f, rep, cfg["tol"])
    (out / "report.json").write_text(rep.to_json() + "\n")
    (out / "report.csv").write_text(rep.to_csv())
    ok = all(ch.ok for ch in checks)
    _write_json(out / "checks.json", {"passed": ok, "checks": [asdict(ch) for ch in checks]})
    print(f"serrin_deficit {rep.serrin_deficit:.6g}  cmc_deficit {rep.cmc_deficit:.6g}  "
          f"rho_e - rho_i {rep.rho_e - rep.rho_i:.6g}")
    for ch in checks:
        if not ch.ok:
            print(f"FAILED {ch.name}: {ch.value:.6g} vs {ch.bound:.6g}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_rigidity(cfg, out: Path) -> int:
    table = exp.rigidity_study(cfg["r"], cfg["theta"], cfg["mode"], cfg["levels"], cfg["min_order"])
    exp.write_rigidity(table, out)
    for lv in table.levels:
        print(f"{lv.n_radial}x{lv.n_angular}: err_f {lv.err_f:.3e}  err_flux {lv.err_flux:.3e}  "
              f"err_center {lv.err_center:.3e}")
    for msg in table.failures:
        print(f"FAILED {msg}", file=sys.stderr)
    return EXIT_OK if table.passed else EXIT_FAIL


def cmd_sweep(kind, cfg, out: Path) -> int:
    kw = dict(mode=cfg["mode"], r=cfg["r"], mesh_size=cfg["mesh"], include_zero=cfg["include_zero"],
              threads=cfg["threads"], tol=cfg["tol"], gate=cfg["gate"])
    if kind == "serrin":
        kw["c"] = cfg["c"]
    res = exp.run_sweep(kind, cfg["theta"], cfg["k"], cfg["amplitudes"], **kw)
    exp.write_sweep(res, out, plot=cfg["plot"])
    for r in res.rows:
        if r.skipped:
            print(f"a={r.amplitude:g}: {r.note}")
        else:
            print(f"a={r.amplitude:g}: deficit {r.deficit:.6g}  rho_e - rho_i {r.gap:.6g}")
    if res.slope is not None:
        print(f"fitted slope {res.slope:.4f}")
    for name, ok in res.checks.items():
        if not ok:
            print(f"FAILED {name}", file=sys.stderr)
    return EXIT_OK if res.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", {"subcommand": args.command,
                                          **{k: cfg[k] for k in sorted(cfg) if k != "out"}})
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "check":
            return cmd_check(cfg, out)
        if args.command == "rigidity":
            return cmd_rigidity(cfg, out)
        return cmd_sweep(args.command.split("-", 1)[1], cfg, out)
    except (UsageError, SpecError, MeshQualityError, ValueError) as exc:
        print(f"capilab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except fem.ConvergenceError as exc:
        print(f"capilab: solver failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
