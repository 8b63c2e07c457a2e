"""Command-line front end: ``dkplab <command> [options]``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure.  Values come from defaults, then ``--config``, then flags.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigurationError, DkpLabError

__all__ = ["main", "run", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _common(p):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--preset", help="coefficient field preset")
    p.add_argument("--delta", type=float, help="preset amplitude")
    p.add_argument("--J", type=int, help="mesh level (N = 2**J)")
    p.add_argument("--n", type=int, help="dimension (2 or 3)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="dkplab", description="Carleson-type coefficient experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="Carleson-type norms of a coefficient field")
    _common(p)

    p = sub.add_parser("decompose", help="split A = B + C with sup |t grad B| <= eps")
    _common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--dump", action="store_true", help="write B and C at the cell centres to samples.csv")

    p = sub.add_parser("conjugate", help="flattening map and conjugated field diagnostics")
    _common(p)
    p.add_argument("--eps", type=float, help="build the map from the decomposition at this eps")
    p.add_argument("--samples", type=int, default=2000, help="invertibility samples")

    p = sub.add_parser("solve", help="finite element Dirichlet solve")
    _common(p)
    p.add_argument("--family", help="boundary data (first case is solved)")

    p = sub.add_parser("probe", help="run a named probe")
    p.add_argument("name", choices=io.PROBE_NAMES)
    _common(p)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--family")
    p.add_argument("--eps", type=float)
    p.add_argument("--map", choices=("field", "decompose"), default="field",
                   help="bilipschitz: build the map from the field or its decomposition")

    p = sub.add_parser("report", help="aggregate report.json files")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _config(args):
    over = {"preset": args.preset, "J": args.J, "n": args.n, "seed": args.seed, "delta": args.delta}
    for key in ("p", "q", "family", "eps"):
        over[key] = getattr(args, key, None)
    if args.out is not None:
        over["output"] = {"dir": args.out}
    if getattr(args, "name", None) is not None:
        over["probe"] = {"name": args.name}
    return io.load_config(args.config, over)


def _mesh(cfg):
    from .mesh import HalfSpaceMesh

    return HalfSpaceMesh(cfg.n, cfg.J)


# commands ---------------------------------------------------------------------

def _analyze(cfg, args):
    from .carleson import dkp_norm, linfty_whitney_norm, weak_dkp_norm
    from .errors import NotApplicableError
    from .fields import check_ellipticity

    A, mesh = cfg.build_field(), _mesh(cfg)
    lam, bound = check_ellipticity(A)
    out = {"ellipticity": lam, "bound": bound}
    reports = {"weak_dkp": weak_dkp_norm(A, mesh)}
    try:
        reports["dkp"] = dkp_norm(A, mesh)
    except NotApplicableError as exc:
        out["dkp"] = {"status": "not_applicable", "reason": str(exc)}
    reports["linfty_whitney"] = linfty_whitney_norm(A, mesh)
    rows = []
    for key, rep in reports.items():
        out[key] = rep.to_dict()
        for j, level in enumerate(rep.tent_values):
            for idx in np.ndindex(*level.shape):
                centre = " ".join(repr(float(mesh.xn[i])) for i in idx)
                rows.append({"functional": key, "scale": 2.0**-j, "center": centre, "value": float(level[idx])})
    for key in ("weak_dkp", "dkp", "linfty_whitney"):
        print(f"{key:16s} {out[key].get('norm', 'not_applicable')}")
    return out, {"csv": ("tents.csv", ("functional", "scale", "center", "value"), rows)}


def _decompose(cfg, args):
    from .smoothing import decompose

    dec = decompose(cfg.build_field(), cfg.eps, J=cfg.J)
    out = dec.to_dict()
    print(f"lambda {dec.Lam}  sup|t grad B| {dec.eps_achieved:.4g}  M_B {dec.M_B:.4g}  M_C {dec.M_C:.4g}")
    if not args.dump:
        return out, None
    mesh = _mesh(cfg)
    x, t = mesh.cell_centers()
    x, t = x.reshape(-1, cfg.n - 1), t.ravel()
    Bv, Cv = dec.B(x, t), dec.C(x, t)
    n = cfg.n
    cols = tuple(f"x{d + 1}" for d in range(n - 1)) + ("t",) + tuple(
        f"{m}{i + 1}{j + 1}" for m in "BC" for i in range(n) for j in range(n))
    rows = []
    for k in range(t.size):
        vals = list(x[k]) + [t[k]] + list(Bv[k].ravel()) + list(Cv[k].ravel())
        rows.append(dict(zip(cols, map(float, vals))))
    return out, {"csv": ("samples.csv", cols, rows)}


def _conjugate(cfg, args):
    from .chgvar import build_rho, conjugate, structure_check

    A = cfg.build_field()
    B = A
    out = {}
    if args.eps is not None:
        from .smoothing import decompose

        dec = decompose(A, cfg.eps, J=min(cfg.J, 5))
        B = dec.B
        out["decomposition"] = dec.to_dict()
    rho = build_rho(B, samples=args.samples, seed=cfg.seed)
    A_rho = conjugate(A, rho)
    out["rho"] = rho.summary()
    out["structure"] = structure_check(A_rho, _mesh(cfg), include_blocks=args.eps is None)
    print(f"bilipschitz {rho.bilipschitz:.4g}  last-row cm {out['structure']['last_row_cm']:.4g}")
    return out, None


def _solve(cfg, args):
    from .elliptic import solve_dirichlet
    from .functionals import area_square, avg_ntmax, ntmax
    from .probes import data_family

    mesh = _mesh(cfg)
    cid, f = data_family(cfg.family, cfg.n)[0]
    sol = solve_dirichlet(cfg.build_field(), f, mesh)
    profiles = {"N": ntmax(sol, mesh), "N~grad": avg_ntmax(sol.cell_gradients(), mesh),
                "S": area_square(sol, mesh, "S")}
    out = {"case": cid, **sol.summary(), "norms": {k: v.norms((cfg.p,)) for k, v in profiles.items()}}
    print(f"{cid}: residual {sol.residual:.3e} after {sol.iterations} iterations")
    X, T = mesh.nodes()
    xcols = tuple(f"x{d + 1}" for d in range(cfg.n - 1))
    nodal = [dict(zip(xcols + ("t", "u"), map(float, (*X[idx], T[idx], sol.nodal[idx]))))
             for idx in np.ndindex(*T.shape)]
    B = mesh.boundary_nodes()
    prof = [dict(zip(xcols + tuple(profiles), map(float, (*B[idx], *(p.values[idx] for p in profiles.values())))))
            for idx in np.ndindex(*mesh.col_shape)]
    return out, {"csv": ("solution.csv", xcols + ("t", "u"), nodal),
                 "csv2": ("profiles.csv", xcols + tuple(profiles), prof),
                 "dat": ("solution.dat", xcols + ("t", "u"), [tuple(r.values()) for r in nodal])}


def _codim_report(name, cfg):
    from . import codim
    from .probes import ProbeReport

    if name == "codim-radial":
        Js = list(range(max(3, cfg.J - 2), cfg.J + 1))
        rep = ProbeReport("codim-radial", {"Js": Js})
        for J in Js:
            r = codim.radial_identity_probe(lambda x: np.cos(2 * np.pi * x), J)
            rep.cases.append({"case": f"J={J}", "numerator": r["l2_error"], "denominator": r["h"],
                              "ratio": r["l2_error"] / r["h"], "theta_spread": r["theta_spread"]})
        return rep.finalize()
    rep = ProbeReport("codim-identities", {"seed": cfg.seed})
    chk = codim.cylindrical_derivative_check(seed=cfg.seed)
    for key in ("split", "angle_radial", "radial_angular"):
        rep.cases.append({"case": key, "numerator": chk[key], "denominator": 1.0, "ratio": chk[key]})
    for J in (4, 5, 6):
        r = codim.radial_ibp_check(J)
        rep.cases.append({"case": f"ibp J={J}", "numerator": r["residual"], "denominator": 1.0,
                          "ratio": r["residual"]})
    return rep.finalize()


def _probe(cfg, args):
    from . import probes
    from .fields import carleson_bump

    name = cfg.probe
    J = cfg.J
    ladder = list(range(max(3, J - 2), J + 1))
    if name.startswith("codim"):
        rep = _codim_report(name, cfg)
    else:
        A = cfg.build_field()
        if name == "dirichlet":
            rep = probes.dirichlet_probe(A, cfg.p, cfg.family, J)
        elif name == "regularity":
            rep = probes.regularity_probe(A, cfg.p, cfg.family, J)
        elif name == "perturbation":
            rep = probes.perturbation_probe(A, carleson_bump(cfg.c_delta, n=cfg.n), cfg.p, J, cfg.family)
        elif name == "bilipschitz":
            eps = cfg.eps if args.map == "decompose" else None
            rep = probes.bilipschitz_stability_probe(A, eps, J, cfg.family, p=cfg.p, seed=cfg.seed)
        elif name == "ibp":
            rep = probes.ibp_identity_probe(Js=list(range(max(3, J - 3), J + 1)))
        elif name == "moser":
            f = probes.data_family(cfg.family, cfg.n)[0][1]
            rep = probes.moser_probe(A, f, ladder)
        else:
            f = probes.data_family(cfg.family, cfg.n)[0][1]
            rep = probes.poisson_duality_probe(A, cfg.q, ladder, f)
    rep.environment.setdefault("seed", cfg.seed)
    d = rep.to_dict()
    s = d["summary"]
    print(f"{rep.probe}: {len(rep.cases)} cases, max ratio {s.get('max_ratio')}, spread {s.get('spread')}")
    cols = ("case", "numerator", "denominator", "ratio")
    rows = [(i, c.get("numerator"), c.get("denominator"), c.get("ratio")) for i, c in enumerate(d["cases"])]
    return d, {"csv": ("cases.csv", cols, d["cases"]),
               "dat": (f"{rep.probe}.dat", ("index", "numerator", "denominator", "ratio"), rows)}


COMMANDS = {"analyze": _analyze, "decompose": _decompose, "conjugate": _conjugate, "solve": _solve,
            "probe": _probe}


def _write(cfg, command, result, tables):
    out = Path(cfg.out_dir)
    written = []
    if "json" in cfg.formats:
        written.append(io.write_report(out / "report.json", command, cfg, result))
    for kind, (name, cols, rows) in (tables or {}).items():
        if kind.startswith("csv") and "csv" in cfg.formats:
            written.append(io.write_cases_csv(out / name, rows, cols))
        elif kind == "dat" and "dat" in cfg.formats:
            written.append(io.write_dat(out / name, cols, rows))
    for w in written:
        print(f"wrote {w}")


def run(argv=None):
    """Parse ``argv`` and execute; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        if args.command == "report":
            rows = io.aggregate_reports(args.files, args.out)
            cols = ("probe", "preset", "J", "p", "max_ratio", "spread")
            print("  ".join(f"{c:>12s}" for c in cols))
            for r in rows:
                print("  ".join(f"{str(r[c]):>12s}" for c in cols))
            return EXIT_OK
        cfg = _config(args)
        result, table = COMMANDS[args.command](cfg, args)
        _write(cfg, args.command, result, table)
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DkpLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
