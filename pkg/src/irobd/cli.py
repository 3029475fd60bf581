"""Command line entry point: ``irobd <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import bounds as bnd
from .algorithms import ALGORITHMS, run_named
from .core import dumps, evaluate_total, instance_to_dict, read_instance, write_instance
from .errors import InvalidArgument, SolverFailure, Unsupported, VerificationFailure
from .instances import FAMILIES, gen_remark2, generate
from .offline import (MULTISTART_NOTE, auto_grid, offline_optimum, solve_offline_convex,
                      solve_offline_dp, solve_offline_multistart)
from .prox import SolverConfig
from .reductions import reduce_linear, reduce_nonlinear, system_from_dict, LinearControlSystem


def _kv(items) -> dict:
    """``key=value`` pairs with JSON-parsed values (bare words stay strings)."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InvalidArgument(f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _cfg(args) -> SolverConfig:
    return SolverConfig(grad_tol=args.grad_tol, max_iters=args.max_iters)


def cmd_gen(args) -> int:
    params = _kv(args.params)
    if args.family == "remark2":
        inst, ref = gen_remark2(**params)
        data = instance_to_dict(inst)
        data["meta"] = dict(data.get("meta", {}), reference=ref.points[:, 0].tolist())
        _emit(dumps(data), args.out)
        return 0
    inst = generate(args.family, **params)
    if args.out:
        write_instance(inst, args.out)
    else:
        print(dumps(instance_to_dict(inst)))
    return 0


def cmd_run(args) -> int:
    inst = read_instance(args.instance)
    traj = run_named(args.alg, inst, args.lam, args.lam2, _cfg(args))
    rep = evaluate_total(inst, traj)
    _emit(dumps({"algorithm": args.alg, "lambda": args.lam, "lambda2": args.lam2,
                 "trajectory": traj.points, "report": rep.to_dict()}), args.out)
    return 0


def cmd_oracle(args) -> int:
    inst = read_instance(args.instance).with_delay(0)
    cfg = _cfg(args)
    note = ""
    if args.method == "auto":
        res = offline_optimum(inst, cfg, cells=args.cells, restarts=args.restarts, seed=args.seed)
        traj, method, note = res.trajectory, res.method, res.note
    elif args.method == "convex":
        traj, method = solve_offline_convex(inst, cfg), "convex"
    elif args.method == "dp":
        traj, method = solve_offline_dp(inst, auto_grid(inst, args.cells)), "dp"
    else:
        traj = solve_offline_multistart(inst, args.restarts, args.seed, cfg)
        method, note = "multistart", MULTISTART_NOTE
    rep = evaluate_total(inst, traj)
    out = {"method": method, "trajectory": traj.points, "report": rep.to_dict()}
    if note:
        out["note"] = note
    _emit(dumps(out), args.out)
    return 0


def cmd_reduce(args) -> int:
    with open(args.system) as fh:
        data = json.load(fh)
    if args.kind:
        data["kind"] = args.kind
    sys_ = system_from_dict(data)
    if isinstance(sys_, LinearControlSystem):
        inst, rec = reduce_linear(sys_)
        recovery = {"kind": "linear", "C": rec.state.C, "zeta": rec.state.zeta,
                    "offset": rec.state.offset, "k": list(rec.state.idx.k)}
    else:
        inst, rec = reduce_nonlinear(sys_)
        recovery = {"kind": "nonlinear", "x0": rec.x0}
    os.makedirs(args.out_dir, exist_ok=True)
    write_instance(inst, os.path.join(args.out_dir, "instance.json"))
    _emit(dumps(recovery), os.path.join(args.out_dir, "recovery.json"))
    print(os.path.join(args.out_dir, "instance.json"))
    return 0


def cmd_bounds(args) -> int:
    fn = bnd.BOUNDS.get(args.which)
    if fn is None:
        raise InvalidArgument(f"unknown bound {args.which!r}; expected one of {sorted(bnd.BOUNDS)}")
    prm = _kv(args.params)
    if "lambda" in prm:
        prm["lam"] = prm.pop("lambda")
    try:
        val = fn(**prm)
    except TypeError as exc:
        raise InvalidArgument(str(exc)) from None
    out = {"which": args.which, "params": prm}
    if isinstance(val, tuple):
        out.update(lambda_star=val[0], value=val[1])
    else:
        out["value"] = val
    print(dumps(out))
    return 0


def cmd_sweep(args) -> int:
    from .sweep import run_sweep, to_csv

    with open(args.config) as fh:
        config = json.load(fh)
    rows = run_sweep(config, _cfg(args), cells=args.cells)
    _emit(to_csv(rows).rstrip("\n"), args.out)
    if args.figures:
        from .report import render_sweep_figures

        for path in render_sweep_figures(rows, args.figures):
            print(path, file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    if args.sweep:
        failures = 0
        with open(args.sweep) as fh:
            for n, row in enumerate(csv.DictReader(fh), start=1):
                if row["error"]:
                    print(f"FAIL row {n} ({row['family']} {row['algorithm']}): {row['error']}")
                    failures += 1
                elif row["bound_ok"] == "false":
                    print(f"FAIL row {n} ({row['family']} {row['algorithm']}): ratio {row['ratio']} "
                          f"violates {row['bound_name']} = {row['bound']}")
                    failures += 1
        print(f"{failures} failing rows")
        return 1 if failures else 0
    from .verify import verify_instance

    inst = read_instance(args.instance)
    rep = verify_instance(inst, args.lam, _cfg(args))
    for line in rep.lines():
        print(line)
    return 0 if rep.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="irobd", description=__doc__)
    ap.add_argument("--grad-tol", type=float, default=1e-10, help="inner solver gradient tolerance (default 1e-10)")
    ap.add_argument("--max-iters", type=int, default=10_000, help="inner solver iteration cap (default 10000)")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("params", nargs="*", help="generator parameters as key=value")
    g.add_argument("--out", help="output path (default stdout)")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run an online algorithm on an instance")
    r.add_argument("--alg", choices=ALGORITHMS, required=True)
    r.add_argument("--instance", required=True)
    r.add_argument("--lambda", dest="lam", type=float, default=1.0)
    r.add_argument("--lambda2", dest="lam2", type=float, default=0.0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="offline optimum of an instance")
    o.add_argument("--instance", required=True)
    o.add_argument("--method", choices=("auto", "convex", "dp", "multistart"), default="auto")
    o.add_argument("--cells", type=int, default=2001)
    o.add_argument("--restarts", type=int, default=32)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    d = sub.add_parser("reduce", help="reduce a control system to an instance")
    d.add_argument("--system", required=True)
    d.add_argument("--kind", choices=("linear", "nonlinear"))
    d.add_argument("--out-dir", default=".")
    d.set_defaults(func=cmd_reduce)

    b = sub.add_parser("bounds", help="evaluate a closed-form bound")
    b.add_argument("--which", required=True, choices=sorted(bnd.BOUNDS))
    b.add_argument("params", nargs="*", help="bound parameters as key=value (use lam= or lambda=)")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sweep", help="run a sweep config and write CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--cells", type=int, default=1001, help="DP grid size for nonlinear scalar oracles")
    s.add_argument("--figures", metavar="DIR", help="also write ratio figures (PNG) into DIR")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="check inequalities on an instance or bounds in a sweep CSV")
    grp = v.add_mutually_exclusive_group(required=True)
    grp.add_argument("--instance")
    grp.add_argument("--sweep")
    v.add_argument("--lambda", dest="lam", type=float, default=1.0)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgument, Unsupported) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, VerificationFailure) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
