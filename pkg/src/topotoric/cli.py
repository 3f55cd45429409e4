"""``topotoric`` command line.

Exit codes: 0 pass, 1 domain failure (rejected fan, incompatible data, failed
pipeline), 2 input error.  Fan, Klyachko and setup arguments accept a path or
the name of a bundled example (``cp2``, ``three_lines``, ``n2k2``, ...).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import Config, ConfigError
from .equivariance import PipelineError, SetupError, load_setup, run_pipeline
from .fan import FanFormatError, dual_family, load_fan, validate
from .klyachko import KlyachkoFormatError, check_all, load_klyachko, verify_certificate
from .manifold import cocycle_residual, orbit_poset, transition

DATA = Path(__file__).parent / "data"


class InputError(Exception):
    pass


def _resolve(arg: str, kind: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = DATA / kind / f"{arg}.json"
    if bundled.exists():
        return bundled
    raise InputError(f"no such file or bundled {kind[:-1]}: {arg}")


def _emit(obj, as_json: bool, text: str) -> None:
    if as_json:
        print(json.dumps(obj, indent=2))
    else:
        print(text)


def _config(args) -> Config:
    base = Config.load(args.config).to_json()
    overrides = {
        "tol_cocycle": args.tol_cocycle,
        "tol_equivariance": args.tol_equivariance,
        "tol_transport": args.tol_transport,
        "tol_extension": args.tol_extension,
        "tol_regression": args.tol_regression,
        "seed": args.seed,
        "quadrature_n": args.quadrature_n,
        "require_complete": args.strict_complete,
        "exhaustive_cones": args.all_cones,
        "field": args.field,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return Config.from_mapping(base)


def _parse_cone(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace("{", "").replace("}", "").split(",") if x.strip())
    except ValueError:
        raise InputError(f"cannot parse cone {text!r}; use e.g. 1,2") from None


def cmd_validate(args, cfg: Config) -> int:
    fan = load_fan(_resolve(args.fan, "fans"))
    rep = validate(fan, require_complete=cfg.require_complete, seed=cfg.seed)
    _emit(rep.to_json(), args.json, rep.render())
    return 0 if rep.accepted else 1


def cmd_dual(args, cfg: Config) -> int:
    fan = load_fan(_resolve(args.fan, "fans"))
    cones = [_parse_cone(args.cone)] if args.cone else sorted(tuple(sorted(c)) for c in fan.maximal_cones)
    fams = []
    for c in cones:
        try:
            fams.append(dual_family(fan, c))
        except ValueError as exc:
            raise InputError(str(exc)) from None
    doc = {"schema": "topotoric.dual/1", "families": [f.to_json() for f in fams]}
    lines = []
    for f in fams:
        for i in sorted(f.alphas):
            lines.append(f"cone {sorted(f.cone)}  alpha_{i} = {f.alphas[i]}")
    _emit(doc, args.json, "\n".join(lines))
    return 0


def cmd_orbits(args, cfg: Config) -> int:
    fan = load_fan(_resolve(args.fan, "fans"))
    poset = orbit_poset(fan)
    _emit(poset.to_json(), args.json, poset.render())
    return 0


def cmd_transitions(args, cfg: Config) -> int:
    fan = load_fan(_resolve(args.fan, "fans"))
    tops = sorted(tuple(sorted(c)) for c in fan.maximal_cones)
    maps = [transition(fan, I, J) for I in tops for J in tops if I != J]
    res = cocycle_residual(fan, samples=100, seed=cfg.seed)
    ok = res < cfg.tol_cocycle
    doc = {"schema": "topotoric.transitions/1", "transitions": [m.to_json() for m in maps],
           "cocycle_residual": res, "tolerance": cfg.tol_cocycle, "pass": ok}
    lines = []
    for m in maps:
        rows = "; ".join(", ".join(str(e) for e in row) for row in m.exponents)
        lines.append(f"{list(m.source)} -> {list(m.target)}: [{rows}]")
    lines.append(f"{len(maps)} transition maps, cocycle residual {res:.2e} ({'ok' if ok else 'FAIL'})")
    _emit(doc, args.json, "\n".join(lines))
    return 0 if ok else 1


def cmd_check_klyachko(args, cfg: Config) -> int:
    data = load_klyachko(_resolve(args.data, "klyachko"), field=cfg.field if args.field else None)
    rep = check_all(data, exhaustive=cfg.exhaustive_cones)
    doc = rep.to_json()
    for entry, res in zip(doc["cones"], rep.results.values()):
        if entry["compatible"]:
            ok, why = verify_certificate(data, res)
            entry["verified"] = ok
            if not ok:
                entry["verifier"] = why
    _emit(doc, args.json, rep.render())
    return 0 if rep.compatible and all(e.get("verified", True) for e in doc["cones"]) else 1


def cmd_average_demo(args, cfg: Config) -> int:
    setup = load_setup(_resolve(args.setup, "setups"))
    if args.quadrature_n is not None:
        setup.quadrature_n = cfg.quadrature_n
    if args.seed is not None:
        setup.seed = cfg.seed
    setup.tolerances.update(cfg.pipeline_tolerances())
    try:
        report = run_pipeline(setup)
    except PipelineError as exc:
        report = {**exc.report, "pass": False, "error": str(exc)}
    lines = [f"setup {setup.name}: n={setup.n} k={setup.k} N={setup.quadrature_n}"]
    for name, c in report.get("checks", {}).items():
        lines.append(f"  {name:<28} {c['value']:.2e}  (< {c['tolerance']:.0e})  {'ok' if c['pass'] else 'FAIL'}")
    if "recovery" in report:
        for chi in report["recovery"]["characters"]:
            lines.append("  recovered " + ", ".join(f"({e['b']}+{e['c']}i,{e['v']})" for e in chi))
    if "error" in report:
        lines.append(f"  error: {report['error']}")
    lines.append("PASS" if report.get("pass") else "FAIL")
    _emit(report, args.json, "\n".join(lines))
    return 0 if report.get("pass") else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit the JSON report")
    common.add_argument("--config", help="config file (default: $TOPOTORIC_CONFIG)")
    common.add_argument("--seed", type=int)
    common.add_argument("--quadrature-n", type=int, help="nodes per circle, power of two >= 8")
    for name in ("cocycle", "equivariance", "transport", "extension", "regression"):
        common.add_argument(f"--tol-{name}", type=float)
    common.add_argument("--strict-complete", dest="strict_complete", action="store_true", default=None,
                        help="reject incomplete fans (default)")
    common.add_argument("--no-strict-complete", dest="strict_complete", action="store_false")
    common.add_argument("--all-cones", action="store_true", default=None,
                        help="check every cone, not only maximal ones")
    common.add_argument("--field", choices=["Q", "Q(i)"], help="base field of Klyachko data")

    parser = argparse.ArgumentParser(prog="topotoric", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", parents=[common], help="check a fan against the axioms")
    p.add_argument("fan")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("dual", parents=[common], help="dual families of maximal cones")
    p.add_argument("fan")
    p.add_argument("--cone", help="comma-separated rays, e.g. 1,2")
    p.set_defaults(func=cmd_dual)
    p = sub.add_parser("orbits", parents=[common], help="orbit poset")
    p.add_argument("fan")
    p.set_defaults(func=cmd_orbits)
    p = sub.add_parser("transitions", parents=[common], help="transition exponents and cocycle residual")
    p.add_argument("fan")
    p.set_defaults(func=cmd_transitions)
    p = sub.add_parser("check-klyachko", parents=[common], help="compatibility of filtration data")
    p.add_argument("data")
    p.set_defaults(func=cmd_check_klyachko)
    p = sub.add_parser("average-demo", parents=[common], help="run the averaging pipeline")
    p.add_argument("setup")
    p.set_defaults(func=cmd_average_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except (InputError, ConfigError, FanFormatError, KlyachkoFormatError, SetupError,
            json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
