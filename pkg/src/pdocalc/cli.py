"""Command-line entry point: ``pdocalc <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` with a JSON object whose keys
match the long option names (dashes or underscores); explicit flags win.
Exit status is 0 when every verdict is PASS, 1 on any FAIL and 2 on
configuration or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from . import reports
from .opexpr import ExprError, evaluate, parse_expr
from .pdo_calculus import (
    FilteredAlgebraSpec,
    SpanLimitError,
    binomial_delta_identity_check,
    build_differential_algebra,
    build_pdo_from_do,
    delta_square_identity_check,
    taylor_remainder_order,
    verify_filtration,
)
from .spectral_core import (
    DEFAULT_S_GRID,
    SIGMA_CAP,
    OperatorFamily,
    SpectrumError,
    estimate_analytic_order,
    identity_family,
    index_family,
    load_spectrum,
    oscillator_spectrum,
    power_family,
    shift_family,
)
from .spectral_triple import (
    TripleError,
    bounded_commutator_check,
    compact_resolvent_check,
    load_triple,
    product_regularity_check,
    product_square_split,
    regularity_probe,
)
from .weyl_algebra import (
    HermiteRealization,
    WeylParseError,
    filtration_check,
    homomorphism_check,
    parse,
    weyl_family,
)

log = logging.getLogger("pdocalc")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def int_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def complex_arg(text) -> complex:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _truncations(sizes, minimum=3):
    sizes = tuple(sizes)
    if len(sizes) < minimum:
        raise ConfigError(f"need at least {minimum} truncations, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("truncation list must be strictly increasing")
    if sizes[0] < 1:
        raise ConfigError("truncations must be positive")
    return sizes


def family_from_expr(expr: str, spectrum) -> OperatorFamily:
    """Evaluate an operator expression with atoms ``u``, ``v``, ``D0``, ``I``, ``Delta^r``."""
    u = shift_family(spectrum)
    atoms = {"u": u, "v": u.dagger().named("v"), "D0": index_family(spectrum), "I": identity_family(spectrum)}
    fam = evaluate(parse_expr(expr), atoms, identity_family(spectrum), lambda r: power_family(spectrum, r))
    return fam.named(expr)


def _operator(args, default_expr="u"):
    if getattr(args, "weyl", None):
        A = parse(args.weyl, 1)
        return weyl_family(A), oscillator_spectrum()
    spectrum = load_spectrum(args.model)
    return family_from_expr(args.op or default_expr, spectrum), spectrum


# ---------------------------------------------------------------------------
# subcommands; each returns (verdict, parameters, results, csv rows)


def cmd_estimate_order(args):
    fam, spectrum = _operator(args)
    sizes = _truncations(args.trunc)
    rep = estimate_analytic_order(fam, args.t, sizes, args.s_grid)
    params = {"model": spectrum.label, "op": args.weyl or args.op or "u", "t": args.t, "trunc": list(sizes)}
    return rep.verdict, params, rep.to_dict(), rep.rows()


def cmd_verify_taylor(args):
    fam, spectrum = _operator(args)
    sizes = _truncations(args.trunc)
    rep = taylor_remainder_order(fam, args.z, args.n, sizes, args.order_y, args.s_grid)
    ok = rep.passed and (rep.sharp or not args.require_sharp)
    rows = [{"test": "predicted", **r} for r in rep.at_prediction.rows()]
    rows += [{"test": "below", **r} for r in rep.sharpness.rows()]
    params = {"model": spectrum.label, "op": args.weyl or args.op or "u", "z": args.z, "n": args.n, "trunc": list(sizes)}
    return "PASS" if ok else "FAIL", params, rep.to_dict(), rows


def cmd_verify_delta_identities(args):
    fam, spectrum = _operator(args)
    reps = [binomial_delta_identity_check(fam, k, args.N, args.interior) for k in range(args.k + 1)]
    reps.append(delta_square_identity_check(fam, args.N, args.interior))
    rows = [r.to_dict() for r in reps]
    ok = all(r.passed for r in reps)
    params = {"model": spectrum.label, "op": args.weyl or args.op or "u", "k": args.k, "N": args.N, "interior": args.interior}
    return "PASS" if ok else "FAIL", params, {"identities": rows}, rows


def cmd_weyl_filtration(args):
    A = parse(args.expr, args.n)
    reps = [filtration_check(A)]
    results = {"filtration": [reps[0].to_dict()]}
    ok = reps[0].passed
    if args.with_expr:
        B = parse(args.with_expr, A.n)
        reps.append(filtration_check(B))
        prod = A * B
        prod_ok = prod.order <= A.order + B.order
        results["filtration"].append(reps[1].to_dict())
        results["product"] = {
            "left": str(A),
            "right": str(B),
            "product": str(prod),
            "order": prod.order,
            "bound": A.order + B.order,
            "verdict": "PASS" if prod_ok else "FAIL",
        }
        ok = ok and reps[1].passed and prod_ok
        if args.K:
            hom = homomorphism_check(A, B, HermiteRealization(A.n, args.K))
            results["homomorphism"] = hom.to_dict()
            ok = ok and hom.relative_deviation <= args.tol
    rows = [r.to_dict() for r in reps]
    params = {"expr": args.expr, "n": A.n, "with": args.with_expr, "K": args.K}
    return "PASS" if ok else "FAIL", params, results, rows


def _parse_generator(text):
    expr, sep, deg = str(text).rpartition(":")
    if not sep:
        return text, 0
    try:
        return expr, int(deg)
    except ValueError:
        raise ConfigError(f"generator degree must be an integer in {text!r}") from None


def cmd_build_algebra(args):
    if args.weyl_gen and args.gen:
        raise ConfigError("use either --gen or --weyl-gen, not both")
    if args.weyl_gen:
        parsed = [_parse_generator(g) for g in args.weyl_gen]
        n = max(parse(expr).n for expr, _ in parsed)
        gens = [(parse(expr, n), deg, expr) for expr, deg in parsed]
        spectrum_label = "weyl"
    else:
        spectrum = load_spectrum(args.model)
        spectrum_label = spectrum.label
        gens = []
        for g in args.gen or ["u:0"]:
            expr, deg = _parse_generator(g)
            gens.append((family_from_expr(expr, spectrum), deg, expr))
    spec = FilteredAlgebraSpec(gens, args.closure_depth, args.max_span)
    algebra = build_differential_algebra(spec, args.depth)
    levels = [[{"word": e.word, "degree": e.degree} for e in algebra.level(k)] for k in range(algebra.depth + 1)]
    results = {"levels": levels, "span_sizes": [len(lv) for lv in levels]}
    ok = True
    rows = []
    if args.verify:
        sizes = _truncations(args.trunc) if not algebra.symbolic else ()
        ver = verify_filtration(algebra, sizes, args.s_grid, args.sigma_cap)
        results["verification"] = ver.rows()
        rows = ver.rows()
        ok = ver.passed
    if args.pdo_t is not None:
        sizes = _truncations(args.trunc)
        span = build_pdo_from_do(algebra, args.pdo_t, args.pdo_l, sizes, s_grid=args.s_grid)
        results["pdo"] = span.rows()
        rows = rows + [{"test": "pdo", **r} for r in span.rows()]
        ok = ok and span.passed
    params = {
        "model": spectrum_label,
        "generators": [[str(g[2]), g[1]] for g in gens],
        "depth": args.depth,
        "closure_depth": args.closure_depth,
        "max_span": args.max_span,
    }
    return "PASS" if ok else "FAIL", params, results, rows


def cmd_check_regularity(args):
    T = load_triple(args.model)
    sizes = _truncations(args.trunc or T.sizes)
    structure = [T.validate(N) for N in sizes]
    comm = bounded_commutator_check(T, sizes)
    probe = regularity_probe(T, args.max_k, sizes)
    compact = compact_resolvent_check(T, args.compact_trunc or None)
    ok = all(s.passed for s in structure) and comm.passed and probe.passed
    if args.require_compact:
        ok = ok and compact.passed
    results = {
        "structure": [vars(s) | {"verdict": "PASS" if s.passed else "FAIL"} for s in structure],
        "bounded_commutators": comm.to_dict(),
        "compact_resolvent": compact.to_dict(),
        "regularity": probe.to_dict(),
    }
    params = {"model": T.label, "max_k": args.max_k, "trunc": list(sizes), "require_compact": args.require_compact}
    return "PASS" if ok else "FAIL", params, results, probe.rows()


def cmd_product_check(args):
    T1, T2 = load_triple(args.left), load_triple(args.right)
    split = product_square_split(T1, T2, args.split_N)
    probe_sizes = _truncations(args.trunc)
    order_sizes = _truncations(args.order_trunc)
    rep = product_regularity_check(
        T1, T2, args.k, args.l, args.identity_N, order_sizes, probe_sizes, args.max_k, args.max_pairs
    )
    ok = split.passed and rep.passed
    results = {"square_split": vars(split) | {"verdict": "PASS" if split.passed else "FAIL"}, **rep.to_dict()}
    params = {
        "left": T1.label,
        "right": T2.label,
        "k": args.k,
        "l": args.l,
        "max_k": args.max_k,
        "trunc": list(probe_sizes),
        "order_trunc": list(order_sizes),
        "identity_N": args.identity_N,
        "split_N": args.split_N,
    }
    return "PASS" if ok else "FAIL", params, results, rep.probe.rows() if rep.probe else []


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of option values")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--csv", help="write flat CSV rows here")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_args(p, default_op="u"):
    p.add_argument("--model", default="circle", help="spectrum name (circle, oscillator) or JSON path")
    p.add_argument("--op", default=None, help=f"operator expression (default {default_op!r})")
    p.add_argument("--weyl", default=None, help="one-mode Weyl expression realized on the oscillator basis")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdocalc", description="Desk-scale pseudodifferential calculus checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-order", help="slope test for analytic order <= t")
    _common(p)
    _model_args(p)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--trunc", type=int_list, default=(128, 256, 512))
    p.add_argument("--s-grid", type=float_list, default=DEFAULT_S_GRID)
    p.set_defaults(func=cmd_estimate_order)

    p = sub.add_parser("verify-taylor", help="order of the Taylor remainder of Delta^z Y")
    _common(p)
    _model_args(p)
    p.add_argument("--z", type=complex_arg, default=complex(0.5))
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--order-y", type=float, default=None, help="order of Y (default: its claimed order)")
    p.add_argument("--trunc", type=int_list, default=(64, 128, 256, 512))
    p.add_argument("--s-grid", type=float_list, default=DEFAULT_S_GRID)
    p.add_argument("--require-sharp", action="store_true", help="also require FAIL two orders below")
    p.set_defaults(func=cmd_verify_taylor)

    p = sub.add_parser("verify-delta-identities", help="binomial and square identities for delta")
    _common(p)
    _model_args(p)
    p.add_argument("--k", type=int, default=4, help="largest binomial exponent")
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--interior", type=int, default=None)
    p.set_defaults(func=cmd_verify_delta_identities)

    p = sub.add_parser("weyl-filtration", help="order bookkeeping in the Weyl algebra")
    _common(p)
    p.add_argument("--expr", required=False, default=None)
    p.add_argument("--n", type=int, default=None, help="number of variables")
    p.add_argument("--with", dest="with_expr", default=None, help="second element for product checks")
    p.add_argument("--K", type=int, default=None, help="Hermite truncation for a homomorphism check")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_weyl_filtration)

    p = sub.add_parser("build-algebra", help="spanning sets of the generated filtered algebra")
    _common(p)
    p.add_argument("--model", default="circle")
    p.add_argument("--gen", action="append", default=None, help="EXPR:DEGREE operator generator (repeatable)")
    p.add_argument("--weyl-gen", action="append", default=None, help="EXPR:DEGREE Weyl generator (repeatable)")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--closure-depth", type=int, default=2)
    p.add_argument("--max-span", type=int, default=256)
    p.add_argument("--verify", action="store_true", help="check every element of degree k has order <= k")
    p.add_argument("--trunc", type=int_list, default=(256, 512, 1024))
    p.add_argument("--s-grid", type=float_list, default=DEFAULT_S_GRID)
    p.add_argument("--sigma-cap", type=float, default=SIGMA_CAP)
    p.add_argument("--pdo-t", type=float, default=None, help="also emit X Delta^((z-m)/2) and certify order <= t")
    p.add_argument("--pdo-l", type=float, default=-10.0)
    p.set_defaults(func=cmd_build_algebra)

    p = sub.add_parser("check-regularity", help="bounded commutators, compactness and delta towers")
    _common(p)
    p.add_argument("--model", default="circle", help="triple name or JSON path")
    p.add_argument("--max-k", type=int, default=4)
    p.add_argument("--trunc", type=int_list, default=None)
    p.add_argument("--compact-trunc", type=int_list, default=None)
    p.add_argument("--require-compact", action="store_true")
    p.set_defaults(func=cmd_check_regularity)

    p = sub.add_parser("product-check", help="graded product identities, orders and regularity")
    _common(p)
    p.add_argument("--left", default="circle")
    p.add_argument("--right", default="circle")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--max-k", type=int, default=3)
    p.add_argument("--trunc", type=int_list, default=(16, 32, 64))
    p.add_argument("--order-trunc", type=int_list, default=(8, 16, 32))
    p.add_argument("--identity-N", type=int, default=16)
    p.add_argument("--split-N", type=int, default=8)
    p.add_argument("--max-pairs", type=int, default=6)
    p.set_defaults(func=cmd_product_check)
    return parser


_CONVERTERS = {
    "trunc": int_list,
    "compact_trunc": int_list,
    "order_trunc": int_list,
    "s_grid": float_list,
    "z": complex_arg,
}


def _apply_config(parser, args, argv):
    if not args.config:
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    given |= {"with_expr"} if "with" in given else set()
    for key, value in cfg.items():
        dest = "with_expr" if key == "with" else key.replace("-", "_")
        if dest in ("config", "func", "command"):
            continue
        if not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        if dest in given:
            continue
        conv = _CONVERTERS.get(dest)
        setattr(args, dest, conv(value) if conv and value is not None else value)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _apply_config(parser, args, argv)
        if args.command == "weyl-filtration" and not args.expr:
            raise ConfigError("--expr is required")
        verdict, params, results, rows = args.func(args)
    except (ConfigError, ExprError, WeylParseError, SpectrumError, TripleError, SpanLimitError, argparse.ArgumentTypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = reports.envelope(args.command, verdict, params, results)
    try:
        if args.out:
            reports.write_json(args.out, report)
        if args.csv:
            reports.write_csv(args.csv, rows)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {verdict}")
    return 0 if verdict == "PASS" else 1


if __name__ == "__main__":
    sys.exit(main())
