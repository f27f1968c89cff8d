"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 parse/validation/contract error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import check
from .interp import eval_program
from .ir import LinearProgram, Program, ProgramError, format_tensor, validate
from .syntax import ParseError, parse_program, parse_tensor, print_program
from .transforms import grad, jvp_transform, linearize, transpose_program, vjp


class UsageError(Exception):
    pass


def load(path: str) -> Program:
    prog = parse_program(Path(path).read_text(encoding="utf-8"))
    diags = validate(prog)
    if diags:
        raise ProgramError(f"{path}: invalid program", diags)
    return prog


def _tensors(texts) -> list[np.ndarray]:
    return [parse_tensor(t) for t in texts or []]


def _linear_indices(spec: str, n: int) -> list[int]:
    try:
        idx = [int(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--linear expects comma-separated input indices, got {spec!r}") from None
    if any(not 0 <= i < n for i in idx) or len(set(idx)) != len(idx):
        raise UsageError(f"--linear indices must be distinct and in 0..{n - 1}")
    return idx


def cmd_eval(args) -> int:
    prog = load(args.file)
    for t in eval_program(prog, _tensors(args.args)):
        print(format_tensor(t))
    return 0


def cmd_jvp(args) -> int:
    print(print_program(jvp_transform(load(args.file))), end="")
    return 0


def cmd_linearize(args) -> int:
    prog = load(args.file)
    y, lp = linearize(prog, _tensors(args.at))
    for i, t in enumerate(y):
        print(f"# y{i} = {format_tensor(t)}")
    print(print_program(lp.prog), end="")
    return 0


def cmd_transpose(args) -> int:
    prog = load(args.file)
    idx = _linear_indices(args.linear, len(prog.inputs))
    lp = LinearProgram(prog, tuple(prog.inputs[i] for i in idx))
    print(print_program(transpose_program(lp).prog), end="")
    return 0


def cmd_vjp(args) -> int:
    prog = load(args.file)
    y, x_ct = vjp(prog, _tensors(args.at), _tensors(args.ct))
    for i, t in enumerate(y):
        print(f"y{i} = {format_tensor(t)}")
    for v, t in zip(prog.inputs, x_ct):
        print(f"ct_{v.name} = {format_tensor(t)}")
    return 0


def cmd_grad(args) -> int:
    for t in grad(load(args.file), _tensors(args.at)):
        print(format_tensor(t))
    return 0


def cmd_check(args) -> int:
    prog = load(args.file)
    x = _tensors(args.at) if args.at else check.sample_inputs(prog, args.seed)
    corpus = [(args.seed, prog, x)]
    _, lp = linearize(prog, x)
    dot = check.dot_product_check(lp, args.trials, args.seed).max_residual
    results = [
        check.SuiteResult("residual linearity", not check.residual_linearity(corpus).failures,
                          "linearized program is structurally linear"),
        check.SuiteResult("dot-product test", dot <= 1e-9, f"max residual {dot:.3g} (tol 1e-9)"),
    ]
    err = check.mode_agreement_error(corpus)
    results.append(check.SuiteResult("mode agreement", err <= 1e-10,
                                     f"max scaled error {err:.3g} (tol 1e-10)"))
    err = check.fd_error(corpus, 5, args.seed)
    results.append(check.SuiteResult("finite differences", err <= 1e-5,
                                     f"max relative error {err:.3g} (tol 1e-5)"))
    ok = not check.primal_mismatches(corpus).failures
    results.append(check.SuiteResult("primal fidelity", ok, "vjp primal equals eval"))
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_selftest(args) -> int:
    results = check.run_suite(args.seed, args.corpus, progress=print)
    print(check.rule_count_line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linad", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("eval", help="evaluate a program")
    s.add_argument("file")
    s.add_argument("--args", nargs="*", default=[], metavar="TENSOR")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("jvp", help="print the forward-mode program")
    s.add_argument("file")
    s.set_defaults(fn=cmd_jvp)

    s = sub.add_parser("linearize", help="print primal outputs and the linear tangent program")
    s.add_argument("file")
    s.add_argument("--at", nargs="*", default=[], metavar="TENSOR")
    s.set_defaults(fn=cmd_linearize)

    s = sub.add_parser("transpose", help="print the transpose of a linear program")
    s.add_argument("file")
    s.add_argument("--linear", required=True, metavar="I,J,...")
    s.set_defaults(fn=cmd_transpose)

    s = sub.add_parser("vjp", help="primal outputs and input cotangents")
    s.add_argument("file")
    s.add_argument("--at", nargs="*", default=[], metavar="TENSOR")
    s.add_argument("--ct", nargs="*", default=[], metavar="TENSOR")
    s.set_defaults(fn=cmd_vjp)

    s = sub.add_parser("grad", help="gradient of a scalar-output program")
    s.add_argument("file")
    s.add_argument("--at", nargs="*", default=[], metavar="TENSOR")
    s.set_defaults(fn=cmd_grad)

    s = sub.add_parser("check", help="run derivative checks on one program")
    s.add_argument("file")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--at", nargs="*", default=None, metavar="TENSOR")
    s.set_defaults(fn=cmd_check)

    s = sub.add_parser("selftest", help="run the random-corpus property suite")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--corpus", type=int, default=200)
    s.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ProgramError, UsageError, OSError, ValueError) as e:
        print(f"linad: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
