"""Program transformations.

Reverse mode is built from two program-to-program passes: ``linearize``
(forward-mode JVP followed by partial evaluation at the primal point) and
``transpose_program``.  ``vjp`` and ``grad`` are compositions of the two.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .interp import eval_linear
from .ir import (Atom, Equation, Literal, LinearityError, LinearProgram, Program, ProgramError,
                 Tensor, Var, as_tensor, check_linear, validate, zeros)
from .rules import PRIMITIVES, Builder, apply_jvp_rule, apply_transpose_rule


@dataclass(frozen=True)
class Known:
    value: Tensor


@dataclass(frozen=True)
class Unknown:
    var: Var


PartialValue = Union[Known, Unknown]


def _require_valid(prog: Program) -> None:
    diags = validate(prog)
    if diags:
        raise ProgramError("program failed validation", diags)


def _names(prog: Program) -> list[str]:
    return [v.name for v in prog.inputs] + [e.out.name for e in prog.eqns]


def jvp_transform(prog: Program) -> Program:
    """Forward mode: ``(x..., tx...) -> (y..., ty...)``.

    All primal inputs come first, then one tangent input per primal input.
    Each source equation is followed by the equations of its JVP rule.
    """
    _require_valid(prog)
    b = Builder(_names(prog))
    b.inputs.extend(prog.inputs)
    tangent: dict[str, Optional[Atom]] = {}
    for v in prog.inputs:
        tangent[v.name] = b.add_input(v.shape, "d" + v.name)

    def tan(a: Atom) -> Optional[Atom]:
        return None if isinstance(a, Literal) else tangent[a.name]

    for eqn in prog.eqns:
        b.append(eqn)
        tangent[eqn.out.name] = apply_jvp_rule(eqn, [tan(a) for a in eqn.inputs], b)

    out_tangents = []
    for a in prog.outputs:
        t = tan(a)
        out_tangents.append(Literal(zeros(a.shape)) if t is None else t)
    return b.build(list(prog.outputs) + out_tangents, prog.name)


def partial_eval(prog: Program, known: Sequence[bool],
                 known_vals: Sequence) -> tuple[list[PartialValue], Program]:
    """Evaluate everything that depends only on known inputs; stage the rest.

    An equation is evaluated now iff all of its inputs are known.  Staged
    equations reference known values as literals.  ``known_vals`` holds one
    tensor per flagged input, in input order.
    """
    _require_valid(prog)
    if len(known) != len(prog.inputs):
        raise ProgramError(f"expected {len(prog.inputs)} known flags, got {len(known)}")
    flagged = [v for v, k in zip(prog.inputs, known) if k]
    if len(known_vals) != len(flagged):
        raise ProgramError(f"expected {len(flagged)} known values, got {len(known_vals)}")

    env: dict[str, PartialValue] = {}
    vals = iter(known_vals)
    staged_inputs = []
    for v, k in zip(prog.inputs, known):
        if k:
            t = as_tensor(next(vals))
            if t.shape != v.shape:
                raise ProgramError(f"known value for {v.name} has shape {t.shape}, "
                                   f"expected {v.shape}")
            env[v.name] = Known(t)
        else:
            env[v.name] = Unknown(v)
            staged_inputs.append(v)

    def read(a: Atom) -> PartialValue:
        return Known(a.value) if isinstance(a, Literal) else env[a.name]

    staged_eqns = []
    with np.errstate(all="ignore"):
        for eqn in prog.eqns:
            ins = [read(a) for a in eqn.inputs]
            if all(isinstance(p, Known) for p in ins):
                impl = PRIMITIVES[eqn.prim].impl
                env[eqn.out.name] = Known(impl(*[p.value for p in ins], **eqn.params))
                continue
            atoms = tuple(Literal(p.value) if isinstance(p, Known) else p.var for p in ins)
            staged_eqns.append(Equation(eqn.out, eqn.prim, atoms, eqn.params))
            env[eqn.out.name] = Unknown(eqn.out)

    resolved = [read(a) for a in prog.outputs]
    staged_outputs = [p.var for p in resolved if isinstance(p, Unknown)]
    return resolved, Program(tuple(staged_inputs), tuple(staged_eqns), tuple(staged_outputs),
                             prog.name)


def linearize(prog: Program, x: Sequence) -> tuple[list[Tensor], LinearProgram]:
    """Primal outputs at ``x`` and the linear tangent map ``dx -> dy``."""
    n_in, n_out = len(prog.inputs), len(prog.outputs)
    if len(x) != n_in:
        raise ProgramError(f"expected {n_in} primal values, got {len(x)}")
    jp = jvp_transform(prog)
    resolved, staged = partial_eval(jp, [True] * n_in + [False] * n_in, x)
    y = []
    for p in resolved[:n_out]:
        assert isinstance(p, Known), "primal output depends on a tangent"
        y.append(p.value)
    outputs = [p.var if isinstance(p, Unknown) else Literal(p.value) for p in resolved[n_out:]]
    lp = LinearProgram.of(Program(staged.inputs, staged.eqns, tuple(outputs), prog.name))
    diags = check_linear(lp)
    if diags:
        raise LinearityError("internal error: a JVP rule produced a nonlinear tangent", diags)
    return y, lp


def _dependence(lp: LinearProgram) -> tuple[set[str], dict[str, Tensor]]:
    """Linear-dependent variable names, and values of the known ones."""
    dependent = {v.name for v in lp.linear_inputs}
    known: dict[str, Tensor] = {}
    with np.errstate(all="ignore"):
        for eqn in lp.prog.eqns:
            if any(isinstance(a, Var) and a.name in dependent for a in eqn.inputs):
                dependent.add(eqn.out.name)
            else:
                vals = [a.value if isinstance(a, Literal) else known[a.name] for a in eqn.inputs]
                known[eqn.out.name] = PRIMITIVES[eqn.prim].impl(*vals, **eqn.params)
    return dependent, known


def transpose_program(lp: LinearProgram) -> LinearProgram:
    """Transpose a structurally linear program: ``ct_out... -> ct_in...``.

    Known subcomputations are evaluated first and frozen as literals.  The
    equations are then walked in reverse, accumulating cotangents with
    ``add``; variables that never receive a cotangent are symbolic zeros.
    """
    _require_valid(lp.prog)
    diags = check_linear(lp)
    if diags:
        raise LinearityError("program is not structurally linear", diags)
    dependent, known = _dependence(lp)

    b = Builder()
    cts: dict[str, Atom] = {}

    def accumulate(name: str, g: Atom) -> None:
        cts[name] = b.bind("add", cts[name], g) if name in cts else g

    for i, a in enumerate(lp.prog.outputs):
        hint = f"ct_{a.name}" if isinstance(a, Var) else f"ct{i}"
        ct = b.add_input(a.shape, hint)
        if isinstance(a, Var) and a.name in dependent:
            accumulate(a.name, ct)

    def freeze(a: Atom) -> Atom:
        if isinstance(a, Var) and a.name in known:
            return Literal(known[a.name])
        return a

    for eqn in reversed(lp.prog.eqns):
        if eqn.out.name not in dependent or eqn.out.name not in cts:
            continue
        ct = cts.pop(eqn.out.name)
        frozen = Equation(eqn.out, eqn.prim, tuple(freeze(a) for a in eqn.inputs), eqn.params)
        flags = [not (isinstance(a, Var) and a.name in dependent) for a in eqn.inputs]
        contributions = apply_transpose_rule(frozen, ct, flags, b)
        for a, g in zip(eqn.inputs, contributions):
            if g is not None:
                accumulate(a.name, g)

    outputs = [cts.get(v.name, Literal(zeros(v.shape))) for v in lp.linear_inputs]
    return LinearProgram.of(b.build(outputs, lp.prog.name + "_t"))


def vjp(prog: Program, x: Sequence, ct: Sequence) -> tuple[list[Tensor], list[Tensor]]:
    y, lp = linearize(prog, x)
    if len(ct) != len(y):
        raise ProgramError(f"expected {len(y)} output cotangents, got {len(ct)}")
    x_ct = eval_linear(transpose_program(lp), ct)
    return y, x_ct


def grad(prog: Program, x: Sequence) -> list[Tensor]:
    if len(prog.outputs) != 1 or prog.outputs[0].shape != ():
        raise ProgramError("grad needs exactly one scalar output, got shapes "
                           f"{prog.output_shapes}")
    _, x_ct = vjp(prog, x, [1.0])
    return x_ct
