"""Reference evaluator: runs equations in definition order."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .ir import Atom, Literal, LinearProgram, Program, ProgramError, Tensor, as_tensor
from .rules import PRIMITIVES


def _bind_args(vars_, args) -> dict[str, Tensor]:
    if len(args) != len(vars_):
        raise ProgramError(f"expected {len(vars_)} arguments, got {len(args)}")
    env = {}
    for v, a in zip(vars_, args):
        t = as_tensor(a)
        if t.shape != v.shape:
            raise ProgramError(f"argument for {v.name} has shape {t.shape}, expected {v.shape}")
        env[v.name] = t
    return env


def _run(prog: Program, env: dict[str, Tensor]) -> list[Tensor]:
    def read(a: Atom) -> Tensor:
        return a.value if isinstance(a, Literal) else env[a.name]

    # IEEE results (inf/nan) at div/log singularities, not errors
    with np.errstate(all="ignore"):
        for eqn in prog.eqns:
            impl = PRIMITIVES[eqn.prim].impl
            env[eqn.out.name] = impl(*[read(a) for a in eqn.inputs], **eqn.params)
    return [read(a) for a in prog.outputs]


def eval_program(prog: Program, args: Sequence) -> list[Tensor]:
    return _run(prog, _bind_args(prog.inputs, args))


def eval_linear(lp: LinearProgram, linear_args: Sequence) -> list[Tensor]:
    if len(lp.linear_inputs) != len(lp.prog.inputs):
        raise ProgramError("non-linear inputs must be baked in as literals before evaluation")
    env = _bind_args(lp.linear_inputs, linear_args)
    return _run(lp.prog, env)
