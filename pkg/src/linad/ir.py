"""Program representation for straight-line tensor programs.

A program is an SSA/ANF trace: a list of input variables, a list of
equations (one primitive application each, single output) and a list of
output atoms.  Values are float64 numpy arrays of rank 0, 1 or 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

Shape = tuple[int, ...]
Tensor = np.ndarray

MAX_RANK = 2


def as_tensor(value) -> Tensor:
    """Convert ``value`` into a read-only float64 array of rank <= 2."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise ValueError(f"rank {arr.ndim} tensors are not supported")
    arr.setflags(write=False)
    return arr


def zeros(shape: Shape) -> Tensor:
    return as_tensor(np.zeros(shape))


def shape_str(shape: Shape) -> str:
    if not shape:
        return "f64"
    return "f64[" + ", ".join(str(d) for d in shape) + "]"


def format_float(v: float) -> str:
    """Shortest repr that round-trips; integral values drop the ``.0``."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    r = repr(v)
    return r[:-2] if r.endswith(".0") else r


def format_tensor(t: Tensor) -> str:
    t = np.asarray(t)
    if t.ndim == 0:
        return format_float(t)
    if t.ndim == 1:
        return "[" + ", ".join(format_float(v) for v in t) + "]"
    if t.shape[0] == 0:
        raise ValueError(f"a {t.shape} literal has no textual form")
    return "[" + ", ".join(format_tensor(row) for row in t) + "]"


@dataclass(frozen=True)
class Var:
    name: str
    shape: Shape = ()

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class Literal:
    value: Tensor

    def __post_init__(self):
        object.__setattr__(self, "value", as_tensor(self.value))

    @property
    def shape(self) -> Shape:
        return self.value.shape

    def __eq__(self, other) -> bool:
        # bit-level equality, so -0.0 != 0.0 and nan == nan
        return (
            isinstance(other, Literal)
            and self.value.shape == other.value.shape
            and self.value.tobytes() == other.value.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.value.shape, self.value.tobytes()))

    def __str__(self) -> str:
        return format_tensor(self.value)


Atom = Union[Var, Literal]


@dataclass(frozen=True)
class Equation:
    out: Var
    prim: str
    inputs: tuple[Atom, ...]
    params: Mapping[str, int] = field(default_factory=dict)

    def __str__(self) -> str:
        text = f"{self.out.name} = {self.prim} " + ", ".join(str(a) for a in self.inputs)
        if self.params:
            text += " {" + ", ".join(f"{k}={v}" for k, v in self.params.items()) + "}"
        return text


@dataclass(frozen=True)
class Program:
    inputs: tuple[Var, ...]
    eqns: tuple[Equation, ...]
    outputs: tuple[Atom, ...]
    name: str = "f"

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "eqns", tuple(self.eqns))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    @property
    def input_shapes(self) -> list[Shape]:
        return [v.shape for v in self.inputs]

    @property
    def output_shapes(self) -> list[Shape]:
        return [a.shape for a in self.outputs]


@dataclass(frozen=True)
class LinearProgram:
    """A program together with the inputs it is claimed to be linear in."""

    prog: Program
    linear_inputs: tuple[Var, ...]

    def __post_init__(self):
        object.__setattr__(self, "linear_inputs", tuple(self.linear_inputs))

    @classmethod
    def of(cls, prog: Program) -> "LinearProgram":
        return cls(prog, prog.inputs)


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    message: str
    eqn_index: int | None = None
    eqn: str | None = None

    def __str__(self) -> str:
        where = "program" if self.eqn_index is None else f"eqn {self.eqn_index} `{self.eqn}`"
        return f"{where}: {self.rule}: {self.message}"


class ProgramError(Exception):
    """A program failed validation or a transform's input contract."""

    def __init__(self, message: str, diagnostics: Sequence[Diagnostic] = ()):
        self.diagnostics = list(diagnostics)
        if self.diagnostics:
            message += "\n" + "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(message)


class LinearityError(ProgramError):
    """A program that must be structurally linear is not."""


def _diag(rule, message, i=None, eqn=None) -> Diagnostic:
    return Diagnostic(rule, message, i, None if eqn is None else str(eqn))


def validate(prog: Program) -> list[Diagnostic]:
    """Check SSA, definition order and shape rules; return all violations."""
    from .rules import PRIMITIVES, ShapeError, infer_shape

    diags: list[Diagnostic] = []
    defined: dict[str, Shape] = {}
    later = {e.out.name for e in prog.eqns}

    for v in prog.inputs:
        if v.name in defined:
            diags.append(_diag("redefinition", f"input {v.name} bound twice"))
        if len(v.shape) > MAX_RANK or any(d < 0 for d in v.shape):
            diags.append(_diag("rank", f"input {v.name} has unsupported shape {v.shape}"))
        defined[v.name] = v.shape

    def check_atom(a, i, eqn):
        if isinstance(a, Literal):
            return
        if a.name not in defined:
            detail = "defined later" if a.name in later else "never defined"
            diags.append(_diag("use before def", f"{a.name} is {detail}", i, eqn))
        elif defined[a.name] != a.shape:
            diags.append(
                _diag("shape mismatch",
                      f"{a.name} used as {a.shape} but bound as {defined[a.name]}", i, eqn))

    for i, eqn in enumerate(prog.eqns):
        for a in eqn.inputs:
            check_atom(a, i, eqn)
        if eqn.prim not in PRIMITIVES:
            diags.append(_diag("unknown primitive", f"no primitive named {eqn.prim!r}", i, eqn))
        else:
            try:
                inferred = infer_shape(eqn.prim, [a.shape for a in eqn.inputs], eqn.params)
            except ShapeError as e:
                diags.append(_diag(e.rule, str(e), i, eqn))
            else:
                if inferred != eqn.out.shape:
                    diags.append(
                        _diag("shape mismatch",
                              f"output declared {eqn.out.shape}, rule gives {inferred}", i, eqn))
        if eqn.out.name in defined:
            diags.append(_diag("redefinition", f"{eqn.out.name} bound twice", i, eqn))
        defined[eqn.out.name] = eqn.out.shape

    for a in prog.outputs:
        if isinstance(a, Var) and a.name not in defined:
            diags.append(_diag("undefined output", f"output {a.name} is never defined"))
        elif isinstance(a, Var) and defined[a.name] != a.shape:
            diags.append(_diag("shape mismatch", f"output {a.name} has inconsistent shape"))
    return diags


def check_linear(lp: LinearProgram) -> list[Diagnostic]:
    """Forward dataflow check of structural linearity in ``lp.linear_inputs``.

    Each variable is either linear-dependent or known.  Known equations are
    evaluated so that affine leaks (a nonzero constant fed to a linear slot,
    or a nonzero constant output) can be reported.  All non-linear inputs
    must already have been replaced by literals.
    """
    from .rules import PRIMITIVES, Linearity

    diags: list[Diagnostic] = []
    linear_names = {v.name for v in lp.linear_inputs}
    for v in lp.prog.inputs:
        if v.name not in linear_names:
            diags.append(_diag("non-linear input",
                               f"input {v.name} is not linear; bake it in as a literal"))
    dependent: set[str] = set(linear_names)
    known: dict[str, Tensor] = {}

    def value(a):
        return a.value if isinstance(a, Literal) else known.get(a.name)

    for i, eqn in enumerate(lp.prog.eqns):
        spec = PRIMITIVES[eqn.prim]
        dep = [isinstance(a, Var) and a.name in dependent for a in eqn.inputs]
        if not any(dep):
            vals = [value(a) for a in eqn.inputs]
            if all(v is not None for v in vals):
                with np.errstate(all="ignore"):
                    known[eqn.out.name] = spec.impl(*vals, **eqn.params)
            continue
        dependent.add(eqn.out.name)
        if spec.linearity is Linearity.NONLINEAR:
            diags.append(_diag("nonlinear use", f"{eqn.prim} applied to a linear value", i, eqn))
        elif spec.linearity is Linearity.LINEAR:
            for a, d in zip(eqn.inputs, dep):
                v = None if d else value(a)
                if v is not None and np.any(v != 0):
                    diags.append(_diag("affine term",
                                       f"nonzero constant {a} added into a linear value", i, eqn))
        elif sum(dep) > 1:
            diags.append(_diag("bilinear use",
                               f"{eqn.prim} has {sum(dep)} linear operands", i, eqn))
        elif not all(p in spec.linear_positions for p, d in enumerate(dep) if d):
            diags.append(_diag("nonlinear use",
                               f"{eqn.prim} is not linear in operand "
                               f"{dep.index(True)}", i, eqn))

    for a in lp.prog.outputs:
        if isinstance(a, Var) and a.name in dependent:
            continue
        v = value(a)
        if v is not None and np.any(v != 0):
            diags.append(_diag("affine term", f"output {a} is a nonzero constant"))
    return diags
