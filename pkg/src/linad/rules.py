"""The primitive registry.

Every primitive has an evaluation rule, a shape rule, a linearity class and
a JVP rule.  Only primitives that are linear in at least one operand carry
a transpose rule; reverse mode needs nothing else.

JVP rules see ``(b, eqn, tangents)`` where ``tangents[i]`` is an atom or
``None`` (a symbolic zero), and return the output tangent atom or ``None``.
Transpose rules see ``(b, eqn, ct, known)`` and return one atom-or-``None``
per input; known inputs always get ``None``.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .ir import Atom, Equation, Literal, LinearityError, Program, Shape, Var, as_tensor, zeros


class Linearity(enum.Enum):
    LINEAR = "linear"            # linear jointly in all operands
    PER_OPERAND = "per-operand"  # linear in each operand separately
    IN_POSITION = "in-position"  # linear only in some operands
    NONLINEAR = "nonlinear"


class ShapeError(ValueError):
    def __init__(self, message: str, rule: str = "shape mismatch"):
        super().__init__(message)
        self.rule = rule


class RegistryError(KeyError):
    pass


class TransposeRuleMissing(RegistryError):
    pass


@dataclass(frozen=True)
class PrimitiveSpec:
    name: str
    arity: int
    linearity: Linearity
    linear_positions: tuple[int, ...]
    param_names: tuple[str, ...]
    shape_rule: Callable[..., Shape]
    impl: Callable[..., np.ndarray]
    jvp: Callable
    transpose: Optional[Callable] = None


class Builder:
    """Equation sink with fresh-name generation, owned by one transform."""

    def __init__(self, reserved: Sequence[str] = ()):
        self._used = set(reserved)
        self._counter = itertools.count()
        self.inputs: list[Var] = []
        self.eqns: list[Equation] = []

    def fresh(self, hint: str = "t") -> str:
        if hint not in self._used:
            self._used.add(hint)
            return hint
        while True:
            name = f"{hint}{next(self._counter)}"
            if name not in self._used:
                self._used.add(name)
                return name

    def add_input(self, shape: Shape, hint: str) -> Var:
        v = Var(self.fresh(hint), tuple(shape))
        self.inputs.append(v)
        return v

    def bind(self, prim: str, *inputs: Atom, **params: int) -> Var:
        shape = infer_shape(prim, [a.shape for a in inputs], params)
        out = Var(self.fresh(), shape)
        self.eqns.append(Equation(out, prim, tuple(inputs), params))
        return out

    def append(self, eqn: Equation) -> None:
        self._used.add(eqn.out.name)
        self.eqns.append(eqn)

    def build(self, outputs: Sequence[Atom], name: str = "f") -> Program:
        return Program(tuple(self.inputs), tuple(self.eqns), tuple(outputs), name)


# -- shape rules -------------------------------------------------------------

def _same(*shapes):
    if any(s != shapes[0] for s in shapes):
        raise ShapeError(f"operand shapes differ: {', '.join(map(str, shapes))}")
    return shapes[0]


def _scalar_broadcast(x, y):
    if x == y or y == ():
        return x
    if x == ():
        return y
    raise ShapeError(f"operand shapes {x} and {y} differ and neither is scalar")


def _div_shape(x, y):
    if x == y or y == ():
        return x
    raise ShapeError(f"divisor shape {y} must match {x} or be scalar")


def _rank(s, *ranks):
    if len(s) not in ranks:
        raise ShapeError(f"expected rank in {ranks}, got shape {s}")


def _sum_shape(x):
    _rank(x, 1, 2)
    return ()


def _broadcast_shape(x, **p):
    _rank(x, 0)
    shape = (p["m"], p["n"]) if "m" in p else (p["n"],)
    return shape


def _dot_shape(x, y):
    _rank(x, 1)
    _rank(y, 1)
    _same(x, y)
    return ()


def _matvec_shape(m, v):
    _rank(m, 2)
    _rank(v, 1)
    if m[1] != v[0]:
        raise ShapeError(f"matvec of {m} with {v}")
    return (m[0],)


def _outer_shape(u, w):
    _rank(u, 1)
    _rank(w, 1)
    return (u[0], w[0])


def _transpose2d_shape(m):
    _rank(m, 2)
    return (m[1], m[0])


def _slice_shape(x, start, stop):
    _rank(x, 1)
    if not 0 <= start <= stop <= x[0]:
        raise ShapeError(f"slice [{start}:{stop}] out of bounds for {x}", "bad params")
    return (stop - start,)


def _pad_zero_shape(x, start, total):
    _rank(x, 1)
    if start < 0 or start + x[0] > total:
        raise ShapeError(f"cannot embed {x} at offset {start} in length {total}", "bad params")
    return (total,)


def _concat_shape(x, y):
    _rank(x, 1)
    _rank(y, 1)
    return (x[0] + y[0],)


def infer_shape(prim: str, shapes: Sequence[Shape], params: Mapping[str, int]) -> Shape:
    try:
        spec = PRIMITIVES[prim]
    except KeyError:
        raise ShapeError(f"no primitive named {prim!r}", "unknown primitive") from None
    if len(shapes) != spec.arity:
        raise ShapeError(f"{prim} takes {spec.arity} operands, got {len(shapes)}", "arity")
    names = set(params)
    if prim == "broadcast":
        ok = names in ({"n"}, {"m", "n"})
    else:
        ok = names == set(spec.param_names)
    if not ok:
        raise ShapeError(f"{prim} expects params {list(spec.param_names)}, got {sorted(names)}",
                         "bad params")
    if any(not isinstance(v, (int, np.integer)) or v < 0 for v in params.values()):
        raise ShapeError(f"params must be non-negative integers: {dict(params)}", "bad params")
    for s in shapes:
        if len(s) > 2:
            raise ShapeError(f"rank {len(s)} operand", "rank")
    return tuple(int(d) for d in spec.shape_rule(*shapes, **params))


# -- evaluation --------------------------------------------------------------

def _bcast(x, **p):
    shape = (p["m"], p["n"]) if "m" in p else (p["n"],)
    return np.broadcast_to(x, shape)


def _pad_zero(x, start, total):
    out = np.zeros(total)
    out[start:start + x.shape[0]] = x
    return out


def _wrap(fn):
    def impl(*args, **params):
        return as_tensor(fn(*args, **params))
    impl.__name__ = getattr(fn, "__name__", "impl")
    return impl


# -- JVP rules ---------------------------------------------------------------
# tangent arguments are atoms in the sink, or None for a symbolic zero

def _zero_like(a: Atom) -> Literal:
    return Literal(zeros(a.shape))


def _jvp_add(b, eqn, t):
    tx, ty = t
    if tx is None or ty is None:
        return ty if tx is None else tx
    return b.bind("add", tx, ty)


def _jvp_sub(b, eqn, t):
    tx, ty = t
    if ty is None:
        return tx
    if tx is None:
        return b.bind("neg", ty)
    return b.bind("sub", tx, ty)


def _jvp_unary_linear(b, eqn, t):
    (tx,) = t
    if tx is None:
        return None
    return b.bind(eqn.prim, tx, **eqn.params)


def _jvp_bilinear(b, eqn, t):
    # d(x op y) = tx op y + x op ty, for any op bilinear in (x, y)
    x, y = eqn.inputs
    tx, ty = t
    terms = []
    if tx is not None:
        terms.append(b.bind(eqn.prim, tx, y))
    if ty is not None:
        terms.append(b.bind(eqn.prim, x, ty))
    if not terms:
        return None
    return terms[0] if len(terms) == 1 else b.bind("add", *terms)


def _jvp_div(b, eqn, t):
    x, y = eqn.inputs
    tx, ty = t
    out = None
    if tx is not None:
        out = b.bind("div", tx, y)
    if ty is not None:
        num = b.bind("mul", x, ty)
        den = b.bind("mul", y, y)
        term = b.bind("div", num, den)
        out = b.bind("neg", term) if out is None else b.bind("sub", out, term)
    return out


def _jvp_sin(b, eqn, t):
    (tx,) = t
    if tx is None:
        return None
    c = b.bind("cos", eqn.inputs[0])
    return b.bind("mul", c, tx)


def _jvp_cos(b, eqn, t):
    (tx,) = t
    if tx is None:
        return None
    s = b.bind("sin", eqn.inputs[0])
    return b.bind("neg", b.bind("mul", s, tx))


def _jvp_exp(b, eqn, t):
    (tx,) = t
    if tx is None:
        return None
    return b.bind("mul", eqn.out, tx)


def _jvp_log(b, eqn, t):
    (tx,) = t
    if tx is None:
        return None
    return b.bind("div", tx, eqn.inputs[0])


def _jvp_concat(b, eqn, t):
    tx, ty = t
    if tx is None and ty is None:
        return None
    x, y = eqn.inputs
    return b.bind("concat",
                  _zero_like(x) if tx is None else tx,
                  _zero_like(y) if ty is None else ty)


# -- transpose rules ---------------------------------------------------------

def _only_unknown(eqn, known):
    unknown = [i for i, k in enumerate(known) if not k]
    if len(unknown) != 1:
        raise LinearityError(
            f"{eqn.prim} needs exactly one linear operand, got {len(unknown)} in `{eqn}`")
    return unknown[0]


def _t_add(b, eqn, ct, known):
    return [None if k else ct for k in known]


def _t_sub(b, eqn, ct, known):
    kx, ky = known
    return [None if kx else ct, None if ky else b.bind("neg", ct)]


def _t_neg(b, eqn, ct, known):
    return [b.bind("neg", ct)]


def _t_mul(b, eqn, ct, known):
    i = _only_unknown(eqn, known)
    k = eqn.inputs[1 - i]
    g = b.bind("mul", k, ct)
    if eqn.inputs[i].shape == () and g.shape != ():
        g = b.bind("sum", g)
    out = [None, None]
    out[i] = g
    return out


def _t_div(b, eqn, ct, known):
    if _only_unknown(eqn, known) != 0:
        raise LinearityError(f"div is not linear in its denominator: `{eqn}`")
    g = b.bind("div", ct, eqn.inputs[1])
    if eqn.inputs[0].shape == () and g.shape != ():
        g = b.bind("sum", g)
    return [g, None]


def _t_sum(b, eqn, ct, known):
    shape = eqn.inputs[0].shape
    params = {"m": shape[0], "n": shape[1]} if len(shape) == 2 else {"n": shape[0]}
    return [b.bind("broadcast", ct, **params)]


def _t_broadcast(b, eqn, ct, known):
    return [b.bind("sum", ct)]


def _t_dot(b, eqn, ct, known):
    i = _only_unknown(eqn, known)
    out = [None, None]
    out[i] = b.bind("mul", ct, eqn.inputs[1 - i])
    return out


def _t_matvec(b, eqn, ct, known):
    m, v = eqn.inputs
    if _only_unknown(eqn, known) == 1:
        return [None, b.bind("matvec", b.bind("transpose2d", m), ct)]
    return [b.bind("outer", ct, v), None]


def _t_outer(b, eqn, ct, known):
    u, w = eqn.inputs
    if _only_unknown(eqn, known) == 0:
        return [b.bind("matvec", ct, w), None]
    return [None, b.bind("matvec", b.bind("transpose2d", ct), u)]


def _t_transpose2d(b, eqn, ct, known):
    return [b.bind("transpose2d", ct)]


def _t_slice(b, eqn, ct, known):
    p = eqn.params
    return [b.bind("pad_zero", ct, start=p["start"], total=eqn.inputs[0].shape[0])]


def _t_pad_zero(b, eqn, ct, known):
    start = eqn.params["start"]
    return [b.bind("slice", ct, start=start, stop=start + eqn.inputs[0].shape[0])]


def _t_concat(b, eqn, ct, known):
    nx, ny = eqn.inputs[0].shape[0], eqn.inputs[1].shape[0]
    kx, ky = known
    return [None if kx else b.bind("slice", ct, start=0, stop=nx),
            None if ky else b.bind("slice", ct, start=nx, stop=nx + ny)]


L, P, I, N = Linearity.LINEAR, Linearity.PER_OPERAND, Linearity.IN_POSITION, Linearity.NONLINEAR

_TABLE = [
    # name, arity, linearity, linear positions, params, shape, impl, jvp, transpose
    ("add", 2, L, (0, 1), (), _same, np.add, _jvp_add, _t_add),
    ("sub", 2, L, (0, 1), (), _same, np.subtract, _jvp_sub, _t_sub),
    ("neg", 1, L, (0,), (), _same, np.negative, _jvp_unary_linear, _t_neg),
    ("mul", 2, P, (0, 1), (), _scalar_broadcast, np.multiply, _jvp_bilinear, _t_mul),
    ("div", 2, I, (0,), (), _div_shape, np.divide, _jvp_div, _t_div),
    ("sin", 1, N, (), (), _same, np.sin, _jvp_sin, None),
    ("cos", 1, N, (), (), _same, np.cos, _jvp_cos, None),
    ("exp", 1, N, (), (), _same, np.exp, _jvp_exp, None),
    ("log", 1, N, (), (), _same, np.log, _jvp_log, None),
    ("sum", 1, L, (0,), (), _sum_shape, np.sum, _jvp_unary_linear, _t_sum),
    ("broadcast", 1, L, (0,), ("m", "n"), _broadcast_shape, _bcast, _jvp_unary_linear,
     _t_broadcast),
    ("dot", 2, P, (0, 1), (), _dot_shape, np.dot, _jvp_bilinear, _t_dot),
    ("matvec", 2, P, (0, 1), (), _matvec_shape, np.matmul, _jvp_bilinear, _t_matvec),
    ("outer", 2, P, (0, 1), (), _outer_shape, np.outer, _jvp_bilinear, _t_outer),
    ("transpose2d", 1, L, (0,), (), _transpose2d_shape, np.transpose, _jvp_unary_linear,
     _t_transpose2d),
    ("slice", 1, L, (0,), ("start", "stop"), _slice_shape,
     lambda x, start, stop: x[start:stop], _jvp_unary_linear, _t_slice),
    ("pad_zero", 1, L, (0,), ("start", "total"), _pad_zero_shape, _pad_zero,
     _jvp_unary_linear, _t_pad_zero),
    ("concat", 2, L, (0, 1), (), _concat_shape, lambda x, y: np.concatenate([x, y]),
     _jvp_concat, _t_concat),
]

# Treated as immutable; tests swap entries with monkeypatch for mutation canaries.
PRIMITIVES: dict[str, PrimitiveSpec] = {
    row[0]: PrimitiveSpec(row[0], row[1], row[2], row[3], row[4], row[5], _wrap(row[6]),
                          row[7], row[8])
    for row in _TABLE
}

NONLINEAR_PRIMS = frozenset(name for name, s in PRIMITIVES.items() if s.linearity is N)


def primitive_table() -> list[PrimitiveSpec]:
    return list(PRIMITIVES.values())


def rule_counts() -> tuple[int, int]:
    """(number of transpose rules, number of JVP rules) in the registry."""
    specs = primitive_table()
    return sum(s.transpose is not None for s in specs), sum(s.jvp is not None for s in specs)


def _spec(prim: str) -> PrimitiveSpec:
    try:
        return PRIMITIVES[prim]
    except KeyError:
        raise RegistryError(f"no primitive named {prim!r}") from None


def apply_jvp_rule(eqn: Equation, tangents: Sequence[Optional[Atom]], emit: Builder) -> Optional[Atom]:
    """Emit the tangent computation for ``eqn`` into ``emit``.

    ``tangents`` holds one atom or ``None`` (symbolic zero) per input.  The
    result is the output tangent, or ``None`` if it is identically zero.
    """
    spec = _spec(eqn.prim)
    if all(t is None for t in tangents):
        return None
    return spec.jvp(emit, eqn, list(tangents))


def apply_transpose_rule(eqn: Equation, ct: Atom, known: Sequence[bool],
                         emit: Builder) -> list[Optional[Atom]]:
    spec = _spec(eqn.prim)
    if spec.transpose is None:
        raise TransposeRuleMissing(f"{eqn.prim} is nonlinear and has no transpose rule")
    if all(known):
        return [None] * len(known)
    if spec.linearity is not Linearity.LINEAR:
        i = _only_unknown(eqn, known)
        if i not in spec.linear_positions:
            raise LinearityError(f"{eqn.prim} is not linear in operand {i}: `{eqn}`")
    return spec.transpose(emit, eqn, ct, list(known))
