import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linad.interp import eval_linear, eval_program
from linad.ir import Equation, LinearityError, LinearProgram, Program, Var
from linad.rules import (NONLINEAR_PRIMS, PRIMITIVES, Builder, Linearity, RegistryError,
                         TransposeRuleMissing, apply_jvp_rule, apply_transpose_rule,
                         primitive_table, rule_counts)
from linad.transforms import jvp_transform

from conftest import lit, single

# (prim, operand shapes, params); every primitive appears at least once
CASES = [
    ("add", [(3,), (3,)], {}),
    ("sub", [(2, 2), (2, 2)], {}),
    ("neg", [(2, 3)], {}),
    ("mul", [(3,), (3,)], {}),
    ("mul", [(), (3,)], {}),
    ("mul", [(2, 2), ()], {}),
    ("div", [(3,), (3,)], {}),
    ("div", [(2,), ()], {}),
    ("sin", [(3,)], {}),
    ("cos", [(2, 2)], {}),
    ("exp", [()], {}),
    ("log", [(3,)], {}),
    ("sum", [(4,)], {}),
    ("sum", [(2, 3)], {}),
    ("broadcast", [()], {"n": 3}),
    ("broadcast", [()], {"m": 2, "n": 3}),
    ("dot", [(3,), (3,)], {}),
    ("matvec", [(2, 3), (3,)], {}),
    ("outer", [(2,), (3,)], {}),
    ("transpose2d", [(2, 3)], {}),
    ("slice", [(4,)], {"start": 1, "stop": 3}),
    ("pad_zero", [(2,)], {"start": 1, "total": 4}),
    ("concat", [(2,), (3,)], {}),
]
IDS = [f"{p}-{'x'.join(map(str, s))}" for p, s, _ in CASES]


def _point(rng, prim, shapes):
    vals = []
    for i, s in enumerate(shapes):
        mag = rng.uniform(0.2, 2.0, size=s)
        # log arguments and divisors stay positive, away from the singularity
        if not (prim == "log" or (prim == "div" and i == 1)):
            mag = mag * rng.choice([-1.0, 1.0], size=s)
        vals.append(mag)
    return vals


def _flat(ts):
    return np.concatenate([np.ravel(t) for t in ts]) if ts else np.zeros(0)


def test_registry_counts():
    assert len(primitive_table()) == 18
    assert all(s.jvp is not None for s in primitive_table())
    assert rule_counts() == (14, 18)
    assert NONLINEAR_PRIMS == {"sin", "cos", "exp", "log"}
    for s in primitive_table():
        assert (s.transpose is None) == (s.linearity is Linearity.NONLINEAR)
    assert PRIMITIVES["div"].linearity is Linearity.IN_POSITION
    assert PRIMITIVES["div"].linear_positions == (0,)


@pytest.mark.parametrize("prim, shapes, params", CASES, ids=IDS)
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_jvp_matches_central_differences(prim, shapes, params, seed):
    rng = np.random.default_rng(seed)
    prog = single(prim, shapes, params=params)
    x = _point(rng, prim, shapes)
    v = [rng.standard_normal(s) for s in shapes]
    _, tangent = eval_program(jvp_transform(prog), x + v)
    eps = 1e-6 * (1 + np.max(np.abs(_flat(x))))
    (hi,) = eval_program(prog, [a + eps * b for a, b in zip(x, v)])
    (lo,) = eval_program(prog, [a - eps * b for a, b in zip(x, v)])
    fd = (hi - lo) / (2 * eps)
    err = np.max(np.abs(fd - tangent), initial=0) / (1 + np.max(np.abs(tangent), initial=0))
    assert err <= 1e-6


def _linear_patterns(prim, n):
    spec = PRIMITIVES[prim]
    if spec.linearity is Linearity.LINEAR:
        return [tuple(range(n))]
    return [(p,) for p in spec.linear_positions]


TRANSPOSE_CASES = [(p, s, prm, unk) for p, s, prm in CASES
                   if PRIMITIVES[p].transpose is not None
                   for unk in _linear_patterns(p, len(s))]


@pytest.mark.parametrize("prim, shapes, params, unknown", TRANSPOSE_CASES,
                         ids=[f"{p}-{u}" for p, _, _, u in TRANSPOSE_CASES])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_transpose_rule_inner_product(prim, shapes, params, unknown, seed):
    from linad.transforms import transpose_program

    rng = np.random.default_rng(seed)
    known = {i: x for i, x in enumerate(_point(rng, prim, shapes)) if i not in unknown}
    lp = LinearProgram.of(single(prim, shapes, params=params, literals=known))
    lpt = transpose_program(lp)
    v = [rng.standard_normal(u.shape) for u in lp.linear_inputs]
    w = [rng.standard_normal(a.shape) for a in lp.prog.outputs]
    lhs = np.dot(_flat(eval_linear(lp, v)), _flat(w))
    rhs = np.dot(_flat(v), _flat(eval_linear(lpt, w)))
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


# -- rule application --------------------------------------------------------

x, y, o = Var("x", ()), Var("y", ()), Var("o", ())


def test_sin_jvp_emits_cos_then_mul():
    b = Builder(["x", "o"])
    tx = b.add_input((), "tx")
    out = apply_jvp_rule(Equation(o, "sin", (x,)), [tx], b)
    assert [e.prim for e in b.eqns] == ["cos", "mul"]
    assert b.eqns[-1].out == out and b.eqns[-1].inputs[1] == tx


def test_add_jvp_with_symbolic_zero_emits_nothing():
    b = Builder(["x", "y", "o"])
    ty = b.add_input((), "ty")
    assert apply_jvp_rule(Equation(o, "add", (x, y)), [None, ty], b) is ty
    assert b.eqns == []
    assert apply_jvp_rule(Equation(o, "add", (x, y)), [None, None], b) is None


def test_mul_jvp_drops_zero_term():
    b = Builder(["x", "y", "o"])
    tx = b.add_input((), "tx")
    out = apply_jvp_rule(Equation(o, "mul", (x, y)), [tx, None], b)
    (eqn,) = b.eqns
    assert eqn.prim == "mul" and eqn.inputs == (tx, y) and eqn.out == out


def test_unknown_primitive():
    with pytest.raises(RegistryError):
        apply_jvp_rule(Equation(o, "frob", (x,)), [x], Builder())


def _run_transpose(eqn, known, ct_value):
    b = Builder()
    ct = b.add_input(eqn.out.shape, "ct")
    outs = apply_transpose_rule(eqn, ct, known, b)
    prog = b.build([g for g in outs if g is not None])
    return b.eqns, eval_program(prog, [ct_value]), outs


def test_broadcast_transpose_is_sum():
    t = Var("t", ())
    eqns, (g,), _ = _run_transpose(Equation(Var("o", (3,)), "broadcast", (t,), {"n": 3}),
                                   [False], [1.0, 1.0, 1.0])
    assert [e.prim for e in eqns] == ["sum"] and g == 3.0


def test_neg_transpose_is_neg():
    eqns, (g,), _ = _run_transpose(Equation(o, "neg", (x,)), [False], 2.5)
    assert [e.prim for e in eqns] == ["neg"] and g == -2.5


def test_matvec_transpose_with_known_matrix():
    m = lit([[1.0, 2.0], [3.0, 4.0]])
    eqn = Equation(Var("o", (2,)), "matvec", (m, Var("t", (2,))))
    _, (g,), outs = _run_transpose(eqn, [True, False], [1.0, 0.0])
    assert outs[0] is None
    np.testing.assert_array_equal(g, [1.0, 2.0])


def test_transpose_errors():
    with pytest.raises(TransposeRuleMissing):
        apply_transpose_rule(Equation(o, "exp", (x,)), x, [False], Builder())
    with pytest.raises(LinearityError):
        apply_transpose_rule(Equation(o, "mul", (x, y)), x, [False, False], Builder())
    with pytest.raises(LinearityError):
        apply_transpose_rule(Equation(o, "div", (x, y)), x, [True, False], Builder())


def test_duality_pairs_compose_exactly():
    s, b, t = Var("s", ()), Var("b", (1,)), Var("t", ())
    sum_bcast = Program((s,), (Equation(b, "broadcast", (s,), {"n": 1}),
                               Equation(t, "sum", (b,))), (t,))
    for v in [0.3, -1.7, 1e300]:
        assert eval_program(sum_bcast, [v])[0] == v

    seg, p, back = Var("seg", (3,)), Var("p", (7,)), Var("q", (3,))
    slice_pad = Program((seg,), (Equation(p, "pad_zero", (seg,), {"start": 2, "total": 7}),
                                 Equation(back, "slice", (p,), {"start": 2, "stop": 5})), (back,))
    val = np.array([0.1, -2.0, 3.5])
    assert eval_program(slice_pad, [val])[0].tobytes() == val.tobytes()
