import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linad.check import GenConfig, generate_program, linear_corpus, sample_inputs
from linad.interp import eval_linear, eval_program
from linad.ir import Equation, LinearProgram, Program, ProgramError, Var

from conftest import single
from reference_eval import reference_eval


def test_identity():
    x = Var("x", (3,))
    (out,) = eval_program(Program((x,), (), (x,)), [[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])


def test_square():
    x, t = Var("x", ()), Var("t", ())
    prog = Program((x,), (Equation(t, "mul", (x, x)),), (t,))
    assert eval_program(prog, [2.0])[0] == 4.0


def test_argument_contract():
    prog = single("neg", [(3,)])
    with pytest.raises(ProgramError):
        eval_program(prog, [[1.0, 2.0]])
    with pytest.raises(ProgramError):
        eval_program(prog, [])


def test_ieee_at_singularities():
    (q,) = eval_program(single("div", [(2,), (2,)]), [[1.0, 0.0], [0.0, 0.0]])
    assert q[0] == np.inf and np.isnan(q[1])
    (l,) = eval_program(single("log", [(2,)]), [[0.0, -1.0]])
    assert l[0] == -np.inf and np.isnan(l[1])


def test_zero_size_tensors():
    assert eval_program(single("sum", [(0,)]), [np.zeros(0)])[0] == 0.0
    assert eval_program(single("dot", [(0,), (0,)]), [np.zeros(0)] * 2)[0] == 0.0
    (mv,) = eval_program(single("matvec", [(2, 0), (0,)]), [np.zeros((2, 0)), np.zeros(0)])
    np.testing.assert_array_equal(mv, [0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_matches_reference_evaluator(seed):
    prog = generate_program(GenConfig(seed=seed))
    x = sample_inputs(prog, seed)
    got = eval_program(prog, x)
    want = reference_eval(prog, x)
    for g, w in zip(got, want):
        # summation order differs between numpy and the reference loop
        np.testing.assert_allclose(g, np.array(w, dtype=float).reshape(g.shape),
                                   rtol=1e-12, atol=1e-12)


def test_deterministic():
    prog = generate_program(GenConfig(seed=5))
    x = sample_inputs(prog, 5)
    a, b = eval_program(prog, x), eval_program(prog, x)
    assert all(p.tobytes() == q.tobytes() for p, q in zip(a, b))


def test_eval_linear_identity_and_zero():
    v = Var("v", ())
    lp = LinearProgram.of(Program((v,), (), (v,)))
    assert eval_linear(lp, [5.0])[0] == 5.0
    for lp in linear_corpus(range(20)):
        zero_in = [np.zeros(v.shape) for v in lp.linear_inputs]
        assert all(not np.any(o) for o in eval_linear(lp, zero_in))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_eval_linear_is_linear(seed, a, b):
    (lp,) = linear_corpus([seed])
    rng = np.random.default_rng(seed)
    u = [rng.standard_normal(v.shape) for v in lp.linear_inputs]
    w = [rng.standard_normal(v.shape) for v in lp.linear_inputs]
    lhs = eval_linear(lp, [a * p + b * q for p, q in zip(u, w)])
    rhs = [a * p + b * q for p, q in zip(eval_linear(lp, u), eval_linear(lp, w))]
    for l, r in zip(lhs, rhs):
        np.testing.assert_allclose(l, r, rtol=1e-9, atol=1e-9 * (1 + np.max(np.abs(r), initial=0)))
