from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linad.check import GenConfig, generate_program, sample_inputs
from linad.ir import Literal, Program, Var, format_float, validate
from linad.syntax import ParseError, parse_program, parse_tensor, print_program
from linad.transforms import jvp_transform, linearize, transpose_program

GOLDEN = sorted((Path(__file__).parent / "golden").glob("*.lin"))


def test_dot_program():
    prog = parse_program("fn f(x: f64[2]) -> f64\n t = dot x, x\n return t")
    assert len(prog.eqns) == 1 and prog.eqns[0].prim == "dot"
    assert prog.inputs == (Var("x", (2,)),) and prog.outputs == (Var("t", ()),)


def test_constant_program():
    prog = parse_program("fn f() -> f64\n return 1.0")
    assert prog.inputs == () and prog.outputs == (Literal(np.float64(1.0)),)


def test_print_identity():
    x = Var("x", (3,))
    assert print_program(Program((x,), (), (x,))) == "fn f(x: f64[3]) -> f64[3]\n return x\n"


def test_attrs_comments_and_multiline_literals():
    text = """
    # leading comment
    fn g(x: f64[4], m: f64[2, 2]) -> f64[2], f64[2]   # trailing
      s = slice x {start=1, stop=3}
      p = matvec [[1, 2],
                  [3, 4]], s
      q = matvec m, p
      return p, q
    """
    prog = parse_program(text)
    assert prog.eqns[0].params == {"start": 1, "stop": 3}
    np.testing.assert_array_equal(prog.eqns[1].inputs[0].value, [[1, 2], [3, 4]])
    assert validate(prog) == []
    assert parse_program(print_program(prog)) == prog


def test_hex_and_special_floats():
    assert parse_tensor("0x1.8p+1") == 3.0
    assert parse_tensor("-0x1p-2") == -0.25
    v = parse_tensor("[inf, -inf, nan, -0]")
    assert v[0] == np.inf and v[1] == -np.inf and np.isnan(v[2])
    assert np.signbit(v[3])


def test_empty_literals():
    assert parse_tensor("[]").shape == (0,)
    assert parse_tensor("[[], []]").shape == (2, 0)


@pytest.mark.parametrize("text, line, col", [
    ("fn f(x: f64) -> f64\n t = frob x\n return t", 2, 6),
    ("fn f(x: f64) -> f64\n t = neg x x\n return t", 2, 12),
    ("fn f(x: f64) -> f64\n t = neg x\n", 3, 1),
    ("fn f(x: f64[2) -> f64\n return x", 1, 14),
    ("fn f(x: f64) -> f64\n t = slice x {start=-1}\n return t", 2, 21),
    ("fn f(x: f64) -> f64[2]\n return x", 1, 17),
    ("fn f(x: f64) -> f64\n t = neg $x\n return t", 2, 10),
])
def test_syntax_errors_carry_positions(text, line, col):
    with pytest.raises(ParseError) as info:
        parse_program(text)
    assert (info.value.line, info.value.col) == (line, col)


def test_semantic_errors_are_left_to_validate():
    prog = parse_program("fn f(x: f64[2], y: f64[3]) -> f64\n t = add x, y\n u = sum t\n return u")
    assert [d.rule for d in validate(prog)] == ["shape mismatch", "shape mismatch"]


def test_golden_corpus_round_trips():
    assert len(GOLDEN) == 50
    for path in GOLDEN:
        text = path.read_text()
        prog = parse_program(text)
        assert validate(prog) == [], path.name
        assert print_program(prog) == text, path.name
        assert parse_program(print_program(prog)) == prog, path.name


@given(st.floats(allow_nan=False))
def test_float_literals_round_trip_bitwise(v):
    back = parse_tensor(format_float(v))
    assert np.float64(v).tobytes() == back.tobytes()


def test_tenth_round_trips():
    assert format_float(0.1) == "0.1" and parse_tensor("0.1") == 0.1


def test_transposed_broadcast_prints_sum():
    from linad.ir import LinearProgram

    lp = LinearProgram.of(parse_program("fn f(t: f64) -> f64[3]\n o = broadcast t {n=3}\n return o"))
    assert " = sum " in print_program(transpose_program(lp).prog)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_transform_outputs_round_trip(seed):
    prog = generate_program(GenConfig(seed=seed))
    _, lp = linearize(prog, sample_inputs(prog, seed))
    for p in (prog, jvp_transform(prog), lp.prog, transpose_program(lp).prog):
        assert parse_program(print_program(p)) == p
