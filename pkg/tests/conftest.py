import numpy as np
import pytest

from linad.ir import Equation, Literal, LinearProgram, Program, Var


def lit(value):
    return Literal(np.asarray(value, dtype=np.float64))


def single(prim, in_shapes, *, params=None, literals=None, out_name="o"):
    """A one-equation program ``o = prim x0, x1, ...``.

    ``literals`` maps input positions to fixed values that become literal
    operands instead of program inputs.
    """
    from linad.rules import infer_shape

    literals = literals or {}
    params = params or {}
    inputs, atoms = [], []
    for i, s in enumerate(in_shapes):
        if i in literals:
            atoms.append(lit(literals[i]))
        else:
            v = Var(f"x{i}", tuple(s))
            inputs.append(v)
            atoms.append(v)
    out = Var(out_name, infer_shape(prim, [tuple(s) for s in in_shapes], params))
    return Program(tuple(inputs), (Equation(out, prim, tuple(atoms), params),), (out,))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  [{criterion}] {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
