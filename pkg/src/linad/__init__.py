"""Reverse-mode AD for straight-line tensor programs, built as linearize-then-transpose."""
from .interp import eval_linear, eval_program
from .ir import (Diagnostic, Equation, Literal, LinearityError, LinearProgram, Program,
                 ProgramError, Var, check_linear, validate)
from .rules import PRIMITIVES, apply_jvp_rule, apply_transpose_rule, primitive_table
from .syntax import ParseError, parse_program, print_program
from .transforms import grad, jvp_transform, linearize, partial_eval, transpose_program, vjp

__all__ = [
    "Diagnostic", "Equation", "Literal", "LinearityError", "LinearProgram", "PRIMITIVES",
    "ParseError", "Program", "ProgramError", "Var", "apply_jvp_rule", "apply_transpose_rule",
    "check_linear", "eval_linear", "eval_program", "grad", "jvp_transform", "linearize",
    "parse_program", "partial_eval", "primitive_table", "print_program", "transpose_program",
    "validate", "vjp",
]
