"""Verification harness.

Oracles (central finite differences, dense matrices of linear programs, the
inner-product test) and a random generator of well-formed programs.  The
corpus-level suites at the bottom back both ``linad selftest`` and the
acceptance tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .interp import eval_linear, eval_program
from .ir import Atom, Literal, LinearProgram, Program, Tensor, Var, as_tensor, check_linear, validate
from .rules import NONLINEAR_PRIMS, PRIMITIVES, Builder
from .transforms import jvp_transform, linearize, transpose_program, vjp


def _flat(ts: Sequence[Tensor]) -> np.ndarray:
    if not ts:
        return np.zeros(0)
    return np.concatenate([np.ravel(t) for t in ts])


def _unflat(flat: np.ndarray, shapes: Sequence[tuple]) -> list[Tensor]:
    out, i = [], 0
    for s in shapes:
        n = math.prod(s)
        out.append(as_tensor(flat[i:i + n].reshape(s)))
        i += n
    return out


def _size(shapes) -> int:
    return sum(math.prod(s) for s in shapes)


# -- oracles -----------------------------------------------------------------

def finite_diff_jvp(prog: Program, x: Sequence, v: Sequence, eps: float) -> list[Tensor]:
    """Central difference ``(f(x + eps v) - f(x - eps v)) / (2 eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = [as_tensor(t) for t in x]
    v = [as_tensor(t) for t in v]
    if [t.shape for t in x] != [t.shape for t in v]:
        raise ValueError("point and direction shapes differ")
    hi = eval_program(prog, [a + eps * b for a, b in zip(x, v)])
    lo = eval_program(prog, [a - eps * b for a, b in zip(x, v)])
    return [as_tensor((p - m) / (2 * eps)) for p, m in zip(hi, lo)]


def fd_eps(x: Sequence[Tensor]) -> float:
    flat = _flat([np.asarray(t) for t in x])
    return 1e-6 * (1 + (np.max(np.abs(flat)) if flat.size else 0.0))


def dense_matrix_of_linear(lp: LinearProgram) -> np.ndarray:
    """Matrix with column j = flattened ``lp(e_j)``."""
    in_shapes = [v.shape for v in lp.linear_inputs]
    n_in, n_out = _size(in_shapes), _size(lp.prog.output_shapes)
    mat = np.zeros((n_out, n_in))
    for j in range(n_in):
        e = np.zeros(n_in)
        e[j] = 1.0
        mat[:, j] = _flat(eval_linear(lp, _unflat(e, in_shapes)))
    return mat


@dataclass(frozen=True)
class DotReport:
    max_residual: float
    trials: int


def dot_product_check(lp: LinearProgram, trials: int = 20, seed: int = 0,
                      lpt: LinearProgram | None = None) -> DotReport:
    """Max over trials of ``|<lp v, w> - <v, lp^T w>| / (1 + |<lp v, w>|)``."""
    lpt = transpose_program(lp) if lpt is None else lpt
    rng = np.random.default_rng(seed)
    in_shapes = [v.shape for v in lp.linear_inputs]
    out_shapes = lp.prog.output_shapes
    worst = 0.0
    for _ in range(trials):
        v = _unflat(rng.standard_normal(_size(in_shapes)), in_shapes)
        w = _unflat(rng.standard_normal(_size(out_shapes)), out_shapes)
        lhs = float(np.dot(_flat(eval_linear(lp, v)), _flat(w)))
        rhs = float(np.dot(_flat(v), _flat(eval_linear(lpt, w))))
        worst = max(worst, abs(lhs - rhs) / (1 + abs(lhs)))
    return DotReport(worst, trials)


def jacobian_via_jvp(prog: Program, x: Sequence) -> np.ndarray:
    _, lp = linearize(prog, x)
    return dense_matrix_of_linear(lp)


def jacobian_via_vjp(prog: Program, x: Sequence) -> np.ndarray:
    out_shapes = prog.output_shapes
    n_out, n_in = _size(out_shapes), _size(prog.input_shapes)
    jac = np.zeros((n_out, n_in))
    for i in range(n_out):
        e = np.zeros(n_out)
        e[i] = 1.0
        _, x_ct = vjp(prog, x, _unflat(e, out_shapes))
        jac[i, :] = _flat(x_ct)
    return jac


# -- random programs ---------------------------------------------------------

@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_eqns: int = 12
    max_dim: int = 4
    min_inputs: int = 1
    max_inputs: int = 3
    max_outputs: int = 3
    prims: tuple[str, ...] = tuple(PRIMITIVES)
    # magnitudes of literals and test points; signs are random
    lo: float = 0.2
    hi: float = 2.0
    literal_prob: float = 0.25
    # generated intermediates are kept within [-value_cap, value_cap]
    value_cap: float = 100.0

    def __post_init__(self):
        if self.max_dim < 1:
            raise ValueError("max_dim must be at least 1")
        if not 0 < self.lo <= self.hi:
            raise ValueError("need 0 < lo <= hi")
        if not 1 <= self.min_inputs <= self.max_inputs:
            raise ValueError("need 1 <= min_inputs <= max_inputs")
        unknown = set(self.prims) - set(PRIMITIVES)
        if unknown:
            raise ValueError(f"unknown primitives {sorted(unknown)}")


Interval = tuple[float, float]


def _mul_iv(a: Interval, b: Interval) -> Interval:
    ps = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    return min(ps), max(ps)


def _scale_iv(n: int, a: Interval) -> Interval:
    return (n * a[0], n * a[1]) if n else (0.0, 0.0)


def _hull(*ivs: Interval) -> Interval:
    return min(i[0] for i in ivs), max(i[1] for i in ivs)


def _interval(prim: str, ivs: list[Interval], shapes: list[tuple], params) -> Interval:
    """Bounds on an equation's output entries given bounds on its inputs."""
    if prim == "add":
        (a, b), (c, d) = ivs
        return a + c, b + d
    if prim == "sub":
        (a, b), (c, d) = ivs
        return a - d, b - c
    if prim == "neg":
        return -ivs[0][1], -ivs[0][0]
    if prim == "mul":
        return _mul_iv(*ivs)
    if prim == "div":
        c, d = ivs[1]
        return _mul_iv(ivs[0], (1 / d, 1 / c))
    if prim in ("sin", "cos"):
        return -1.0, 1.0
    if prim == "exp":
        return math.exp(ivs[0][0]), math.exp(ivs[0][1])
    if prim == "log":
        return math.log(ivs[0][0]), math.log(ivs[0][1])
    if prim == "sum":
        return _scale_iv(math.prod(shapes[0]), ivs[0])
    if prim in ("broadcast", "transpose2d", "slice"):
        return ivs[0]
    if prim == "pad_zero":
        return _hull(ivs[0], (0.0, 0.0))
    if prim == "concat":
        return _hull(*ivs)
    if prim == "dot":
        return _scale_iv(shapes[0][0], _mul_iv(*ivs))
    if prim == "matvec":
        return _scale_iv(shapes[0][1], _mul_iv(*ivs))
    if prim == "outer":
        return _mul_iv(*ivs)
    raise KeyError(prim)


class _Generator:
    def __init__(self, cfg: GenConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.b = Builder()
        self.scope: list[Var] = []
        self.iv: dict[str, Interval] = {}
        self.deps: set[str] = set()
        self.budget = 0

    # values

    def shape(self, ranks=(0, 1, 2)) -> tuple:
        rank = int(self.rng.choice(ranks))
        return tuple(int(d) for d in self.rng.integers(1, self.cfg.max_dim + 1, size=rank))

    def literal(self, shape, positive=False) -> Literal:
        mag = self.rng.uniform(self.cfg.lo, self.cfg.hi, size=shape)
        if not positive:
            mag = mag * self.rng.choice([-1.0, 1.0], size=shape)
        return Literal(as_tensor(mag))

    def interval(self, a: Atom) -> Interval:
        if isinstance(a, Literal):
            if a.value.size == 0:
                return self.cfg.lo, self.cfg.lo  # vacuous; keeps div/log bounds valid
            return float(a.value.min()), float(a.value.max())
        return self.iv[a.name]

    # operand selection

    def pick(self, pred: Callable[[Var], bool] = lambda v: True) -> Var | None:
        cands = [v for v in self.scope if pred(v)]
        if not cands:
            return None
        # favour recent definitions so programs grow deep, not just wide
        w = np.arange(1, len(cands) + 1, dtype=float)
        return cands[int(self.rng.choice(len(cands), p=w / w.sum()))]

    def operand(self, shape, pred: Callable[[Var], bool] = lambda v: True,
                positive=False) -> Atom:
        v = None
        if self.rng.random() >= self.cfg.literal_prob:
            v = self.pick(lambda u: u.shape == shape and pred(u))
        return self.literal(shape, positive) if v is None else v

    def positive(self, shape) -> Atom:
        """An operand bounded below by ``lo``: safe for log and as a divisor."""
        lo = self.cfg.lo
        v = self.pick(lambda u: u.shape == shape and self.iv[u.name][0] >= lo)
        if v is not None:
            return v
        if self.budget >= 3:
            base = self.pick(lambda u: u.shape == shape
                             and max(map(abs, self.iv[u.name])) <= math.sqrt(self.cfg.value_cap / 2))
            if base is not None:
                sq = self.emit("mul", [base, base], {})
                if sq is not None:
                    out = self.emit("add", [sq, self.literal(shape, positive=True)], {})
                    if out is not None:
                        return out
        return self.literal(shape, positive=True)

    # emission

    def emit(self, prim, inputs, params) -> Var | None:
        ivs = [self.interval(a) for a in inputs]
        if prim == "mul" and inputs[0] == inputs[1] and isinstance(inputs[0], Var):
            lo, hi = ivs[0]
            ivl = (0.0 if lo <= 0 <= hi else min(lo * lo, hi * hi), max(lo * lo, hi * hi))
        else:
            ivl = _interval(prim, ivs, [a.shape for a in inputs], params)
        if not all(math.isfinite(x) for x in ivl) or max(map(abs, ivl)) > self.cfg.value_cap:
            return None
        out = self.b.bind(prim, *inputs, **params)
        self.scope.append(out)
        self.iv[out.name] = ivl
        if any(isinstance(a, Var) and a.name in self.deps for a in inputs):
            self.deps.add(out.name)
        self.budget -= 1
        return out

    def draw(self, prim: str):
        """Operands and params for ``prim``, or None if the scope can't supply them."""
        rank = lambda *rs: (lambda v: len(v.shape) in rs)
        if prim in ("neg", "sin", "cos"):
            x = self.pick() or self.literal(self.shape())
            return [x], {}
        if prim == "exp":
            x = self.pick(lambda v: self.iv[v.name][1] <= 3.0)
            if x is None and self.budget >= 2 and self.scope:
                x = self.emit("sin", [self.pick()], {})
            return [x or self.literal(self.shape())], {}
        if prim == "log":
            x = self.pick()
            return [self.positive(x.shape if x is not None else self.shape())], {}
        if prim in ("add", "sub"):
            x = self.pick()
            if x is None:
                return None
            return [x, self.operand(x.shape)], {}
        if prim == "mul":
            x = self.pick()
            if x is None:
                return None
            mode = self.rng.integers(3)
            if mode == 0:
                return [x, self.operand(x.shape)], {}
            if mode == 1 or x.shape == ():
                return [x, self.operand(())], {}
            return [self.operand(()), x], {}
        if prim == "div":
            x = self.pick()
            if x is None:
                return None
            shape = x.shape if self.rng.random() < 0.5 else ()
            return [x, self.positive(shape)], {}
        if prim == "sum":
            x = self.pick(rank(1, 2))
            return None if x is None else ([x], {})
        if prim == "broadcast":
            x = self.operand(())
            target = self.shape((1, 2))
            params = {"m": target[0], "n": target[1]} if len(target) == 2 else {"n": target[0]}
            return [x], params
        if prim == "dot":
            x = self.pick(rank(1))
            return None if x is None else ([x, self.operand(x.shape)], {})
        if prim == "matvec":
            m = self.pick(rank(2))
            if m is not None and self.rng.random() < 0.5:
                return [m, self.operand((m.shape[1],))], {}
            v = self.pick(rank(1))
            if v is None:
                return None
            rows = int(self.rng.integers(1, self.cfg.max_dim + 1))
            return [self.operand((rows, v.shape[0])), v], {}
        if prim == "outer":
            u = self.pick(rank(1))
            if u is None:
                return None
            w = self.operand((int(self.rng.integers(1, self.cfg.max_dim + 1)),))
            pair = [u, w] if self.rng.random() < 0.5 else [w, u]
            return pair, {}
        if prim == "transpose2d":
            x = self.pick(rank(2))
            return None if x is None else ([x], {})
        if prim == "slice":
            x = self.pick(rank(1))
            if x is None:
                return None
            n = x.shape[0]
            if n == 0 or self.rng.random() < 0.05:
                start = stop = int(self.rng.integers(0, n + 1))  # empty slice
            else:
                start = int(self.rng.integers(0, n))
                stop = int(self.rng.integers(start + 1, n + 1))
            return [x], {"start": start, "stop": stop}
        if prim == "pad_zero":
            x = self.pick(lambda v: len(v.shape) == 1 and v.shape[0] <= self.cfg.max_dim)
            if x is None:
                return None
            n = x.shape[0]
            total = int(self.rng.integers(n, self.cfg.max_dim + 1))
            start = int(self.rng.integers(0, total - n + 1))
            return [x], {"start": start, "total": total}
        if prim == "concat":
            room = lambda k: self.cfg.max_dim - k
            x = self.pick(lambda v: len(v.shape) == 1 and room(v.shape[0]) >= 1)
            if x is None:
                return None
            left = room(x.shape[0])
            y = self.pick(lambda v: len(v.shape) == 1 and v.shape[0] <= left)
            if y is None or self.rng.random() < self.cfg.literal_prob:
                y = self.literal((int(self.rng.integers(1, left + 1)),))
            pair = [x, y] if self.rng.random() < 0.5 else [y, x]
            return pair, {}
        raise KeyError(prim)

    def run(self) -> Program:
        cfg = self.cfg
        n_inputs = int(self.rng.integers(cfg.min_inputs, cfg.max_inputs + 1))
        for k in range(n_inputs):
            v = self.b.add_input(self.shape(), f"x{k}")
            self.scope.append(v)
            self.iv[v.name] = (-cfg.hi, cfg.hi)
            self.deps.add(v.name)

        self.budget = int(self.rng.integers(1, cfg.max_eqns + 1)) if cfg.max_eqns else 0
        prims = list(cfg.prims)
        attempts = 0
        while self.budget > 0 and attempts < 20 * cfg.max_eqns:
            attempts += 1
            prim = prims[int(self.rng.integers(len(prims)))]
            drawn = self.draw(prim)
            if drawn is not None and self.budget > 0:
                self.emit(prim, *drawn)

        # return the most recent unconsumed dependent values so little code is dead
        used = {a.name for e in self.b.eqns for a in e.inputs if isinstance(a, Var)}
        sinks = [v for v in self.scope if v.name in self.deps and v.name not in used]
        if not sinks:
            sinks = [v for v in self.scope if v.name in self.deps][-1:]
        k = int(self.rng.integers(1, cfg.max_outputs + 1))
        outputs = sinks[::-1][:k]
        if len(outputs) < k:
            # duplicates and interior values exercise cotangent accumulation
            outputs.append(self.scope[int(self.rng.integers(len(self.scope)))])
        order = self.rng.permutation(len(outputs))
        return self.b.build([outputs[i] for i in order], f"g{cfg.seed}")


def generate_program(cfg: GenConfig) -> Program:
    """A random validate-clean program, deterministic in ``cfg.seed``."""
    return _Generator(cfg).run()


def sample_inputs(prog: Program, seed: int, lo: float = 0.2, hi: float = 2.0) -> list[Tensor]:
    """Test point with entry magnitudes in [lo, hi] and random signs."""
    rng = np.random.default_rng([seed, 7919])
    out = []
    for s in prog.input_shapes:
        mag = rng.uniform(lo, hi, size=s)
        out.append(as_tensor(mag * rng.choice([-1.0, 1.0], size=s)))
    return out


# -- corpus suites -----------------------------------------------------------

SPARSE_PRIMS = ("slice", "pad_zero", "concat", "broadcast", "sum", "neg", "add")


def program_corpus(seeds: Iterable[int], **cfg) -> list[tuple[int, Program, list[Tensor]]]:
    out = []
    for s in seeds:
        prog = generate_program(GenConfig(seed=s, **cfg))
        out.append((s, prog, sample_inputs(prog, s)))
    return out


def linear_corpus(seeds: Iterable[int], **cfg) -> list[LinearProgram]:
    return [linearize(prog, x)[1] for _, prog, x in program_corpus(seeds, **cfg)]


def small_corpus(n: int, max_size: int = 12, start: int = 0, **cfg):
    """First ``n`` generated programs whose total input and output sizes are <= max_size."""
    out, seed = [], start
    while len(out) < n:
        prog = generate_program(GenConfig(seed=seed, **cfg))
        if _size(prog.input_shapes) <= max_size and _size(prog.output_shapes) <= max_size:
            out.append((seed, prog, sample_inputs(prog, seed)))
        seed += 1
    return out


@dataclass
class Tally:
    total: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> int:
        return self.total - len(self.failures)


def residual_linearity(corpus) -> Tally:
    """linearize output passes check_linear and contains no nonlinear primitive."""
    t = Tally()
    for seed, prog, x in corpus:
        t.total += 1
        try:
            _, lp = linearize(prog, x)
        except Exception as e:  # linearize raises on a check_linear failure
            t.failures.append((seed, repr(e)))
            continue
        bad = [e.prim for e in lp.prog.eqns if e.prim in NONLINEAR_PRIMS]
        if bad or check_linear(lp):
            t.failures.append((seed, f"nonlinear primitives {bad}"))
    return t


def transposition_errors(lps: Sequence[LinearProgram], trials: int = 20,
                         seed: int = 0) -> tuple[float, float]:
    """(max dot-product residual, max |dense(lp^T) - dense(lp)^T|) over ``lps``."""
    worst_dot = worst_dense = 0.0
    for k, lp in enumerate(lps):
        lpt = transpose_program(lp)
        worst_dot = max(worst_dot, dot_product_check(lp, trials, seed + k, lpt).max_residual)
        d, dt = dense_matrix_of_linear(lp), dense_matrix_of_linear(lpt)
        if d.size:
            worst_dense = max(worst_dense, float(np.max(np.abs(dt - d.T))))
    return worst_dot, worst_dense


def involution_error(lps: Sequence[LinearProgram]) -> float:
    worst = 0.0
    for lp in lps:
        d = dense_matrix_of_linear(lp)
        dtt = dense_matrix_of_linear(transpose_program(transpose_program(lp)))
        if d.size:
            worst = max(worst, float(np.max(np.abs(d - dtt))))
    return worst


def mode_agreement_error(corpus) -> float:
    """Max of ``|J_jvp - J_vjp|_max / (1 + |J|_max)``."""
    worst = 0.0
    for _, prog, x in corpus:
        jf, jr = jacobian_via_jvp(prog, x), jacobian_via_vjp(prog, x)
        if jf.size:
            worst = max(worst, float(np.max(np.abs(jf - jr)) / (1 + np.max(np.abs(jf)))))
    return worst


def fd_error(corpus, directions: int = 5, seed: int = 0) -> float:
    """Max over programs and directions of ``|fd - lin|_max / (1 + |lin|_max)``."""
    worst = 0.0
    for s, prog, x in corpus:
        _, lp = linearize(prog, x)
        rng = np.random.default_rng([seed, s])
        eps = fd_eps(x)
        for _ in range(directions):
            v = [as_tensor(rng.standard_normal(t.shape)) for t in x]
            lin = _flat(eval_linear(lp, v))
            fd = _flat(finite_diff_jvp(prog, x, v, eps))
            if lin.size:
                worst = max(worst, float(np.max(np.abs(fd - lin)) / (1 + np.max(np.abs(lin)))))
    return worst


def primal_mismatches(corpus) -> Tally:
    """vjp's primal outputs must be bit-identical to eval_program's."""
    t = Tally()
    for seed, prog, x in corpus:
        t.total += 1
        y = eval_program(prog, x)
        ct = [np.ones(s) for s in prog.output_shapes]
        yv, _ = vjp(prog, x, ct)
        if any(a.tobytes() != b.tobytes() for a, b in zip(y, yv)):
            t.failures.append(seed)
    return t


def sparsity_mismatches(lps: Sequence[LinearProgram]) -> Tally:
    t = Tally()
    for k, lp in enumerate(lps):
        t.total += 1
        d = dense_matrix_of_linear(lp)
        dt = dense_matrix_of_linear(transpose_program(lp))
        if np.count_nonzero(d) != np.count_nonzero(dt):
            t.failures.append(k)
    return t


def invalid_transform_outputs(corpus) -> Tally:
    """Every transform maps validate-clean programs to validate-clean programs."""
    t = Tally()
    for seed, prog, x in corpus:
        t.total += 1
        _, lp = linearize(prog, x)
        outs = [prog, jvp_transform(prog), lp.prog, transpose_program(lp).prog]
        if any(validate(p) for p in outs):
            t.failures.append(seed)
    return t


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def rule_count_line() -> str:
    from .rules import rule_counts
    n_t, n_j = rule_counts()
    return (f"rule counts: {n_t} transpose / {n_j} JVP = {n_t / n_j:.2f} "
            "(JAX reports roughly 0.40; the ratio depends on the primitive set)")


def run_suite(seed: int = 0, corpus: int = 200, progress: Callable[[str], None] | None = None
              ) -> list[SuiteResult]:
    """The random-corpus property suite, scaled to ``corpus`` programs."""
    n = max(corpus, 1)
    seeds = range(seed, seed + n)
    general = program_corpus(seeds)
    lps = [linearize(p, x)[1] for _, p, x in general[: max(n // 2, 1)]]
    small = small_corpus(max(3 * n // 10, 1), start=seed)
    sparse = linear_corpus(range(seed, seed + max(n // 10, 1)), prims=SPARSE_PRIMS)
    results = []

    def record(name, ok, detail):
        r = SuiteResult(name, ok, detail)
        results.append(r)
        if progress:
            progress(r.line())

    t = residual_linearity(general)
    record("residual linearity", not t.failures, f"{t.passed}/{t.total} clean")
    t = invalid_transform_outputs(general)
    record("transform outputs validate", not t.failures, f"{t.passed}/{t.total} clean")
    dot, dense = transposition_errors(lps, 20, seed)
    record("dot-product test", dot <= 1e-9, f"max residual {dot:.3g} (tol 1e-9)")
    record("dense transpose", dense <= 1e-12, f"max error {dense:.3g} (tol 1e-12)")
    err = involution_error(lps)
    record("involution", err <= 1e-12, f"max error {err:.3g} (tol 1e-12)")
    err = mode_agreement_error(small)
    record("mode agreement", err <= 1e-10, f"max scaled error {err:.3g} (tol 1e-10)")
    err = fd_error(small, 5, seed)
    record("finite differences", err <= 1e-5, f"max relative error {err:.3g} (tol 1e-5)")
    t = primal_mismatches(general)
    record("primal fidelity", not t.failures, f"{t.passed}/{t.total} bitwise equal")
    t = sparsity_mismatches(sparse)
    record("sparsity preservation", not t.failures, f"{t.passed}/{t.total} equal nnz")
    return results
