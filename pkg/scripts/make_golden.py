"""Regenerate the parse/print golden corpus in tests/golden/.

Forty generated programs plus the jvp, linearized and transposed forms of
ten more, all in canonical printed form.
"""
from pathlib import Path

from linad.check import GenConfig, generate_program, sample_inputs
from linad.syntax import print_program
from linad.transforms import jvp_transform, linearize, transpose_program

OUT = Path(__file__).resolve().parents[1] / "tests" / "golden"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for old in OUT.glob("*.lin"):
        old.unlink()
    for seed in range(40):
        prog = generate_program(GenConfig(seed=seed))
        (OUT / f"gen{seed:02d}.lin").write_text(print_program(prog))
    for seed in range(40, 50):
        prog = generate_program(GenConfig(seed=seed))
        _, lp = linearize(prog, sample_inputs(prog, seed))
        kind = ("jvp", "lin", "tr")[seed % 3]
        out = {"jvp": jvp_transform(prog), "lin": lp.prog, "tr": transpose_program(lp).prog}[kind]
        (OUT / f"{kind}{seed:02d}.lin").write_text(print_program(out))
    print(f"wrote {len(list(OUT.glob('*.lin')))} files to {OUT}")


if __name__ == "__main__":
    main()
