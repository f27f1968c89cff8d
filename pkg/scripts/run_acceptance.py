"""Print the acceptance report without pytest.

    python3 scripts/run_acceptance.py
"""
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", str(ROOT / "tests" / "test_acceptance.py")],
                          cwd=ROOT, capture_output=True, text=True)
    lines = proc.stdout.splitlines()
    report = [l for l in lines if l.startswith(("PASS", "FAIL"))]
    print("\n".join(report) if report else proc.stdout)
    print(f"{sum(l.startswith('PASS') for l in report)}/{len(report)} criteria passed "
          f"in {time.perf_counter() - t0:.1f}s")
    sys.exit(proc.returncode)
