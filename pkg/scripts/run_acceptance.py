"""Run the acceptance battery and print one PASS/FAIL line per criterion."""
import sys

from kglab.acceptance import run_battery

if __name__ == "__main__":
    results = run_battery()
    sys.exit(0 if all(r.passed for r in results) else 1)
