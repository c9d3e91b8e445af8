#!/usr/bin/env python3
"""Run the acceptance gate with its per-criterion lines visible.

Equivalent to ``pytest tests/test_acceptance.py -s -v`` from the repo root.
"""

import pathlib
import subprocess
import sys


def main():
    root = pathlib.Path(__file__).resolve().parents[1]
    cmd = [sys.executable, "-m", "pytest", str(root / "tests" / "test_acceptance.py"),
           "-s", "-v"]
    return subprocess.call(cmd, cwd=root)


if __name__ == "__main__":
    sys.exit(main())
