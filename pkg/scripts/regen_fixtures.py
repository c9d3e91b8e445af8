#!/usr/bin/env python3
"""Regenerate the JSON fixtures under scenarios/ from gapflow.fixtures.

Run after editing a builder so the JSON copies never drift from the code:

    python3 scripts/regen_fixtures.py
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from gapflow.fixtures import BUILDERS
from gapflow.model import serialize_scenario


def main():
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "scenarios"
    out_dir.mkdir(exist_ok=True)
    for name, builder in sorted(BUILDERS.items()):
        path = out_dir / f"{name}.json"
        path.write_text(serialize_scenario(builder()), encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
