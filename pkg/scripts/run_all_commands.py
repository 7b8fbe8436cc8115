#!/usr/bin/env python3
"""Run every CLI command once on its sample config.

Outputs land in runs/<command>/.  Useful as a smoke check and as a template
for custom experiment configs.
"""

import pathlib
import sys

from mapflow.cli import run

HERE = pathlib.Path(__file__).parent
RUNS = HERE.parent / "runs"

JOBS = [
    ("interp", "interp_standard.json"),
    ("embed-error", "embed_standard.json"),
    ("energy", "energy_standard.json"),
    ("resonance", "resonance_standard.json"),
    ("nucleus", "nucleus_standard.json"),
    ("stability", "stability_standard.json"),
    ("gen-recover", "genrecover_standard.json"),
]


def main() -> int:
    worst = 0
    for command, cfg in JOBS:
        out = RUNS / command
        code = run(command, str(HERE / "configs" / cfg), out=str(out))
        print(f"{command:<12} exit={code}  ->  {out}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
