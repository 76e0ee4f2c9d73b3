#!/usr/bin/env python3
"""Regenerate the golden CLI outputs from the committed fixture inputs.

Run from the repository root:

    python3 tests/make_goldens.py

Golden files freeze engine output so the test suite can assert that every
command is byte-for-byte reproducible.  The inventory goldens are only
legitimate while the independent hand-computed oracle checks in
tests/test_inventory.py and tests/test_acceptance.py pass.
"""

import os
import shutil
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vmtcarbon.cli import main  # noqa: E402

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
GOLDEN = os.path.join(ROOT, "tests", "data", "golden")


def regen(name: str, argv: list[str]) -> None:
    outdir = os.path.join(GOLDEN, name)
    if os.path.isdir(outdir):
        shutil.rmtree(outdir)
    os.makedirs(outdir)
    code = main(argv + ["--output-dir", outdir])
    if code != 0:
        raise SystemExit(f"golden regeneration for {name} failed with exit code {code}")
    print(f"{name}: {sorted(os.listdir(outdir))}")


def run() -> None:
    os.chdir(ROOT)
    regen("inventory", ["inventory", "--config", "tests/data/fixture3/inventory.cfg",
                        "--method", "both"])
    regen("synth", ["synth", "--config", "tests/data/synth.cfg"])
    # the fit golden consumes the synth golden panel
    regen("fit", ["fit", "--config", "tests/data/fit.cfg"])
    regen("scenario", ["scenario", "--config", "tests/data/scenario.cfg"])


if __name__ == "__main__":
    run()
