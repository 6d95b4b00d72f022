#!/usr/bin/env python3
"""Adaptive refinement for Navier-Stokes with f = 1 on the L-shaped domain:
Doerfler marking (theta = 0.5) concentrates elements at the re-entrant
corner.  Prints the per-level corner fraction alongside the records."""
import sys

from ncfem.cli import main

if __name__ == "__main__":
    sys.exit(main(["afem", "--problem", "ns_unit_load", "--domain", "l_shape",
                   "--theta", "0.5", "--max-free-dofs", "10000",
                   "--out", "out"]))
