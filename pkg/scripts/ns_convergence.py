#!/usr/bin/env python3
"""Uniform-refinement convergence study for the stream-function
Navier-Stokes problem with the manufactured polynomial solution.

Writes out/study_ns_poly.csv and a log-log SVG plot.
"""
import sys

from ncfem.cli import main

if __name__ == "__main__":
    sys.exit(main(["study", "--problem", "ns_poly", "--levels", "6",
                   "--base-refinements", "1", "--out", "out"]))
