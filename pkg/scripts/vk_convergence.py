#!/usr/bin/env python3
"""Uniform-refinement convergence study for the von Karman pair with the
manufactured polynomial solution and the second-equation verification load."""
import sys

from ncfem.cli import main

if __name__ == "__main__":
    sys.exit(main(["study", "--problem", "vk_poly", "--levels", "6",
                   "--base-refinements", "1", "--out", "out"]))
