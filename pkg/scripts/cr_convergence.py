#!/usr/bin/env python3
"""Crouzeix-Raviart study for the non-selfadjoint indefinite problem
(b = (1,1), gamma = -20), plus the discrete inf-sup constants across levels.

The early levels sit in the pre-asymptotic regime of the indefinite problem;
the broken-H1 rate settles towards 1 from roughly level 6 on.
"""
import sys

from ncfem.cli import main

if __name__ == "__main__":
    code = main(["study", "--problem", "cr_sine", "--levels", "8",
                 "--out", "out"])
    code = code or main(["infsup", "--problem", "cr_sine", "--levels", "4",
                         "--base-refinements", "3", "--out", "out"])
    sys.exit(code)
