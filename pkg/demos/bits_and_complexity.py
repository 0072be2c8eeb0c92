"""Bits-triangle spectrum and the DSBS(0.3) sample-complexity exponent.

    python3 demos/bits_and_complexity.py
"""

import numpy as np

from commonstruct.bits import bits_joint, bits_spectrum, triangle
from commonstruct.complexity import error_exponent, monte_carlo_check
from commonstruct.core import dsbs
from commonstruct.spectral import build_b, eigendecompose


def main():
    inst = triangle()
    print("analytic spectrum:", bits_spectrum(inst))
    print("numeric spectrum: ", np.round(eigendecompose(build_b(bits_joint(inst))).eigenvalues, 12) + 0.0)

    res = error_exponent(dsbs(0.3), 1)
    print(f"DSBS(0.3), k=1: alpha={res.alpha_k:.6f} exponent={res.exponent:.6f}")
    mc = monte_carlo_check(dsbs(0.3), 1, n_grid=(25, 50, 100, 200), trials=200, eps=0.1, seed=1)
    print("exceedance frequencies:", mc.frequencies, "fitted slope:", mc.slope)


if __name__ == "__main__":
    main()
