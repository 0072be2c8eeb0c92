"""Small-delta limit of the correlation reduction L(delta) / delta.

For DSBS(0.1) the limit is lambda_1 - 1 = 0.8; for the three-bit triangle
with k=3 attributes it is the sum of the top three (lambda - 1) = 3.

    python3 demos/information_rate.py
"""

from commonstruct.bits import bits_joint, triangle
from commonstruct.core import dsbs
from commonstruct.theory import verify_theorem


def show(name, report):
    print(f"{name}: target {report.target:g}, passed {report.passed}")
    for row in report.rows:
        print(f"  delta={row['delta']:.0e}  L/delta={row['L/delta']:.6f}  gap={row['gap']:.2e}")


def main():
    show("DSBS(0.1), k=1", verify_theorem(dsbs(0.1)))
    show("bits triangle, k=3", verify_theorem(bits_joint(triangle()), k=3))


if __name__ == "__main__":
    main()
