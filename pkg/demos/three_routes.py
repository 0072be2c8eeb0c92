"""Extract k=2 features from a random three-variable joint by three routes.

The dense eigensolver, alternating conditional expectations and MH-score
gradient ascent should span the same subspace.

    python3 demos/three_routes.py
"""

import numpy as np

from commonstruct.core import random_joint
from commonstruct.linalg import projector_distance
from commonstruct.mace import MaceConfig, mace_fit_k
from commonstruct.mhscore import HTrainConfig, mh_optimum, mh_train, whiten
from commonstruct.spectral import build_b, dense_features, eigendecompose


def main():
    dist = random_joint((3, 4, 3), np.random.default_rng(7))
    lam = eigendecompose(build_b(dist)).eigenvalues
    print("eigenvalues of B:", np.round(lam, 4))

    oracle = dense_features(dist, 2)
    fs, traces = mace_fit_k(dist, MaceConfig(k=2, max_iters=20000, rel_tol=1e-14))
    tables, curve = mh_train(dist, HTrainConfig(k=2, steps=20000))
    white = whiten(tables, dist)

    print("MACE correlations:", [round(t.objective[-1], 6) for t in traces], "expected", np.round(lam[1:3] - 1, 6))
    print(f"MH-score: {curve[-1][1]:.6f} (optimum {mh_optimum(dist, 2):.6f}, {curve[-1][0]} steps)")
    print("projector distance to the eigenvectors:")
    print(f"  MACE {projector_distance(fs.to_psi(dist), oracle.to_psi(dist)):.2e}")
    print(f"  MH   {projector_distance(white.to_psi(dist), oracle.to_psi(dist)):.2e}")


if __name__ == "__main__":
    main()
