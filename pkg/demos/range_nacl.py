"""How far can a local model see?  Na-Cl pair energy -1/r among inert dummies.

A nu=1 model restricted to Na/Cl neighbors is exact while the pair is inside
the cutoff and flat beyond it.  Features that also see the dummy atoms can
pick up indirect hints about the distance, which lowers the overall error.

    python demos/range_nacl.py [n_structures]
"""

import sys

import numpy as np

from mpacdc import FeatureSpec, RadialBasisSpec, compute_features
from mpacdc.data_gen import gen_nacl_toy
from mpacdc.models import column_scale, invariant_design, ridge_solve, rmse

n = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
structures = gen_nacl_toy(n, seed=0)
energy = np.array([s.tags["energy"] for s in structures])
r = np.array([s.tags["r_nacl"] for s in structures])
perm = np.random.default_rng(0).permutation(n)
train, val = perm[: 3 * n // 4], perm[3 * n // 4:]
centers = ("Cl", "Na")


def fit(spec):
    x = invariant_design(compute_features(structures, spec, threads=4), structures, centers)
    best = None
    for reg in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2):
        scale = column_scale(x[train])
        w = ridge_solve(x[train] / scale, energy[train], reg) / scale
        err = rmse(x[val] @ w, energy[val])
        if best is None or err < best[0]:
            best = (err, x @ w)
    return best


species = ("Cl", "Na", "X")
local = FeatureSpec(RadialBasisSpec(n_max=12, r_cut=6.0), l_max=0, feature_string="nu=1",
                    species=species, neighbor_species=centers, center_species=centers)
err, pred = fit(local)
print(f"NaCl-only nu=1: validation RMSE {err:.4f}")
print("   r bin     mean prediction   mean -1/r")
for lo in np.arange(2.5, 11.0, 1.0):
    m = (r >= lo) & (r < lo + 1.0)
    print(f"  {lo:4.1f}-{lo + 1:4.1f}   {pred[m].mean():9.4f}       {energy[m].mean():9.4f}")

for text, n_max, l_max in (("[0<-1]", 4, 0), ("[0<-1]", 6, 1)):
    spec = FeatureSpec(RadialBasisSpec(n_max=n_max, r_cut=6.0), l_max=l_max, lambda_keep=(0,),
                       feature_string=text, species=species, center_species=centers)
    print(f"{text} with dummy channels (n_max={n_max}, l_max={l_max}): validation RMSE {fit(spec)[0]:.4f}")
