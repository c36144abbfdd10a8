"""Equivariant linear model for the dipole of point-charge molecules.

Each atom contributes sum_q w_q * (lambda=1 feature)_q, which rotates with
the molecule by construction.  With a fixed number of atoms the point-charge
dipole is reproduced to numerical precision; with a variable number it is
not, because per-center weights cannot count the atoms.

    python demos/dipole_regression.py
"""

import numpy as np

from mpacdc import FeatureSpec, RadialBasisSpec, Rotation, compute_features
from mpacdc.data_gen import gen_point_charge_molecules
from mpacdc.models import fit_equivariant_vector, rmse

spec = FeatureSpec(RadialBasisSpec(n_max=10, r_cut=5.0), l_max=1, feature_string="nu=1",
                   lambda_keep=(1,), species=("A", "B", "X"))

for n_atoms in ((6, 6), (4, 9)):
    structures = gen_point_charge_molecules(400, seed=1, n_atoms=n_atoms)
    dipoles = np.array([s.tags["dipole"] for s in structures])
    feats = compute_features(structures, spec)
    model = fit_equivariant_vector(feats, structures, dipoles, reg=1e-14)
    print(f"atoms per molecule {n_atoms}: train RMSE {rmse(model.predict(feats, structures), dipoles):.3e}")

st = structures[0]
rot = Rotation.random(np.random.default_rng(0))
turned = st.transformed(rot.matrix)
a = model.predict(compute_features([st], spec), [st])[0]
b = model.predict(compute_features([turned], spec), [turned])[0]
print(f"rotation consistency |R mu(S) - mu(RS)| = {np.abs(rot.matrix @ a - b).max():.2e}")
