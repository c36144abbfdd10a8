"""Linear ridge models on per-center features, learning curves and GFRE.

Structure-level predictions are sums of per-center contributions with one
weight vector per center species, so scalar models are extensive.  The
regularizer is relative: the Tikhonov term added to the normal equations is
``reg * trace(G) / dim`` with G the Gram matrix of the standardized design,
which makes a regularizer grid independent of the training-set size.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np
import scipy.linalg

from .blocks import load_arrays, save_arrays
from .errors import ContractError, InputError

# real l=1 harmonics are ordered (y, z, x); this picks (x, y, z)
SPHERICAL_TO_CARTESIAN = np.array([2, 0, 1])


def spec_fingerprint(spec):
    """Short content hash of a feature spec (any dataclass or JSON-able object)."""
    obj = asdict(spec) if is_dataclass(spec) else spec
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# design matrices


def _center_species(tmap_block, structures):
    s = tmap_block.samples.column("structure")
    c = tmap_block.samples.column("center")
    return s, np.array([structures[i].symbols[j] for i, j in zip(s, c)], dtype=object)


def invariant_design(features, structures, species, with_counts=True):
    """Per-structure design matrix from the (sigma=+1, lambda=0) block.

    Columns are, for each center species: one count column (the composition
    baseline) followed by the summed properties of that species' centers.
    """
    if (1, 0) not in features.blocks:
        raise ContractError("invariant models need a (sigma=+1, lambda=0) block")
    blk = features.blocks[(1, 0)]
    x = blk.values[:, 0, :]
    s, sym = _center_species(blk, structures)
    n, p = len(structures), x.shape[1]
    width = p + (1 if with_counts else 0)
    design = np.zeros((n, len(species) * width))
    for k, sp in enumerate(species):
        sel = sym == sp
        off = k * width
        if with_counts:
            np.add.at(design[:, off], s[sel], 1.0)
            off += 1
        # structure-wise sums, accumulated in sample order
        np.add.at(design[:, off:off + p], s[sel], x[sel])
    return design


def vector_design(features, structures, species):
    """Design for vector targets: rows (structure, Cartesian axis), columns (species, property)."""
    if (1, 1) not in features.blocks:
        raise ContractError("vector models need a (sigma=+1, lambda=1) block")
    blk = features.blocks[(1, 1)]
    x = blk.values[:, SPHERICAL_TO_CARTESIAN, :]
    s, sym = _center_species(blk, structures)
    n, p = len(structures), x.shape[2]
    design = np.zeros((n, 3, len(species) * p))
    for k, sp in enumerate(species):
        sel = sym == sp
        np.add.at(design[:, :, k * p:(k + 1) * p], s[sel], x[sel])
    return design.reshape(n * 3, -1)


# ---------------------------------------------------------------------------
# ridge solver


# columns this far below the largest one hold only round-off (e.g. same-species
# vector contributions that cancel pairwise) and must not be blown up to unit size
DEAD_COLUMN_RATIO = 1e-12


def _guard_scale(scale):
    top = scale.max() if scale.size else 0.0
    scale[scale <= DEAD_COLUMN_RATIO * top] = 1.0
    return scale


def column_scale(x):
    """Root-mean-square of each column; zero and round-off-only columns get scale one."""
    scale = np.sqrt(np.mean(x**2, axis=0)) if len(x) else np.ones(x.shape[1])
    return _guard_scale(scale)


def ridge_solve(x, y, reg):
    """Minimize |x w - y|^2 + reg * trace(G)/dim * |w|^2 via the smaller normal system."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    primal = p <= n
    gram = x.T @ x if primal else x @ x.T
    dim = gram.shape[0]
    if reg < 0:
        raise InputError("regularizer must be >= 0")
    if reg == 0:
        sol, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
        if rank < p:
            warnings.warn(
                f"singular ridge system at reg=0 (rank {rank} < {p}); using the pseudo-inverse",
                RuntimeWarning,
                stacklevel=2,
            )
        return sol
    jitter = reg * np.trace(gram) / max(dim, 1)
    if jitter == 0:
        return np.zeros((p,) + y.shape[1:])
    gram[np.diag_indices_from(gram)] += jitter
    if primal:
        return scipy.linalg.solve(gram, x.T @ y, assume_a="pos")
    return x.T @ scipy.linalg.solve(gram, y, assume_a="pos")


@dataclass
class RidgeModel:
    """Fitted linear weights per (center species, block key).

    ``weights`` maps ``(species, sigma, lam)`` to the raw (unstandardized)
    weight vector over that block's properties; ``baseline`` holds the
    per-species constant of scalar models.
    """

    weights: dict
    regularizer: float
    target_kind: str
    fingerprint: str
    species: tuple
    baseline: dict = field(default_factory=dict)
    feature_config: dict = field(default_factory=dict)

    def n_properties(self, species, key):
        return len(self.weights[(species,) + tuple(key)])

    def _stacked(self):
        if self.target_kind == "scalar_extensive":
            parts = []
            for sp in self.species:
                parts.append([self.baseline.get(sp, 0.0)])
                parts.append(self.weights[(sp, 1, 0)])
            return np.concatenate(parts)
        return np.concatenate([self.weights[(sp, 1, 1)] for sp in self.species])

    def predict(self, features, structures):
        structures = list(structures)
        w = self._stacked()
        if self.target_kind == "scalar_extensive":
            x = invariant_design(features, structures, self.species)
            if x.shape[1] != len(w):
                raise ContractError("feature width does not match the fitted model")
            return x @ w
        x = vector_design(features, structures, self.species)
        if x.shape[1] != len(w):
            raise ContractError("feature width does not match the fitted model")
        return (x @ w).reshape(-1, 3)

    def save(self, path):
        header = {
            "format": "mpacdc-ridge-1",
            "regularizer": self.regularizer,
            "target_kind": self.target_kind,
            "fingerprint": self.fingerprint,
            "species": list(self.species),
            "baseline": self.baseline,
            "feature_config": self.feature_config,
        }
        arrays = {f"{sp}|{sig}|{lam}": w for (sp, sig, lam), w in sorted(self.weights.items())}
        return save_arrays(path, header, arrays)

    @classmethod
    def load(cls, path):
        header, arrays = load_arrays(path)
        weights = {}
        for name, w in arrays.items():
            sp, sig, lam = name.split("|")
            weights[(sp, int(sig), int(lam))] = w
        return cls(
            weights,
            header["regularizer"],
            header["target_kind"],
            header["fingerprint"],
            tuple(header["species"]),
            {k: float(v) for k, v in header.get("baseline", {}).items()},
            header.get("feature_config", {}),
        )


def _species_of(structures, species):
    if species is not None:
        return tuple(species)
    return tuple(sorted({s for st in structures for s in st.symbols}))


def _fit_standardized(x, y, reg):
    scale = column_scale(x)
    w = ridge_solve(x / scale, y, reg)
    return w / scale


def fit_invariant(features, structures, targets, reg=1e-8, species=None, fingerprint=""):
    """Extensive scalar model: E = sum over centers of (b_species + w_species . q)."""
    structures = list(structures)
    y = np.asarray(targets, dtype=float)
    if len(structures) < 2:
        raise InputError("fit_invariant needs at least two structures")
    if len(y) != len(structures):
        raise InputError("one target per structure expected")
    species = _species_of(structures, species)
    x = invariant_design(features, structures, species)
    w = _fit_standardized(x, y, reg)
    p = features.blocks[(1, 0)].values.shape[2]
    weights, baseline = {}, {}
    for k, sp in enumerate(species):
        off = k * (p + 1)
        baseline[sp] = float(w[off])
        weights[(sp, 1, 0)] = w[off + 1:off + 1 + p]
    return RidgeModel(weights, float(reg), "scalar_extensive", fingerprint, species, baseline)


def fit_equivariant_vector(features, structures, targets, reg=1e-8, species=None, fingerprint=""):
    """Vector model: mu = sum over centers of sum_q w_{species,q} q(center) in Cartesian components.

    One weight per property is shared by the three components, so the
    prediction rotates with the structure.
    """
    structures = list(structures)
    y = np.asarray(targets, dtype=float).reshape(-1, 3)
    if len(structures) < 2:
        raise InputError("fit_equivariant_vector needs at least two structures")
    if len(y) != len(structures):
        raise InputError("one 3-vector per structure expected")
    species = _species_of(structures, species)
    x = vector_design(features, structures, species)
    w = _fit_standardized(x, y.ravel(), reg)
    p = features.blocks[(1, 1)].values.shape[2]
    weights = {(sp, 1, 1): w[k * p:(k + 1) * p] for k, sp in enumerate(species)}
    return RidgeModel(weights, float(reg), "vector", fingerprint, species)


def rmse(pred, target):
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.sqrt(np.mean(d**2))) if d.size else 0.0


def write_predictions(path, ids, targets, predictions):
    """CSV with a header row; vector targets get one column per Cartesian axis."""
    targets = np.asarray(targets, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if targets.ndim == 1:
            w.writerow(["structure", "target", "prediction"])
            for i, t, p in zip(ids, targets, predictions):
                w.writerow([i, repr(float(t)), repr(float(p))])
        else:
            w.writerow(["structure", "target_x", "target_y", "target_z", "prediction_x", "prediction_y", "prediction_z"])
            for i, t, p in zip(ids, targets, predictions):
                w.writerow([i] + [repr(float(v)) for v in t] + [repr(float(v)) for v in p])


# ---------------------------------------------------------------------------
# feature-space reconstruction error


def gfre(x, x_prime, train, test, reg=1e-8):
    """Fraction of X' (on ``test`` rows) not linearly reconstructible from X.

    Both sets are centered with training means; X columns are scaled by
    their training standard deviation and X' by its global training norm,
    then a ridge map is fitted on ``train`` rows.
    """
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    train = np.asarray(train)
    test = np.asarray(test)
    if train.size == 0 or test.size == 0:
        raise InputError("gfre needs non-empty train and test splits")
    if len(x) != len(x_prime):
        raise InputError("feature sets must share samples")
    mx = x[train].mean(axis=0)
    my = x_prime[train].mean(axis=0)
    sx = _guard_scale(x[train].std(axis=0))
    sy = np.linalg.norm(x_prime[train] - my) / np.sqrt(len(train))
    sy = sy if sy > 0 else 1.0
    a = (x - mx) / sx
    b = (x_prime - my) / sy
    w = ridge_solve(a[train], b[train], reg)
    resid = b[test] - a[test] @ w
    denom = np.sum(b[test] ** 2)
    if denom == 0:
        return 0.0
    return float(np.sqrt(np.sum(resid**2) / denom))


def invariant_matrix(features):
    """(samples, properties) matrix of the (sigma=+1, lambda=0) block."""
    return features.blocks[(1, 0)].values[:, 0, :]


# ---------------------------------------------------------------------------
# learning curves


def _fit_predict(x_tr, y_tr, x_te, reg):
    scale = column_scale(x_tr)
    w = ridge_solve(x_tr / scale, y_tr, reg)
    return x_te @ (w / scale)


def learning_curve(design, targets, train_sizes, regs, seed=0, n_val=None, n_splits=3, inner_fraction=0.2,
                   rows_per_sample=1):
    """Validation RMSE versus training-set size, mean and std over random splits.

    ``design`` is a per-structure design matrix (see :func:`invariant_design`),
    or for vector targets one with ``rows_per_sample`` rows per structure.  For
    every split and size the regularizer is chosen on an inner hold-out of the
    training set, then the model is refitted on the full training set.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(y) != len(design):
        raise InputError("targets must provide one value per design row")
    n = len(design) // rows_per_sample
    sizes = list(train_sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InputError("train_sizes must be strictly increasing")
    if n_val is None:
        n_val = max(1, n // 5)
    if sizes and sizes[-1] > n - n_val:
        raise InputError(f"largest training size {sizes[-1]} exceeds {n - n_val} available structures")
    regs = list(regs)

    def rows(idx):
        idx = np.asarray(idx)
        return (idx[:, None] * rows_per_sample + np.arange(rows_per_sample)).ravel()

    rng = np.random.default_rng(seed)
    table = {m: [] for m in sizes}
    chosen = {m: [] for m in sizes}
    for _ in range(n_splits):
        perm = rng.permutation(n)
        val, pool = perm[:n_val], perm[n_val:]
        for m in sizes:
            tr = pool[:m]
            n_in = max(1, int(round(inner_fraction * m)))
            inner_tr, inner_va = tr[n_in:], tr[:n_in]
            best, best_err = regs[0], np.inf
            if len(regs) > 1 and len(inner_tr) > 0:
                for r in regs:
                    pred = _fit_predict(design[rows(inner_tr)], y[rows(inner_tr)], design[rows(inner_va)], r)
                    err = rmse(pred, y[rows(inner_va)])
                    if err < best_err:
                        best, best_err = r, err
            pred = _fit_predict(design[rows(tr)], y[rows(tr)], design[rows(val)], best)
            table[m].append(rmse(pred, y[rows(val)]))
            chosen[m].append(best)
    return [
        {
            "n_train": m,
            "rmse_mean": float(np.mean(table[m])),
            "rmse_std": float(np.std(table[m])),
            "regs": chosen[m],
        }
        for m in sizes
    ]
