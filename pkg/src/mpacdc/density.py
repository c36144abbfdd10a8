"""Neighbor-density expansion: nu=1 equivariants and single-pair terms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import ive, roots_legendre, spherical_in

from .blocks import EquivariantBlock, Labels, TensorMap
from .errors import ConfigurationError
from .radial import RadialBasisSpec, cutoff_value, evaluate_radial
from .so3 import L_MAX_CAP, real_spherical_harmonics
from .structures import Structure, build_neighbor_list, species_table


@dataclass(frozen=True)
class FeatureSpec:
    """Hyperparameters plus the feature string naming the construction.

    ``lambda_max`` caps the angular character kept in intermediate products
    (default ``l_max``); ``lambda_keep`` lists the characters kept in the
    final output (default: all up to ``lambda_max``).  ``species`` is the
    symbol table (inferred from the data when None), ``neighbor_species``
    the density channels and ``center_species`` the centers reported.
    """

    basis: RadialBasisSpec = field(default_factory=RadialBasisSpec)
    l_max: int = 4
    feature_string: str = "nu=2"
    lambda_max: int | None = None
    lambda_keep: tuple | None = None
    sigma_keep: tuple | None = None
    species: tuple | None = None
    neighbor_species: tuple | None = None
    center_species: tuple | None = None
    density: str = "delta"
    species_mode: str = "per_species_channel"
    pca_dim: int | None = None

    def __post_init__(self):
        for name in ("lambda_keep", "sigma_keep", "species", "neighbor_species", "center_species"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))
        if not 0 <= self.l_max <= L_MAX_CAP:
            raise ConfigurationError(f"l_max must lie in [0, {L_MAX_CAP}]")
        lam_max = self.lambda_cap
        if not 0 <= lam_max <= L_MAX_CAP:
            raise ConfigurationError(f"lambda_max must lie in [0, {L_MAX_CAP}]")
        if self.lambda_keep is not None:
            bad = [lam for lam in self.lambda_keep if not 0 <= lam <= min(lam_max, 2 * self.l_max)]
            if bad or not self.lambda_keep:
                raise ConfigurationError(f"lambda_keep entries {bad} exceed lambda_max={lam_max}")
        if self.sigma_keep is not None and not set(self.sigma_keep) <= {-1, 1}:
            raise ConfigurationError("sigma_keep entries must be +1 or -1")
        if self.density not in ("delta", "gaussian"):
            raise ConfigurationError(f"density must be 'delta' or 'gaussian', got {self.density!r}")
        if self.species_mode != "per_species_channel":
            raise ConfigurationError(f"unsupported species_mode {self.species_mode!r}")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ConfigurationError("pca_dim must be positive")

    @property
    def lambda_cap(self):
        return self.l_max if self.lambda_max is None else self.lambda_max

    @property
    def final_lambdas(self):
        if self.lambda_keep is None:
            return tuple(range(self.lambda_cap + 1))
        return tuple(sorted(self.lambda_keep))

    def with_(self, **kwargs):
        return replace(self, **kwargs)


@dataclass
class Batch:
    """Concatenated atoms and neighbor pairs of several structures.

    Atom arrays are indexed by a global atom index; pairs are sorted by
    (structure, center, neighbor).
    """

    structures: list
    species: tuple
    codes: np.ndarray
    atom_structure: np.ndarray
    atom_local: np.ndarray
    offsets: np.ndarray
    pair_center: np.ndarray
    pair_neighbor: np.ndarray
    vectors: np.ndarray
    distances: np.ndarray
    r_cut: float

    @property
    def n_atoms(self):
        return len(self.codes)

    @property
    def n_pairs(self):
        return len(self.pair_center)

    def center_samples(self):
        return Labels(("structure", "center"), np.stack([self.atom_structure, self.atom_local], axis=1))

    def pair_samples(self, index=None):
        idx = slice(None) if index is None else index
        c, n = self.pair_center[idx], self.pair_neighbor[idx]
        return Labels(
            ("structure", "center", "neighbor"),
            np.stack([self.atom_structure[c], self.atom_local[c], self.atom_local[n]], axis=1),
        )


def build_batch(structures, r_cut, species=None, structure_offset=0):
    if isinstance(structures, Structure):
        structures = [structures]
    structures = list(structures)
    species = tuple(species) if species is not None else tuple(species_table(structures))
    codes, a_struct, a_local, offsets = [], [], [], [0]
    pc, pn, vec = [], [], []
    for k, st in enumerate(structures):
        off = offsets[-1]
        codes.append(st.species_codes(species))
        a_struct.append(np.full(len(st), k + structure_offset))
        a_local.append(np.arange(len(st)))
        nl = build_neighbor_list(st, r_cut)
        pc.append(nl.centers + off)
        pn.append(nl.neighbors + off)
        vec.append(nl.vectors)
        offsets.append(off + len(st))
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    vectors = np.concatenate(vec).reshape(-1, 3) if vec else np.zeros((0, 3))
    return Batch(
        structures,
        species,
        cat(codes, int),
        cat(a_struct, int),
        cat(a_local, int),
        np.array(offsets),
        cat(pc, int),
        cat(pn, int),
        vectors,
        np.linalg.norm(vectors, axis=1),
        float(r_cut),
    )


def scatter_sum(values, index, n):
    """Sum rows of ``values`` into ``n`` bins given by ``index``.

    Rows are accumulated in their input order within each bin, so the result
    does not depend on how the surrounding computation is chunked.
    """
    out = np.zeros((n,) + values.shape[1:])
    if len(index) == 0:
        return out
    order = np.argsort(index, kind="stable")
    idx = index[order]
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    out[idx[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


# ---------------------------------------------------------------------------
# radial functions for delta and Gaussian densities


@dataclass(frozen=True)
class _SmearingQuadrature:
    x: np.ndarray
    w: np.ndarray


@lru_cache(maxsize=32)
def _smearing_quadrature(r_cut, sigma):
    # at least ~20 nodes per smearing width so narrow Gaussians stay resolved
    n = max(200, int(math.ceil(20 * r_cut / sigma)))
    t, w = roots_legendre(n)
    return _SmearingQuadrature(0.5 * r_cut * (t + 1), 0.5 * r_cut * w)


def _scaled_sph_in(l, z):
    # exp(-z) * i_l(z), stable for large z
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 1e-3
    out[small] = spherical_in(l, z[small]) * np.exp(-z[small])
    zz = z[~small]
    out[~small] = np.sqrt(np.pi / (2 * zz)) * ive(l + 0.5, zz)
    return out


def gaussian_radial(basis, l, r):
    """Projection of a normalized 3D Gaussian at distance r on R_nl, angular part removed.

    Returns g with c_nlm = g_n(r) Y_lm(r_hat) for one neighbor.
    """
    q = _smearing_quadrature(basis.r_cut, basis.smearing_sigma)
    s2 = basis.smearing_sigma**2
    r = np.asarray(r, dtype=float)
    x = q.x
    z = np.outer(r, x) / s2
    kernel = np.exp(-((x[None, :] - r[:, None]) ** 2) / (2 * s2)) * _scaled_sph_in(l, z)
    kernel *= 4 * np.pi / (2 * np.pi * s2) ** 1.5
    rad = evaluate_radial(basis, l, x)
    return (kernel * (q.w * x**2)[None, :]) @ rad


def pair_coefficients(batch, spec, pair_index=None):
    """Per-pair expansion on the (species channel, n) x (l, m) basis.

    Returns a list over l of arrays (n_pairs, 2l+1, n_channels * n_max) and the
    index of the pairs used.  Pairs whose neighbor species is not a density
    channel contribute zeros.
    """
    channels = spec.neighbor_species or batch.species
    chan_of_species = np.full(len(batch.species), -1)
    for k, s in enumerate(batch.species):
        if s in channels:
            chan_of_species[k] = channels.index(s)
    idx = np.arange(batch.n_pairs) if pair_index is None else np.asarray(pair_index)
    d = batch.distances[idx]
    unit = batch.vectors[idx] / d[:, None] if len(idx) else np.zeros((0, 3))
    ylm = real_spherical_harmonics(spec.l_max, unit) if len(idx) else [
        np.zeros((0, 2 * l + 1)) for l in range(spec.l_max + 1)
    ]
    fc = cutoff_value(d, spec.basis.r_cut, spec.basis.cutoff_width)
    chan = chan_of_species[batch.codes[batch.pair_neighbor[idx]]]
    n_max = spec.basis.n_max
    n_ch = len(channels)
    out = []
    for l in range(spec.l_max + 1):
        if spec.density == "delta":
            rad = evaluate_radial(spec.basis, l, d) if len(idx) else np.zeros((0, n_max))
        else:
            rad = gaussian_radial(spec.basis, l, d) if len(idx) else np.zeros((0, n_max))
        rad = rad * fc[:, None]
        vals = np.zeros((len(idx), 2 * l + 1, n_ch * n_max))
        for c in range(n_ch):
            sel = chan == c
            vals[sel, :, c * n_max:(c + 1) * n_max] = ylm[l][sel][:, :, None] * rad[sel][:, None, :]
        out.append(vals)
    return out


def density_properties(spec, species):
    channels = spec.neighbor_species or species
    a, n = np.meshgrid(np.arange(len(channels)), np.arange(spec.basis.n_max), indexing="ij")
    return Labels(("a", "n"), np.stack([a.ravel(), n.ravel()], axis=1))


def _resolve_species(spec, structures):
    return spec.species if spec.species is not None else tuple(species_table(structures))


def expand_density(structures, spec, batch=None):
    """nu=1 equivariants: one (sigma=+1, lam=l) block per l over all atom centers.

    value[i, m, (a, n)] = sum over neighbors j of species a of
    cutoff(r_ji) R_nl(r_ji) Y_lm(r_ji / |r_ji|).
    """
    if batch is None:
        batch = build_batch(structures, spec.basis.r_cut, _resolve_species(spec, structures))
    coeffs = pair_coefficients(batch, spec)
    props = density_properties(spec, batch.species)
    samples = batch.center_samples()
    tmap = TensorMap("nu=1")
    for l, vals in enumerate(coeffs):
        summed = scatter_sum(vals, batch.pair_center, batch.n_atoms)
        tmap.blocks[(1, l)] = EquivariantBlock(1, l, summed, samples, props, "nu=1")
    return tmap


def expand_pair(structures, spec, pairs=None, batch=None):
    """Single-neighbor expansion of r_{i1} - r_i on the same basis as the density.

    ``pairs`` is an optional list of (center, neighbor) local indices for a
    single structure; by default every pair in the neighbor list is used.
    """
    if batch is None:
        batch = build_batch(structures, spec.basis.r_cut, _resolve_species(spec, structures))
    index = None
    if pairs is not None:
        lookup = {
            (int(c), int(n)): k
            for k, (c, n) in enumerate(zip(batch.atom_local[batch.pair_center], batch.atom_local[batch.pair_neighbor]))
        }
        index = np.array([lookup[(int(c), int(n))] for c, n in pairs], dtype=int)
    coeffs = pair_coefficients(batch, spec, index)
    props = density_properties(spec, batch.species)
    samples = batch.pair_samples(index)
    tmap = TensorMap("pair-nu=(0,0)")
    for l, vals in enumerate(coeffs):
        tmap.blocks[(1, l)] = EquivariantBlock(1, l, vals, samples, props, "pair-nu=(0,0)")
    return tmap


def unit_tensormap(samples, tag="nu=0"):
    """The nu=0 feature: a single invariant equal to one for every sample."""
    values = np.ones((len(samples), 1, 1))
    return TensorMap(tag, {(1, 0): EquivariantBlock(1, 0, values, samples, Labels(("unit",), np.zeros((1, 1))), tag)})


def legendre_weight(l):
    """(2l + 1) / 4 pi, the addition-theorem prefactor."""
    return (2 * l + 1) / (4 * math.pi)
