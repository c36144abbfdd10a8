"""Clebsch-Gordan iteration and the single-center ACDC family built on it."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .blocks import EquivariantBlock, Labels, TensorMap
from .density import (
    build_batch,
    density_properties,
    expand_density,
    pair_coefficients,
    scatter_sum,
    unit_tensormap,
)
from .errors import ConfigurationError, ContractError
from .so3 import build_cg_cache

SQRT2 = math.sqrt(2.0)


def _merge_names(a_names, b_names):
    names = list(a_names) + ["l"] + list(b_names) + ["l"]
    seen = {}
    out = []
    for n in names:
        base = n.rstrip("'")
        k = seen.get(base, 0)
        seen[base] = k + 1
        out.append(base + "'" * k)
    return tuple(out)


def couple(a_vals, b_vals, cg):
    """sum_{m1 m2} A[s, m1, p] B[s, m2, q] C[m1, m2, mu] -> (s, mu, p, q)."""
    s, _, pa = a_vals.shape
    pb = b_vals.shape[2]
    n_mu = cg.shape[2]
    t = np.tensordot(a_vals, cg, axes=([1], [0]))  # (s, pa, m2, mu)
    t = t.transpose(0, 3, 1, 2).reshape(s, n_mu * pa, cg.shape[1])
    out = np.matmul(t, b_vals)  # (s, mu * pa, pb)
    return out.reshape(s, n_mu, pa, pb)


def _product_properties(pa, la, pb, lb, pairs=None):
    ia, ib = np.meshgrid(np.arange(len(pa)), np.arange(len(pb)), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    if pairs is not None:
        ia, ib = pairs
    rows = np.concatenate(
        [pa.values[ia], np.full((len(ia), 1), la), pb.values[ib], np.full((len(ib), 1), lb)], axis=1
    )
    return Labels(_merge_names(pa.names, pb.names), rows)


def cg_combine(
    a,
    b,
    cache,
    lambda_keep=None,
    lambda_max=None,
    tag=None,
    symmetric=None,
    reduce_index=None,
    out_samples=None,
):
    """Couple every block of ``a`` with every block of ``b``.

    For blocks (sa, la) and (sb, lb) and each admissible lam the output block
    has parity sa * sb * (-1)^(la + lb + lam) and properties
    (props_a, la, props_b, lb).  Outputs sharing a key are concatenated along
    the property axis in a fixed order.

    When ``a`` is ``b`` (or ``symmetric=True``) redundant paths of the
    self-product are dropped and off-diagonal terms are weighted by sqrt(2),
    so Euclidean distances match the full product.

    ``reduce_index``/``out_samples`` fuse a scatter-sum over samples after
    each coupling path (used to contract pair samples onto centers without
    materializing all pair features at once).
    """
    if a.samples != b.samples:
        raise ContractError("cg_combine requires both operands to share the same samples")
    if symmetric is None:
        symmetric = a is b
    if lambda_max is None:
        lambda_max = cache.l_max_built
    keep = None if lambda_keep is None else set(lambda_keep)
    tag = tag or f"({a.tag})x({b.tag})"
    samples = a.samples if reduce_index is None else out_samples
    n_out = len(samples)

    parts = {}
    a_keys = a.keys()
    b_keys = b.keys()
    for ia, ka in enumerate(a_keys):
        for ib, kb in enumerate(b_keys):
            if symmetric and ib < ia:
                continue
            blk_a, blk_b = a.blocks[ka], b.blocks[kb]
            la, lb = blk_a.lam, blk_b.lam
            for lam in range(abs(la - lb), min(la + lb, lambda_max) + 1):
                if keep is not None and lam not in keep:
                    continue
                cg = cache.block(la, lb, lam)
                vals = couple(blk_a.values, blk_b.values, cg)
                sigma = blk_a.sigma * blk_b.sigma * (-1) ** (la + lb + lam)
                if symmetric and ia == ib:
                    p = len(blk_a.properties)
                    antisym = (2 * la - lam) % 2 == 1
                    ii, jj = np.triu_indices(p, k=1 if antisym else 0)
                    vals = vals[:, :, ii, jj]
                    vals = vals * np.where(ii == jj, 1.0, SQRT2)[None, None, :]
                    props = _product_properties(blk_a.properties, la, blk_b.properties, lb, (ii, jj))
                else:
                    vals = vals.reshape(vals.shape[0], vals.shape[1], -1)
                    if symmetric:
                        vals = vals * SQRT2
                    props = _product_properties(blk_a.properties, la, blk_b.properties, lb)
                if vals.shape[2] == 0:
                    continue
                if reduce_index is not None:
                    vals = scatter_sum(vals, reduce_index, n_out)
                parts.setdefault((sigma, lam), []).append((vals, props))

    out = TensorMap(tag)
    for key in sorted(parts, key=lambda k: (k[1], -k[0])):
        vals = np.concatenate([v for v, _ in parts[key]], axis=2)
        plist = [p for _, p in parts[key]]
        props = Labels(plist[0].names, np.concatenate([p.values for p in plist]))
        out.blocks[key] = EquivariantBlock(key[0], key[1], vals, samples, props, tag)
    return out


def power_spectrum(nu1, cache=None):
    """SOAP invariants sum_m c[a n l m] c[a' n' l m] with (a n) <= (a' n') and sqrt(2) off-diagonal."""
    samples = nu1.samples
    vals = []
    rows = []
    for l in nu1.lambdas():
        blk = nu1.blocks[(1, l)]
        x = blk.values
        p = x.shape[2]
        ii, jj = np.triu_indices(p)
        ps = np.einsum("smp,smq->spq", x, x)[:, ii, jj]
        ps *= np.where(ii == jj, 1.0, SQRT2)[None, :]
        vals.append(ps)
        pv = blk.properties.values
        rows.append(np.concatenate([pv[ii], pv[jj], np.full((len(ii), 1), l)], axis=1))
    names = ("a", "n", "a'", "n'", "l")
    values = np.concatenate(vals, axis=1)[:, None, :]
    props = Labels(names, np.concatenate(rows))
    return TensorMap("nu=2", {(1, 0): EquivariantBlock(1, 0, values, samples, props, "nu=2")})


def acdc(nu1, nu, cache, lambda_max=None, lambda_keep=None, sigma_keep=None, contraction=None):
    """Symmetrized nu-neighbor correlations by repeated coupling with the density.

    ``contraction`` is an optional :class:`PCAContraction` applied after every
    intermediate iteration (fitted on the fly if it has no map for a step).
    """
    if nu == 0:
        return unit_tensormap(nu1.samples)
    if nu == 1:
        out = nu1
        if lambda_keep is not None:
            out = out.filter([k for k in out.keys() if k[1] in set(lambda_keep)])
        return _filter_sigma(out, sigma_keep)
    current = nu1
    for step in range(2, nu + 1):
        final = step == nu
        current = cg_combine(
            current,
            nu1,
            cache,
            lambda_keep=lambda_keep if final else None,
            lambda_max=lambda_max,
            tag=f"nu={step}",
            symmetric=(step == 2),
        )
        if not final and contraction is not None:
            current = contraction.apply_or_fit(f"nu={step}", current)
    return _filter_sigma(current, sigma_keep)


def _filter_sigma(tmap, sigma_keep):
    if sigma_keep is None:
        return tmap
    return tmap.filter([k for k in tmap.keys() if k[0] in set(sigma_keep)])


def bispectrum(nu1, cache, lambda_keep_intermediate=None):
    """nu=3 invariants: (nu1 x nu1 -> k) x nu1 -> 0, path recording the intermediate k."""
    nu2 = cg_combine(nu1, nu1, cache, lambda_keep=lambda_keep_intermediate, tag="nu=2", symmetric=True)
    return cg_combine(nu2, nu1, cache, lambda_keep=[0], tag="nu=3")


def three_center_invariant(structure, triplets, spec, cache=None):
    """sum_m <n l m | r_{i1 i}> <n' l m | r_{i2 i}> for each (i, i1, i2).

    Returns a single invariant block with samples (structure, center,
    neighbor_1, neighbor_2) and properties (a, n, a', n', l).
    """
    batch = build_batch([structure], spec.basis.r_cut, spec.species)
    lookup = {
        (int(c), int(n)): k
        for k, (c, n) in enumerate(zip(batch.pair_center, batch.pair_neighbor))
    }
    try:
        p1 = np.array([lookup[(int(i), int(j))] for i, j, _ in triplets], dtype=int)
        p2 = np.array([lookup[(int(i), int(k))] for i, _, k in triplets], dtype=int)
    except KeyError as err:
        raise ContractError(f"pair {err.args[0]} is not within the cutoff") from None
    c1 = pair_coefficients(batch, spec, p1)
    c2 = pair_coefficients(batch, spec, p2)
    props0 = density_properties(spec, batch.species)
    p = len(props0)
    ii, jj = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    vals, rows = [], []
    for l in range(spec.l_max + 1):
        g = np.einsum("smp,smq->spq", c1[l], c2[l]).reshape(len(triplets), -1)
        vals.append(g)
        rows.append(np.concatenate([props0.values[ii], props0.values[jj], np.full((p * p, 1), l)], axis=1))
    samples = Labels(("structure", "center", "neighbor_1", "neighbor_2"), [[0, i, j, k] for i, j, k in triplets])
    props = Labels(("a", "n", "a'", "n'", "l"), np.concatenate(rows))
    values = np.concatenate(vals, axis=1)[:, None, :]
    tag = "3center-nu=0"
    return TensorMap(tag, {(1, 0): EquivariantBlock(1, 0, values, samples, props, tag)})


# ---------------------------------------------------------------------------
# delayed contraction


@dataclass
class BlockContraction:
    projection: np.ndarray  # (n_properties, n_kept)
    singular_values: np.ndarray

    def retained_fraction(self):
        s2 = self.singular_values**2
        total = s2.sum()
        if total == 0:
            return 1.0
        return float(s2[: self.projection.shape[1]].sum() / total)


def _fit_block(block, target_dim):
    x = block.values.reshape(-1, block.values.shape[2])
    p = x.shape[1]
    k = min(target_dim, p)
    if not np.any(x):
        warnings.warn(f"block {block.key} is identically zero; using an identity contraction", stacklevel=3)
        return BlockContraction(np.eye(p)[:, :k], np.zeros(min(x.shape)))
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    proj = vt[:k].T.copy()
    # fix the sign ambiguity of singular vectors
    signs = np.sign(proj[np.argmax(np.abs(proj), axis=0), np.arange(proj.shape[1])])
    proj *= np.where(signs == 0, 1.0, signs)[None, :]
    return BlockContraction(proj, s)


def pca_contract(tmap, target_dim, fitted=None):
    """Per-(sigma, lam) orthogonal projection of the property axis.

    The mu axis is flattened into the sample axis before the SVD so the
    projection commutes with rotations.  Blocks with fewer properties than
    ``target_dim`` keep all of them (as a rotation of the property basis).
    Returns (contracted map, {key: BlockContraction}); pass the latter as
    ``fitted`` to reuse the maps on new data.
    """
    if target_dim < 1:
        raise ConfigurationError("target_dim must be positive")
    fitted = dict(fitted) if fitted is not None else {}
    out = TensorMap(tmap.tag)
    for key in tmap.keys():
        block = tmap.blocks[key]
        if key not in fitted:
            fitted[key] = _fit_block(block, target_dim)
        proj = fitted[key].projection
        vals = block.values @ proj
        props = Labels(("pc",), np.arange(proj.shape[1])[:, None])
        out.blocks[key] = block.copy_with(values=vals, properties=props)
    return out, fitted


class PCAContraction:
    """Named collection of per-step contraction maps, fitted lazily."""

    def __init__(self, target_dim, maps=None):
        self.target_dim = target_dim
        self.maps = dict(maps or {})

    def apply_or_fit(self, step, tmap):
        out, fitted = pca_contract(tmap, self.target_dim, self.maps.get(step))
        self.maps[step] = fitted
        return out


# ---------------------------------------------------------------------------
# scalar gates


@dataclass
class TanhGate:
    """gate[s, q] = tanh(invariants[s] @ weights + bias)[q]."""

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __call__(self, invariants):
        z = invariants @ self.weights
        if self.bias is not None:
            z = z + self.bias
        return np.tanh(z)


def scalar_gate(block, invariants, gate="identity"):
    """Scale each property channel of ``block`` by a function of invariant features.

    ``invariants`` is a (sigma=+1, lam=0) block on the same samples.  ``gate``
    is "identity" (all ones), a :class:`TanhGate` or any callable mapping an
    (n_samples, n_invariants) array to (n_samples, n_properties).
    """
    if block.samples != invariants.samples:
        raise ContractError("scalar_gate needs invariants on the same samples")
    inv = invariants.values[:, 0, :]
    if gate == "identity":
        g = np.ones((len(inv), block.values.shape[2]))
    else:
        g = np.asarray(gate(inv))
        if g.shape != (len(inv), block.values.shape[2]):
            raise ContractError(f"gate output shape {g.shape} does not match block properties")
    return block.copy_with(values=block.values * g[:, None, :])


# ---------------------------------------------------------------------------
# degenerate environments


def homometric_ring_pair(radius=1.5, n_sites=8, sites_a=(0, 1, 2, 5), sites_b=(0, 1, 3, 4)):
    """Two non-congruent planar environments with identical neighbor-pair geometry.

    Neighbors sit on a ring of ``radius`` around a central atom at the
    origin, at sites k * 2 pi / n_sites.  The default index sets share the
    same multiset of cyclic separations, so every pair (r_j, r_j', theta_jj')
    coincides and the power spectrum cannot tell them apart.
    """
    from .structures import Structure

    def build(sites):
        ang = 2 * np.pi * np.asarray(sites) / n_sites
        pos = np.concatenate([[[0.0, 0.0, 0.0]], radius * np.stack([np.cos(ang), np.sin(ang), 0 * ang], axis=1)])
        return Structure(pos, ("C",) + ("H",) * len(sites))

    return build(sites_a), build(sites_b)


def search_degenerate_pair(spec, reference, n_trials=5, seed=0, max_nfev=2000):
    """Best effort: perturb ``reference``'s neighbors to match its nu=2 invariants of atom 0.

    Returns (candidate structure, invariant residual, min distance to any
    rotated/permuted copy of the reference) for the best trial.  A
    candidate with small residual and large distance is a degenerate pair.
    """
    from scipy.optimize import least_squares

    from .structures import Structure

    cache = build_cg_cache(spec.l_max)
    rng = np.random.default_rng(seed)

    def ps_center(pos):
        st = Structure(pos, reference.symbols)
        nu1 = expand_density([st], spec)
        return power_spectrum(nu1, cache).invariants().values[0, 0]

    target = ps_center(reference.positions)
    best = None
    n_nb = len(reference) - 1
    for _ in range(n_trials):
        x0 = reference.positions[1:] + 0.3 * rng.standard_normal((n_nb, 3))

        def resid(flat):
            pos = np.vstack([reference.positions[:1], flat.reshape(-1, 3)])
            return ps_center(pos) - target

        sol = least_squares(resid, x0.ravel(), max_nfev=max_nfev)
        pos = np.vstack([reference.positions[:1], sol.x.reshape(-1, 3)])
        res = float(np.max(np.abs(sol.fun)))
        dist = _congruence_distance(reference.positions[1:] - reference.positions[0], pos[1:] - pos[0])
        if best is None or res < best[1]:
            best = (Structure(pos, reference.symbols), res, dist)
    return best


def _congruence_distance(a, b):
    # smallest RMSD over O(3) for every neighbor permutation (small n only)
    import itertools

    best = np.inf
    for perm in itertools.permutations(range(len(b))):
        bp = b[list(perm)]
        u, _, vt = np.linalg.svd(bp.T @ a)
        rot = u @ vt
        best = min(best, float(np.sqrt(np.mean(np.sum((a - bp @ rot) ** 2, axis=1)))))
    return best


def separates(features_a, features_b, tol=1e-6):
    """True when two invariant vectors differ by more than ``tol`` (relative to their scale)."""
    a = np.asarray(features_a).ravel()
    b = np.asarray(features_b).ravel()
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale) > tol
