"""Decorated multi-center features and message-passing contractions.

Every construction here is a composition of three primitives: ``cg_combine``
on aligned samples, gathering center features onto pairs, and the fused
pair-to-center scatter-sum inside ``cg_combine``.
"""

from __future__ import annotations

import numpy as np

from .acdc import acdc, cg_combine
from .blocks import EquivariantBlock, Labels, TensorMap
from .density import build_batch, density_properties, expand_density, pair_coefficients
from .errors import ConfigurationError
from .so3 import build_cg_cache


class Context:
    """Per-batch state: neighbor data, pair expansion and memoized center features."""

    def __init__(self, batch, spec, cache=None, contraction=None):
        self.batch = batch
        self.spec = spec
        self.cache = cache if cache is not None else build_cg_cache(min(16, max(spec.lambda_cap, spec.l_max)))
        self.contraction = contraction
        self._nu1 = None
        self._pair = None
        self._acdc = {}

    @classmethod
    def from_structures(cls, structures, spec, cache=None):
        species = spec.species
        if species is None:
            from .structures import species_table

            species = tuple(species_table(structures))
        return cls(build_batch(structures, spec.basis.r_cut, species), spec, cache)

    # -- primitive features ------------------------------------------------

    def nu1(self):
        if self._nu1 is None:
            self._nu1 = expand_density(None, self.spec, batch=self.batch)
        return self._nu1

    def pair_map(self):
        """Pair expansion over every pair in the batch."""
        if self._pair is None:
            coeffs = pair_coefficients(self.batch, self.spec)
            props = density_properties(self.spec, self.batch.species)
            samples = self.batch.pair_samples()
            tmap = TensorMap("pair-nu=(0,0)")
            for l, vals in enumerate(coeffs):
                tmap.blocks[(1, l)] = EquivariantBlock(1, l, vals, samples, props, "pair-nu=(0,0)")
            self._pair = tmap
        return self._pair

    def acdc(self, nu):
        """Intermediate (all lam up to the cap) nu-neighbor equivariants over all atoms."""
        if nu not in self._acdc:
            self._acdc[nu] = acdc(self.nu1(), nu, self.cache, lambda_max=self.spec.lambda_cap, contraction=self.contraction)
        return self._acdc[nu]

    # -- sample manipulation -------------------------------------------------

    def center_mask(self):
        cs = self.spec.center_species
        if cs is None:
            return np.ones(self.batch.n_atoms, dtype=bool)
        codes = [self.batch.species.index(s) for s in cs if s in self.batch.species]
        return np.isin(self.batch.codes, codes)

    def gather(self, tmap, atom_index, samples):
        """Rows of a center-sample map at ``atom_index``, relabeled with ``samples``."""
        out = TensorMap(tmap.tag)
        for key, blk in tmap.blocks.items():
            out.blocks[key] = blk.copy_with(values=blk.values[atom_index], samples=samples)
        return out

    def select_pairs(self, pair_index):
        pm = self.pair_map()
        samples = self.batch.pair_samples(pair_index)
        out = TensorMap(pm.tag)
        for key, blk in pm.blocks.items():
            out.blocks[key] = blk.copy_with(values=blk.values[pair_index], samples=samples)
        return out

    def pairs_of_centers(self, mask):
        return np.flatnonzero(mask[self.batch.pair_center])

    # -- message passing -------------------------------------------------------

    def message(self, neighbor_map, mask, lambda_keep=None):
        """sum_{i1 in A_i} neighbor_map(i1) (x) r_{i1 i} for centers i in ``mask``."""
        pidx = self.pairs_of_centers(mask)
        samples = self.batch.pair_samples(pidx)
        gathered = self.gather(neighbor_map, self.batch.pair_neighbor[pidx], samples)
        pairs = self.select_pairs(pidx)
        centers = np.flatnonzero(mask)
        position = np.full(self.batch.n_atoms, -1)
        position[centers] = np.arange(len(centers))
        out_samples = self.batch.center_samples().select(centers)
        return cg_combine(
            gathered,
            pairs,
            self.cache,
            lambda_keep=lambda_keep,
            lambda_max=self.spec.lambda_cap,
            tag=f"msg({neighbor_map.tag})",
            reduce_index=position[self.batch.pair_center[pidx]],
            out_samples=out_samples,
        )


def _final_kwargs(ctx, final):
    if final:
        return {"lambda_keep": ctx.spec.final_lambdas}
    return {}


def _sigma_filter(tmap, spec):
    if spec.sigma_keep is None:
        return tmap
    return tmap.filter([k for k in tmap.keys() if k[0] in set(spec.sigma_keep)])


def decorated_pair_features(ctx, nu, nu1, final=True):
    """rho_i^nu (x) (rho_{i1}^nu1 (x) r_{i1 i}) on pair samples (structure, i, i1)."""
    _check_orders(nu, nu1)
    mask = ctx.center_mask()
    pidx = ctx.pairs_of_centers(mask)
    samples = ctx.batch.pair_samples(pidx)
    pairs = ctx.select_pairs(pidx)
    right = ctx.gather(ctx.acdc(nu1), ctx.batch.pair_neighbor[pidx], samples)
    left = ctx.gather(ctx.acdc(nu), ctx.batch.pair_center[pidx], samples)
    inner = cg_combine(right, pairs, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag="dec")
    tag = f"pair-nu=({nu},{nu1})"
    out = cg_combine(left, inner, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag=tag, **_final_kwargs(ctx, final))
    return _sigma_filter(out, ctx.spec)


def mp_contract(ctx, nu, nu1, final=True):
    """[nu <- nu1]: decorated pair features summed over the neighbor index."""
    _check_orders(nu, nu1)
    mask = ctx.center_mask()
    msg = ctx.message(ctx.acdc(nu1), mask)
    center = ctx.acdc(nu).select_samples(mask)
    tag = f"[{nu}<-{nu1}]"
    out = cg_combine(center, msg, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag=tag, **_final_kwargs(ctx, final))
    return _sigma_filter(out, ctx.spec)


def mp_two_neighbors(ctx, nu, nu1, nu1_prime, final=True):
    """[nu <- (nu1, nu1')] through [nu <- nu1] (x) [0 <- nu1'], avoiding the double neighbor sum."""
    _check_orders(nu, nu1, nu1_prime)
    first = _mp_raw(ctx, nu, nu1)
    second = _mp_raw(ctx, 0, nu1_prime)
    tag = f"[{nu}<-({nu1},{nu1_prime})]"
    out = cg_combine(first, second, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag=tag, **_final_kwargs(ctx, final))
    return _sigma_filter(out, ctx.spec)


def _mp_raw(ctx, nu, nu1):
    mask = ctx.center_mask()
    msg = ctx.message(ctx.acdc(nu1), mask)
    center = ctx.acdc(nu).select_samples(mask)
    return cg_combine(center, msg, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag=f"[{nu}<-{nu1}]")


def mp_edge_features(ctx, nu, nu1, nu2, final=True):
    """Edge features sum over i2 != i1 of the decorated triplet (i, i1, i2), on pair samples."""
    _check_orders(nu, nu1, nu2)
    mask = ctx.center_mask()
    pidx = ctx.pairs_of_centers(mask)
    samples = ctx.batch.pair_samples(pidx)
    pairs = ctx.select_pairs(pidx)
    dec2_right = ctx.gather(ctx.acdc(nu1), ctx.batch.pair_neighbor[pidx], samples)
    left = ctx.gather(ctx.acdc(nu), ctx.batch.pair_center[pidx], samples)
    inner = cg_combine(dec2_right, pairs, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag="dec")
    dec = cg_combine(left, inner, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag="dec")

    # sum over all i2 in A_i, then remove the i2 == i1 term
    full = ctx.message(ctx.acdc(nu2), mask)
    centers = np.flatnonzero(mask)
    position = np.full(ctx.batch.n_atoms, -1)
    position[centers] = np.arange(len(centers))
    full_at_pairs = ctx.gather(full, position[ctx.batch.pair_center[pidx]], samples)
    own_nb = ctx.gather(ctx.acdc(nu2), ctx.batch.pair_neighbor[pidx], samples)
    own = cg_combine(own_nb, pairs, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag="msg")
    third = TensorMap("msg")
    for key, blk in full_at_pairs.blocks.items():
        third.blocks[key] = blk.copy_with(values=blk.values - own.blocks[key].values)
    tag = f"edge-nu=({nu},{nu1},{nu2})"
    out = cg_combine(dec, third, ctx.cache, lambda_max=ctx.spec.lambda_cap, tag=tag, **_final_kwargs(ctx, final))
    return _sigma_filter(out, ctx.spec)


def three_center_features(ctx):
    """Invariants sum_m <nlm|r_{i1 i}><n'lm|r_{i2 i}> for every (i, i1, i2) with i1, i2 in A_i."""
    mask = ctx.center_mask()
    pidx = ctx.pairs_of_centers(mask)
    pm = ctx.pair_map()
    rows_a, rows_b = [], []
    pc = ctx.batch.pair_center[pidx]
    for c in np.unique(pc):
        mine = pidx[pc == c]
        a, b = np.meshgrid(mine, mine, indexing="ij")
        rows_a.append(a.ravel())
        rows_b.append(b.ravel())
    ia = np.concatenate(rows_a) if rows_a else np.zeros(0, int)
    ib = np.concatenate(rows_b) if rows_b else np.zeros(0, int)
    b = ctx.batch
    samples = Labels(
        ("structure", "center", "neighbor_1", "neighbor_2"),
        np.stack(
            [b.atom_structure[b.pair_center[ia]], b.atom_local[b.pair_center[ia]],
             b.atom_local[b.pair_neighbor[ia]], b.atom_local[b.pair_neighbor[ib]]],
            axis=1,
        ).reshape(-1, 4),
    )
    props0 = density_properties(ctx.spec, b.species)
    p = len(props0)
    ii, jj = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    vals, rows = [], []
    for l in pm.lambdas():
        x = pm.blocks[(1, l)].values
        vals.append(np.einsum("smp,smq->spq", x[ia], x[ib]).reshape(len(ia), -1))
        rows.append(np.concatenate([props0.values[ii], props0.values[jj], np.full((p * p, 1), l)], axis=1))
    props = Labels(("a", "n", "a'", "n'", "l"), np.concatenate(rows))
    values = np.concatenate(vals, axis=1)[:, None, :]
    tag = "3center-nu=0"
    return TensorMap(tag, {(1, 0): EquivariantBlock(1, 0, values, samples, props, tag)})


def _check_orders(*orders):
    for o in orders:
        if o not in (0, 1, 2):
            raise ConfigurationError(f"decoration orders must be 0, 1 or 2, got {o}")


MP_PATTERNS = ("[nu<-[nu<-nu]]", "[[nu<-nu]<-nu]", "[[nu<-nu]<-[nu<-nu]]")


def mp_iterate(ctx, pattern, nu=1, final=True):
    """Iterated message passing for the three two-step patterns.

    ``pattern`` is one of "[nu<-[nu<-nu]]", "[[nu<-nu]<-nu]",
    "[[nu<-nu]<-[nu<-nu]]" (or the same with a concrete integer for nu).
    """
    from .features import evaluate, parse_feature_string

    canonical = pattern.replace(str(nu), "nu") if "nu" not in pattern else pattern
    if canonical not in MP_PATTERNS:
        raise ConfigurationError(f"unknown message-passing pattern {pattern!r}")
    node = parse_feature_string(canonical.replace("nu", str(nu)))[0]
    return evaluate(ctx, node, final=final)
