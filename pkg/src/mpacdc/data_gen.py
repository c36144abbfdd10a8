"""Seeded generators for toy datasets with closed-form targets.

Every generator is a pure function of its arguments: the same parameters
and seed give bitwise-identical structures.  Lengths are in angstrom.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import GenerationError, InputError
from .structures import Structure

MAX_TRIES = 10_000

# constants of the CH4-like target
CH4_MORSE = {
    ("C", "H"): (1.0, 1.5, 1.1),  # depth, stiffness, equilibrium distance
    ("H", "H"): (0.05, 0.8, 1.0),
}
CH4_ANGULAR = 0.5  # a in a * cos(theta) * f(r1) f(r2)
CH4_FOUR_BODY = 8.0  # b in b * g(r_1) g(r_2) g(r_3) g(r_4)
CH4_F_WIDTH = 1.5
CH4_G_PEAK = 1.5


def morse(r, depth, stiffness, r0):
    return depth * (1.0 - np.exp(-stiffness * (r - r0))) ** 2 - depth


def ch4_f(r):
    return np.exp(-((r / CH4_F_WIDTH) ** 2))


def ch4_g(r):
    # bump with maximum 1 at CH4_G_PEAK, vanishing at the origin
    x = (r / CH4_G_PEAK) ** 2
    return x * np.exp(1.0 - x)


def ch4_energy(positions, symbols):
    """Body-ordered target of a C-centered cluster (carbon first).

    E = sum over atom pairs of Morse(r)
      + a * sum over H pairs (j<k) of cos(theta_jk) f(r_j) f(r_k)
      + b * product over the four H of g(r_k)

    with r_k the C-H distances and theta_jk the H-C-H angle.  The last term
    correlates all four neighbors at once, so no pair-correlation model can
    represent it.
    """
    pos = np.asarray(positions, dtype=float)
    energy = 0.0
    for i, j in itertools.combinations(range(len(pos)), 2):
        key = tuple(sorted((symbols[i], symbols[j])))
        energy += morse(np.linalg.norm(pos[i] - pos[j]), *CH4_MORSE[key])
    c = symbols.index("C")
    h = [k for k, s in enumerate(symbols) if s == "H"]
    vec = pos[h] - pos[c]
    r = np.linalg.norm(vec, axis=1)
    u = vec / r[:, None]
    for j, k in itertools.combinations(range(len(h)), 2):
        energy += CH4_ANGULAR * (u[j] @ u[k]) * ch4_f(r[j]) * ch4_f(r[k])
    energy += CH4_FOUR_BODY * np.prod(ch4_g(r))
    return float(energy)


def _uniform_ball(rng, radius):
    while True:
        p = rng.uniform(-radius, radius, 3)
        if p @ p <= radius * radius:
            return p


def gen_ch4_like(n, seed=0, r_sphere=3.0, min_distance=0.5):
    """Carbon at the origin and four hydrogens uniform in a ball, energy tagged."""
    if n < 1:
        raise InputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    symbols = ("C", "H", "H", "H", "H")
    out = []
    for _ in range(n):
        pos = [np.zeros(3)]
        tries = 0
        while len(pos) < 5:
            tries += 1
            if tries > MAX_TRIES:
                raise GenerationError("could not place hydrogens with the requested minimum distance")
            p = _uniform_ball(rng, r_sphere)
            if all(np.linalg.norm(p - q) >= min_distance for q in pos):
                pos.append(p)
        pos = np.array(pos)
        out.append(Structure(pos, symbols, tags={"energy": ch4_energy(pos, symbols)}))
    return out


def gen_nacl_toy(n, seed=0, box=12.0, n_dummy=30, exclusion=2.5, r_range=(2.5, 11.0)):
    """One Na-Cl pair plus inert dummy atoms ("X") in a non-periodic cubic box.

    The Na-Cl separation is uniform in ``r_range``; the energy tag is
    -1/r in units of 1/angstrom.  Dummies keep ``exclusion`` from every atom.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    lo, hi = r_range
    if hi > box * np.sqrt(3):
        raise GenerationError("Na-Cl separation range does not fit in the box")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        r = rng.uniform(lo, hi)
        for tries in range(MAX_TRIES):
            d = rng.standard_normal(3)
            d /= np.linalg.norm(d)
            na = rng.uniform(0, box, 3)
            cl = na + r * d
            if np.all(cl >= 0) and np.all(cl <= box):
                break
        else:
            raise GenerationError(f"could not place a Na-Cl pair at r={r:.3f} in box {box}")
        pos = [na, cl]
        tries = 0
        while len(pos) < 2 + n_dummy:
            tries += 1
            if tries > MAX_TRIES:
                raise GenerationError(f"could not pack {n_dummy} dummy atoms with exclusion {exclusion}")
            p = rng.uniform(0, box, 3)
            if np.min(np.linalg.norm(np.array(pos) - p, axis=1)) >= exclusion:
                pos.append(p)
        symbols = ("Na", "Cl") + ("X",) * n_dummy
        tags = {"energy": -1.0 / r, "r_nacl": r, "r_distribution": "uniform"}
        out.append(Structure(np.array(pos), symbols, tags=tags))
    return out


DEFAULT_CHARGES = {"A": 1.0, "B": -1.0, "X": 0.0}


def dipole_moment(positions, symbols, charges):
    """sum_i q_i (r_i - r_mean) for fixed per-species charges."""
    pos = np.asarray(positions, dtype=float)
    q = np.array([charges[s] for s in symbols])
    return q @ (pos - pos.mean(axis=0))


def _neutral_composition(rng, n_atoms, charges):
    names = sorted(charges)
    for _ in range(MAX_TRIES):
        picks = rng.choice(len(names), size=n_atoms)
        if abs(sum(charges[names[k]] for k in picks)) < 1e-12:
            return [names[k] for k in picks]
    raise GenerationError(f"no neutral composition of {n_atoms} atoms found for charges {charges}")


def gen_point_charge_molecules(n, seed=0, species_charges=None, n_atoms=(4, 9), radius=1.5, min_distance=0.8):
    """Random neutral clusters with a point-charge dipole tag.

    Atoms lie in a ball of ``radius``, so every pair is within 2 * radius.
    """
    charges = dict(DEFAULT_CHARGES if species_charges is None else species_charges)
    if n < 1:
        raise InputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        count = int(rng.integers(n_atoms[0], n_atoms[1] + 1))
        symbols = _neutral_composition(rng, count, charges)
        pos = []
        tries = 0
        while len(pos) < count:
            tries += 1
            if tries > MAX_TRIES:
                raise GenerationError("could not place atoms with the requested minimum distance")
            p = _uniform_ball(rng, radius)
            if all(np.linalg.norm(p - q) >= min_distance for q in pos):
                pos.append(p)
        pos = np.array(pos)
        tags = {"dipole": dipole_moment(pos, symbols, charges)}
        out.append(Structure(pos, symbols, tags=tags))
    return out
