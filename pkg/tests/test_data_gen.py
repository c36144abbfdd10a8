import itertools

import numpy as np
import pytest

from mpacdc.data_gen import (
    CH4_ANGULAR,
    CH4_MORSE,
    ch4_energy,
    ch4_f,
    dipole_moment,
    gen_ch4_like,
    gen_nacl_toy,
    gen_point_charge_molecules,
    morse,
)
from mpacdc.errors import GenerationError, InputError


def test_generators_are_reproducible():
    for gen in (gen_ch4_like, gen_nacl_toy, gen_point_charge_molecules):
        a, b = gen(5, seed=3), gen(5, seed=3)
        for x, y in zip(a, b):
            assert np.array_equal(x.positions, y.positions) and x.symbols == y.symbols
        assert not np.array_equal(a[0].positions, gen(5, seed=4)[0].positions)


def test_morse_minimum():
    assert morse(1.1, 1.0, 1.5, 1.1) == -1.0
    assert morse(50.0, 1.0, 1.5, 1.1) == pytest.approx(0.0, abs=1e-12)


def test_ch4_energy_against_direct_sum(rng):
    # independent evaluation: explicit triple loop over angles and triplets
    pos = np.vstack([np.zeros(3), rng.uniform(-1.5, 1.5, (4, 3))])
    symbols = ["C", "H", "H", "H", "H"]
    e = 0.0
    for i in range(5):
        for j in range(i + 1, 5):
            key = tuple(sorted((symbols[i], symbols[j])))
            d, a, r0 = CH4_MORSE[key]
            r = np.sqrt(np.sum((pos[i] - pos[j]) ** 2))
            e += d * (1 - np.exp(-a * (r - r0))) ** 2 - d
    r = [np.sqrt(pos[k] @ pos[k]) for k in range(1, 5)]
    for j, k in itertools.combinations(range(4), 2):
        cos = pos[j + 1] @ pos[k + 1] / (r[j] * r[k])
        e += CH4_ANGULAR * cos * np.exp(-(r[j] / 1.5) ** 2) * np.exp(-(r[k] / 1.5) ** 2)
    prod = 1.0
    for x in r:
        prod *= (x / 1.5) ** 2 * np.exp(1 - (x / 1.5) ** 2)
    e += 8.0 * prod
    assert ch4_energy(pos, symbols) == pytest.approx(e, abs=1e-12)


def test_three_body_term_of_regular_tetrahedron():
    # four H at distance d on tetrahedron vertices: six pairs with cos = -1/3, and
    # sum_jk cos = -2, so the three-body term is -2 a f(d)^2
    d = 1.1
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3) * d
    pos = np.vstack([np.zeros(3), v])
    syms = ["C"] + ["H"] * 4
    hh = np.linalg.norm(v[0] - v[1])
    two_body = 4 * morse(d, *CH4_MORSE[("C", "H")]) + 6 * morse(hh, *CH4_MORSE[("H", "H")])
    g = (d / 1.5) ** 2 * np.exp(1 - (d / 1.5) ** 2)
    four_body = 8.0 * g**4
    e = ch4_energy(pos, syms)
    assert e - two_body - four_body == pytest.approx(-2 * CH4_ANGULAR * ch4_f(d) ** 2, abs=1e-10)


def test_ch4_sampling_constraints():
    for st in gen_ch4_like(50, seed=1):
        assert st.symbols == ("C", "H", "H", "H", "H")
        assert np.array_equal(st.positions[0], np.zeros(3))
        assert np.all(np.linalg.norm(st.positions[1:], axis=1) <= 3.0)
        d = np.linalg.norm(st.positions[:, None] - st.positions[None], axis=-1) + 10 * np.eye(5)
        assert d.min() >= 0.5
        assert st.tags["energy"] == ch4_energy(st.positions, st.symbols)


def test_nacl_sampling():
    sts = gen_nacl_toy(300, seed=2)
    r = np.array([s.tags["r_nacl"] for s in sts])
    for st in sts[:20]:
        assert st.symbols[:2] == ("Na", "Cl") and set(st.symbols[2:]) == {"X"}
        assert np.linalg.norm(st.positions[0] - st.positions[1]) == pytest.approx(st.tags["r_nacl"], abs=1e-12)
        assert st.tags["energy"] == -1.0 / st.tags["r_nacl"]
        assert np.all(st.positions >= 0) and np.all(st.positions <= 12.0)
        d = np.linalg.norm(st.positions[2:, None] - st.positions[None], axis=-1)
        d[np.arange(len(d)), np.arange(2, len(st))] = np.inf
        assert d.min() >= 2.5
    # uniform in r: every 1 angstrom bin holds at least 5 percent of the samples
    hist, _ = np.histogram(r, bins=np.arange(2.5, 11.5, 1.0))
    assert hist.min() >= 0.05 * len(r)


def test_nacl_without_dummies():
    for st in gen_nacl_toy(5, seed=0, n_dummy=0):
        assert len(st) == 2
        assert st.tags["energy"] == pytest.approx(-1.0 / np.linalg.norm(st.positions[1] - st.positions[0]), rel=1e-14)


def test_unsatisfiable_packing_raises():
    with pytest.raises(GenerationError):
        gen_nacl_toy(1, box=5.0, n_dummy=50, r_range=(2.5, 3.0))
    with pytest.raises(GenerationError):
        gen_nacl_toy(1, box=2.0, r_range=(5.0, 6.0))
    with pytest.raises(GenerationError):
        gen_point_charge_molecules(1, n_atoms=(40, 40), radius=0.5)
    with pytest.raises(GenerationError):
        gen_point_charge_molecules(1, species_charges={"A": 1.0, "B": 2.0}, n_atoms=(3, 3))
    with pytest.raises(InputError):
        gen_ch4_like(0)


def test_point_charge_dipoles():
    charges = {"A": 1.0, "B": -1.0, "X": 0.0}
    pos = np.array([[0, 0, 0], [0, 0, 1.3]])
    assert np.allclose(dipole_moment(pos, ["A", "B"], charges), [0, 0, -1.3])
    for st in gen_point_charge_molecules(30, seed=5):
        q = np.array([charges[s] for s in st.symbols])
        assert q.sum() == 0
        assert 4 <= len(st) <= 9
        assert np.allclose(st.tags["dipole"], q @ st.positions, atol=1e-12)
        assert np.all(np.linalg.norm(st.positions, axis=1) <= 1.5)


def test_dipole_rotates_with_structure(rng):
    from mpacdc import Rotation

    st = gen_point_charge_molecules(1, seed=9)[0]
    rot = Rotation.random(rng)
    moved = st.transformed(rot.matrix, shift=[1.0, 0, 0])
    assert np.allclose(moved.tags["dipole"], dipole_moment(moved.positions, moved.symbols, {"A": 1, "B": -1, "X": 0}))
