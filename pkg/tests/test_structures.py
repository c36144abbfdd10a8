import numpy as np
import pytest

from mpacdc.errors import ConfigurationError, InputError, ParseError
from mpacdc.structures import Structure, build_neighbor_list, read_xyz, species_table, write_xyz


def brute_pairs(st, r_cut):
    pos = st.positions
    out = {}
    n = len(pos)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            best = None
            shifts = [np.zeros(3)]
            if st.periodic:
                shifts = [np.array([a, b, c]) @ st.cell for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)]
            for s in shifts:
                v = pos[j] + s - pos[i]
                if best is None or np.linalg.norm(v) < np.linalg.norm(best):
                    best = v
            if np.linalg.norm(best) <= r_cut:
                out[(i, j)] = best
    return out


def test_neighbor_list_matches_brute_force(rng):
    pos = rng.uniform(0, 6, (25, 3))
    st = Structure(pos, ["H"] * 25)
    nl = build_neighbor_list(st, 2.5)
    ref = brute_pairs(st, 2.5)
    assert sorted(nl.pairs()) == sorted(ref)
    assert nl.pairs() == sorted(nl.pairs())
    for (i, j), v in zip(nl.pairs(), nl.vectors):
        assert np.allclose(v, ref[(i, j)], atol=1e-14)


def test_periodic_minimum_image(rng):
    cell = np.array([[7.0, 0, 0], [1.5, 6.5, 0], [0.5, 1.0, 7.5]])
    frac = rng.uniform(0, 1, (12, 3))
    st = Structure(frac @ cell, ["Na"] * 12, cell=cell, pbc=(True, True, True))
    nl = build_neighbor_list(st, 2.9)
    ref = brute_pairs(st, 2.9)
    assert sorted(nl.pairs()) == sorted(ref)
    for (i, j), v in zip(nl.pairs(), nl.vectors):
        assert np.allclose(v, ref[(i, j)], atol=1e-12)


def test_half_cell_restriction():
    st = Structure(np.zeros((1, 3)), ["H"], cell=np.eye(3) * 4.0, pbc=(True, True, True))
    with pytest.raises(ConfigurationError):
        build_neighbor_list(st, 2.0)


def test_pairs_are_symmetric(rng):
    st = Structure(rng.uniform(0, 4, (8, 3)), ["C"] * 8)
    nl = build_neighbor_list(st, 3.0)
    lookup = dict(zip(nl.pairs(), nl.vectors))
    for (i, j), v in lookup.items():
        assert np.array_equal(lookup[(j, i)], -v)


def test_structure_validation():
    with pytest.raises(InputError):
        Structure(np.zeros((2, 3)), ["H"])
    with pytest.raises(InputError):
        Structure(np.zeros((1, 3)), ["H"], pbc=(True, False, False))
    st = Structure(np.zeros((2, 3)), ["H", "O"])
    with pytest.raises(InputError):
        st.species_codes(("H",))


def test_transform_rotates_dipole_tag():
    st = Structure([[0, 0, 0], [1.0, 0, 0]], ["A", "B"], tags={"dipole": np.array([1.0, 0, 0])})
    rot = np.array([[0, -1.0, 0], [1.0, 0, 0], [0, 0, 1.0]])
    moved = st.transformed(rot, shift=[0, 0, 2.0])
    assert np.allclose(moved.tags["dipole"], [0, 1.0, 0])
    assert np.allclose(moved.positions[1], [0, 1.0, 2.0])


def test_xyz_round_trip(tmp_path, rng):
    cell = np.diag([8.0, 9.0, 10.0])
    sts = [
        Structure(rng.standard_normal((3, 3)), ["C", "H", "H"], tags={"energy": -1.25, "dipole": np.array([0.1, 0.2, 0.3])}),
        Structure(rng.uniform(0, 8, (2, 3)), ["Na", "Cl"], cell=cell, pbc=(True, True, False), tags={"note": "two words"}),
    ]
    path = tmp_path / "a.xyz"
    write_xyz(sts, path, extra_info={"seed": 7})
    back = read_xyz(path)
    assert len(back) == 2
    for a, b in zip(sts, back):
        assert a.symbols == b.symbols
        assert np.array_equal(a.positions, b.positions)
        assert a.pbc == b.pbc
        assert b.tags["seed"] == 7
    assert back[0].tags["energy"] == -1.25
    assert np.array_equal(back[0].tags["dipole"], [0.1, 0.2, 0.3])
    assert np.array_equal(back[1].cell, cell)
    assert back[1].tags["note"] == "two words"


def test_reads_extra_columns(tmp_path):
    text = "2\nProperties=species:S:1:pos:R:3:forces:R:3 energy=1.5\nH 0 0 0 1 1 1\nH 0 0 0.7 1 1 1\n"
    path = tmp_path / "b.xyz"
    path.write_text(text)
    (st,) = read_xyz(path)
    assert st.positions[1, 2] == 0.7
    assert st.tags["energy"] == 1.5


@pytest.mark.parametrize(
    "text,line",
    [
        ("x\n\n", 1),
        ("2\nenergy=1\nH 0 0 0\n", 4),
        ("1\nenergy=1\nH 0 zero 0\n", 3),
        ("1\nLattice=\"1 2 3\"\nH 0 0 0\n", 2),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, text, line):
    path = tmp_path / "bad.xyz"
    path.write_text(text)
    with pytest.raises(ParseError) as err:
        read_xyz(path)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_species_table():
    sts = [Structure(np.zeros((1, 3)), ["O"]), Structure(np.zeros((2, 3)) + [[0, 0, 0], [1, 0, 0]], ["H", "C"])]
    assert species_table(sts) == ["C", "H", "O"]
