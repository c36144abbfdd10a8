import numpy as np
import pytest

from mpacdc.blocks import (
    EquivariantBlock,
    Labels,
    TensorMap,
    concatenate_samples,
    load_arrays,
    load_block,
    load_tensormap,
    save_arrays,
    save_block,
    save_tensormap,
)
from mpacdc.errors import ContractError, ParseError


def make_map(rng, n=4):
    samples = Labels(("structure", "center"), np.stack([np.zeros(n), np.arange(n)], 1))
    blocks = {}
    for sigma, lam, p in [(1, 0, 3), (1, 1, 2), (-1, 1, 5)]:
        props = Labels(("q",), np.arange(p))
        blocks[(sigma, lam)] = EquivariantBlock(sigma, lam, rng.standard_normal((n, 2 * lam + 1, p)), samples, props, "t")
    return TensorMap("t", blocks)


def test_labels_basics():
    lab = Labels(("a", "b"), [[0, 1], [2, 3]])
    assert len(lab) == 2
    assert lab.column("b").tolist() == [1, 3]
    assert lab.select([1]) == Labels(("a", "b"), [[2, 3]])
    assert Labels.from_json(lab.to_json()) == lab
    assert Labels(("x",), [1, 2]).values.shape == (2, 1)


def test_key_order(rng):
    tm = make_map(rng)
    assert tm.keys() == [(1, 0), (1, 1), (-1, 1)]
    assert tm.lambdas() == [0, 1]


def test_block_round_trip(tmp_path, rng):
    blk = make_map(rng).blocks[(-1, 1)]
    h1 = save_block(blk, tmp_path / "b.bin")
    back = load_block(tmp_path / "b.bin")
    assert np.array_equal(back.values, blk.values)
    assert back.samples == blk.samples and back.properties == blk.properties
    assert (back.sigma, back.lam, back.tag) == (-1, 1, "t")
    assert save_block(blk, tmp_path / "c.bin") == h1


def test_tensormap_round_trip(tmp_path, rng):
    tm = make_map(rng)
    manifest = save_tensormap(tm, tmp_path / "out")
    assert len(manifest["blocks"]) == 3
    assert {e["file"] for e in manifest["blocks"]} == {
        "block_sigmap_lambda0.bin",
        "block_sigmap_lambda1.bin",
        "block_sigmam_lambda1.bin",
    }
    back = load_tensormap(tmp_path / "out")
    for key in tm.keys():
        assert np.array_equal(back.blocks[key].values, tm.blocks[key].values)


def test_truncated_file(tmp_path, rng):
    path = tmp_path / "b.bin"
    save_block(make_map(rng).blocks[(1, 0)], path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ParseError):
        load_block(path)


def test_arrays_container(tmp_path):
    save_arrays(tmp_path / "m.bin", {"x": 1}, {"a": np.arange(3.0), "b": np.ones((2, 2))})
    header, arrays = load_arrays(tmp_path / "m.bin")
    assert header["x"] == 1
    assert arrays["b"].shape == (2, 2)


def test_concatenate_samples(rng):
    a, b = make_map(rng), make_map(rng)
    both = concatenate_samples([a, b])
    assert both.blocks[(1, 1)].values.shape == (8, 3, 2)
    bad = make_map(rng)
    bad.blocks[(1, 0)] = bad.blocks[(1, 0)].copy_with(properties=Labels(("r",), np.arange(3)))
    with pytest.raises(ContractError):
        concatenate_samples([a, bad])


def test_select_samples_and_invariants(rng):
    tm = make_map(rng)
    sub = tm.select_samples(np.array([True, False, True, False]))
    assert sub.blocks[(1, 1)].values.shape[0] == 2
    assert tm.invariants() is tm.blocks[(1, 0)]
