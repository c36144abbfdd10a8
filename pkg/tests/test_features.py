import numpy as np
import pytest

from conftest import random_cluster, small_spec
from mpacdc import compute_features, parse_feature_string
from mpacdc.errors import ConfigurationError
from mpacdc.features import Acdc, DecoratedPair, Edge, MessagePassing, ThreeCenter, body_order


@pytest.mark.parametrize(
    "text,expected",
    [
        ("nu=2", [Acdc(2)]),
        ("nu=1 + nu=2", [Acdc(1), Acdc(2)]),
        ("[1<-1]", [MessagePassing(Acdc(1), (Acdc(1),))]),
        (" [ 0 <- ( 1 , 2 ) ] ", [MessagePassing(Acdc(0), (Acdc(1), Acdc(2)))]),
        ("[[1<-1]<-1]", [MessagePassing(MessagePassing(Acdc(1), (Acdc(1),)), (Acdc(1),))]),
        ("pair-nu=(1,0)", [DecoratedPair(1, 0)]),
        ("edge-nu=(1,1,0)", [Edge(1, 1, 0)]),
        ("3center-nu=0", [ThreeCenter()]),
    ],
)
def test_parse(text, expected):
    assert parse_feature_string(text) == expected


@pytest.mark.parametrize("text", ["", "nu=", "nu=2 +", "[1<-]", "[1<-(1)]", "[1<-1", "nu=2 nu=3", "rho=2", "pair-nu=(1)"])
def test_parse_errors(text):
    with pytest.raises(ConfigurationError):
        parse_feature_string(text)


@pytest.mark.parametrize("text", ["nu=3", "[1<-1]", "[1<-(1,2)]", "[[1<-1]<-[0<-1]]"])
def test_string_round_trip(text):
    (node,) = parse_feature_string(text)
    assert parse_feature_string(str(node)) == [node]


def test_body_order():
    assert body_order(parse_feature_string("nu=3")[0]) == 3
    assert body_order(parse_feature_string("[1<-1]")[0]) == 3
    assert body_order(parse_feature_string("[1<-(1,1)]")[0]) == 5
    assert body_order(parse_feature_string("[[1<-1]<-1]")[0]) == 5
    with pytest.raises(ConfigurationError):
        body_order(ThreeCenter())


@pytest.mark.parametrize("text", ["nu=2", "[1<-1]", "nu=1+[0<-1]", "pair-nu=(0,1)"])
def test_chunking_and_threads_are_bitwise_identical(rng, text):
    sts = [random_cluster(rng, n_atoms=int(rng.integers(3, 7))) for _ in range(9)]
    spec = small_spec(text)
    ref = compute_features(sts, spec, chunk_size=100)
    for chunk, threads in [(1, 1), (4, 3), (2, 8)]:
        out = compute_features(sts, spec, threads=threads, chunk_size=chunk)
        assert out.keys() == ref.keys()
        for key in ref.keys():
            assert np.array_equal(out.blocks[key].values, ref.blocks[key].values)
            assert out.blocks[key].samples == ref.blocks[key].samples


def test_merge_concatenates_terms(rng):
    sts = [random_cluster(rng) for _ in range(2)]
    spec = small_spec()
    a = compute_features(sts, spec.with_(feature_string="nu=1"))
    b = compute_features(sts, spec.with_(feature_string="[0<-1]"))
    both = compute_features(sts, spec.with_(feature_string="nu=1 + [0<-1]"))
    for key in both.keys():
        parts = [m.blocks[key].values for m in (a, b) if key in m]
        assert np.array_equal(both.blocks[key].values, np.concatenate(parts, axis=2))
        assert both.blocks[key].properties.names == ("term", "index")


def test_lambda_and_sigma_filters(rng):
    sts = [random_cluster(rng)]
    spec = small_spec("[1<-1]", lambda_keep=(1,), sigma_keep=(-1,))
    assert compute_features(sts, spec).keys() == [(-1, 1)]


def test_species_inferred_from_data(rng):
    st = random_cluster(rng, symbols=("O", "H"))
    spec = small_spec("nu=1", species=None)
    out = compute_features([st], spec)
    assert len(out.blocks[(1, 0)].properties) == 2 * spec.basis.n_max


def test_pca_forces_single_chunk(rng):
    sts = [random_cluster(rng) for _ in range(5)]
    spec = small_spec("nu=3", pca_dim=2)
    a = compute_features(sts, spec, chunk_size=1)
    b = compute_features(sts, spec, chunk_size=100, threads=4)
    for key in a.keys():
        assert np.array_equal(a.blocks[key].values, b.blocks[key].values)
