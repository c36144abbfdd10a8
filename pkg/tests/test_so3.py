import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lpmv
from sympy import S
from sympy.physics.quantum.cg import CG

from mpacdc.errors import ConfigurationError, ContractError, InputError
from mpacdc.so3 import (
    Rotation,
    build_cg_cache,
    complex_cg,
    complex_to_real_matrix,
    real_cg_block,
    real_spherical_harmonics,
    wigner_matrix,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def ylm_oracle(l, d):
    """Real harmonics from scipy's associated Legendre functions (which carry the CS phase)."""
    d = unit(d)
    theta = np.arccos(np.clip(d[:, 2], -1, 1))
    phi = np.arctan2(d[:, 1], d[:, 0])
    out = np.zeros((len(d), 2 * l + 1))
    for m in range(-l, l + 1):
        am = abs(m)
        norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
        p = lpmv(am, l, np.cos(theta)) * (-1) ** am
        if m == 0:
            out[:, l] = norm * p
        elif m > 0:
            out[:, l + m] = math.sqrt(2) * norm * p * np.cos(am * phi)
        else:
            out[:, l + m] = math.sqrt(2) * norm * p * np.sin(am * phi)
    return out


def test_l0_constant(rng):
    d = unit(rng.standard_normal((5, 3)))
    y = real_spherical_harmonics(0, d)[0]
    assert np.allclose(y, 0.28209479177, atol=1e-11)


def test_l1_along_z_is_axial():
    y = real_spherical_harmonics(1, [0.0, 0.0, 1.0])[1]
    assert y[0] == 0.0 and y[2] == 0.0
    assert y[1] == pytest.approx(math.sqrt(3 / (4 * math.pi)))


def test_l1_component_order_is_y_z_x():
    for axis, idx in (([1.0, 0, 0], 2), ([0, 1.0, 0], 0), ([0, 0, 1.0], 1)):
        y = real_spherical_harmonics(1, axis)[1]
        assert np.argmax(y) == idx


def test_matches_legendre_oracle(rng):
    d = unit(rng.standard_normal((50, 3)))
    ys = real_spherical_harmonics(6, d)
    for l in range(7):
        assert np.max(np.abs(ys[l] - ylm_oracle(l, d))) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_addition_sum_rule(v):
    ys = real_spherical_harmonics(5, unit(v))
    for l, y in enumerate(ys):
        assert np.sum(y**2) == pytest.approx((2 * l + 1) / (4 * math.pi), rel=1e-12)


def test_orthonormal_on_sphere():
    # Gauss-Legendre in cos(theta) times uniform phi integrates degree <= 2*l_max exactly
    l_max = 4
    x, w = np.polynomial.legendre.leggauss(l_max + 2)
    phi = np.arange(2 * l_max + 2) * 2 * np.pi / (2 * l_max + 2)
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st_ = np.sqrt(1 - ct**2)
    d = np.stack([st_ * np.cos(ph), st_ * np.sin(ph), ct], -1).reshape(-1, 3)
    wts = (w[:, None] * np.full(len(phi), 2 * np.pi / len(phi))[None]).ravel()
    y = np.concatenate(real_spherical_harmonics(l_max, d), axis=1)
    assert np.max(np.abs((y * wts[:, None]).T @ y - np.eye(y.shape[1]))) < 1e-12


def test_non_unit_direction_rejected():
    with pytest.raises(InputError):
        real_spherical_harmonics(2, [1.0, 0.0, 1e-4])
    with pytest.raises(InputError):
        real_spherical_harmonics(2, [[0.0, 0.0, 2.0]])


@pytest.mark.parametrize("l1,l2,lam", [(1, 1, 0), (1, 1, 1), (1, 2, 2), (2, 2, 3), (3, 2, 4), (2, 3, 1)])
def test_complex_cg_matches_sympy(l1, l2, lam):
    for m1 in range(-l1, l1 + 1):
        for m2 in range(-l2, l2 + 1):
            mu = m1 + m2
            if abs(mu) > lam:
                continue
            ref = float(CG(S(l1), S(m1), S(l2), S(m2), S(lam), S(mu)).doit())
            assert complex_cg(l1, m1, l2, m2, lam, mu) == pytest.approx(ref, abs=1e-14)


def sympy_real_block(l1, l2, lam):
    c = np.zeros((2 * l1 + 1, 2 * l2 + 1, 2 * lam + 1))
    for m1 in range(-l1, l1 + 1):
        for m2 in range(-l2, l2 + 1):
            mu = m1 + m2
            if abs(mu) <= lam:
                c[l1 + m1, l2 + m2, lam + mu] = float(CG(S(l1), S(m1), S(l2), S(m2), S(lam), S(mu)).doit())
    u1, u2, u3 = (complex_to_real_matrix(l) for l in (l1, l2, lam))
    r = np.einsum("ia,jb,kc,abc->ijk", u1.conj(), u2.conj(), u3, c)
    return r.imag if (l1 + l2 + lam) % 2 else r.real


@pytest.mark.parametrize("l1,l2,lam", [(1, 1, 0), (1, 1, 1), (1, 1, 2), (2, 1, 2), (2, 2, 1), (3, 3, 2)])
def test_real_block_matches_independent_oracle(l1, l2, lam):
    assert np.max(np.abs(real_cg_block(l1, l2, lam) - sympy_real_block(l1, l2, lam))) < 1e-14


def test_scalar_coupling_is_one():
    assert build_cg_cache(0)[0, 0, 0].ravel().tolist() == [1.0]


def test_blocks_are_isometries():
    cache = build_cg_cache(4)
    for (l1, l2, lam), blk in cache.items():
        m = blk.reshape(-1, 2 * lam + 1)
        assert np.max(np.abs(m.T @ m - np.eye(2 * lam + 1))) < 1e-13


def test_full_decomposition_is_unitary():
    # stacking all lam for fixed (l1, l2) gives an orthogonal change of basis
    l1, l2 = 2, 3
    m = np.concatenate([real_cg_block(l1, l2, lam).reshape(-1, 2 * lam + 1) for lam in range(1, 6)], axis=1)
    assert np.max(np.abs(m @ m.T - np.eye(m.shape[0]))) < 1e-13


def test_cache_selection_rules():
    cache = build_cg_cache(3)
    assert (1, 1, 3) not in cache
    assert (1, 1, 2) in cache
    assert (3, 3, 4) not in cache  # lam above l_max_built
    with pytest.raises(ContractError):
        cache.block(1, 1, 3)
    assert len(cache) == sum(1 for _ in cache)


@pytest.mark.parametrize("bad", [-1, 17, 2.5])
def test_cache_range(bad):
    with pytest.raises(ConfigurationError):
        build_cg_cache(bad)


def test_override_changes_one_block():
    cache = build_cg_cache(2)
    bad = cache.with_override((1, 1, 0), np.zeros((3, 3, 1)))
    assert np.all(bad[1, 1, 0] == 0)
    assert np.array_equal(bad[1, 1, 2], cache[1, 1, 2])


def test_coupled_harmonics_are_equivariant(rng):
    # sum C Y_l1(d) Y_l2(d) is proportional to Y_lam(d) for even l1+l2+lam
    d = unit(rng.standard_normal((10, 3)))
    ys = real_spherical_harmonics(4, d)
    for l1, l2, lam in [(1, 1, 2), (2, 2, 2), (1, 3, 4), (2, 2, 0)]:
        prod = np.einsum("ia,ib,abc->ic", ys[l1], ys[l2], real_cg_block(l1, l2, lam))
        ratio = prod / ys[lam]
        mask = np.abs(ys[lam]) > 1e-3
        assert np.ptp(ratio[mask]) < 1e-10


def test_rotation_validation(rng):
    r = Rotation.random(rng)
    assert abs(np.linalg.det(r.matrix) - 1) < 1e-12
    assert Rotation.random(rng, improper=True).improper
    with pytest.raises(InputError):
        Rotation(np.diag([1.0, 1.0, 2.0]))
    with pytest.raises(InputError):
        Rotation(-np.eye(3))  # det -1 without the improper flag


@pytest.mark.parametrize("lam", [0, 1, 2, 3, 5])
def test_wigner_intertwines(rng, lam):
    r = Rotation.random(rng)
    dmat = wigner_matrix(lam, r)
    assert np.max(np.abs(dmat @ dmat.T - np.eye(2 * lam + 1))) < 1e-12
    d = unit(rng.standard_normal((20, 3)))
    lhs = real_spherical_harmonics(lam, unit(r.apply(d)))[lam]
    rhs = real_spherical_harmonics(lam, d)[lam] @ dmat.T
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_wigner_is_a_representation(rng):
    a, b = Rotation.random(rng), Rotation.random(rng)
    for lam in range(4):
        assert np.allclose(wigner_matrix(lam, a @ b), wigner_matrix(lam, a) @ wigner_matrix(lam, b), atol=1e-12)


def test_inversion_acts_as_parity():
    inv = Rotation.inversion()
    for lam in range(4):
        assert np.allclose(wigner_matrix(lam, inv), (-1) ** lam * np.eye(2 * lam + 1), atol=1e-12)
