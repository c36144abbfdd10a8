import numpy as np
import pytest

from mpacdc.errors import ConfigurationError, InputError
from mpacdc.radial import RadialBasisSpec, cutoff_value, evaluate_radial, radial_table


def gram(spec, l, n_points=256):
    t, w = np.polynomial.legendre.leggauss(n_points)
    r = 0.5 * spec.r_cut * (t + 1)
    w = 0.5 * spec.r_cut * w
    v = evaluate_radial(spec, l, r)
    return (v * (w * r**2)[:, None]).T @ v


@pytest.mark.parametrize("l", range(5))
def test_orthonormal(l):
    spec = RadialBasisSpec(n_max=6, r_cut=3.5)
    assert np.max(np.abs(gram(spec, l) - np.eye(6))) < 1e-8


def test_orthonormal_large_basis():
    spec = RadialBasisSpec(n_max=14, r_cut=5.0)
    for l in (0, 3):
        assert np.max(np.abs(gram(spec, l) - np.eye(14))) < 1e-10


def test_vanishes_at_origin_for_l_positive():
    spec = RadialBasisSpec()
    for l in range(1, 5):
        assert np.all(evaluate_radial(spec, l, 0.0) == 0.0)
    assert np.any(evaluate_radial(spec, 0, 0.0) != 0.0)


def test_matches_quadrature_lowdin_oracle():
    # independent construction: primitives on a quadrature grid, overlap,
    # eigendecomposition, S^-1/2
    spec = RadialBasisSpec(n_max=6, r_cut=3.5)
    s = 3.5 * 0.5
    t, w = np.polynomial.legendre.leggauss(300)
    x = 1.75 * (t + 1)
    w = 1.75 * w

    def prim(r):
        r = np.atleast_1d(r)
        return np.stack([r**k * np.exp(-(r**2) / (2 * s * s)) for k in range(6)], -1)

    p = prim(x)
    ov = (p * (w * x**2)[:, None]).T @ p
    ev, u = np.linalg.eigh(ov)
    t_mat = u @ np.diag(ev**-0.5) @ u.T
    expected = prim(1.0)[0] @ t_mat.T
    assert np.max(np.abs(evaluate_radial(spec, 0, 1.0) - expected)) < 1e-8


def test_span_is_nested():
    r = np.linspace(0, 3.5, 400)
    for l in (0, 2):
        small = evaluate_radial(RadialBasisSpec(n_max=4, r_cut=3.5), l, r)
        big = evaluate_radial(RadialBasisSpec(n_max=6, r_cut=3.5), l, r)
        coef, *_ = np.linalg.lstsq(big, small, rcond=None)
        assert np.max(np.abs(big @ coef - small)) < 1e-8


def test_lipschitz_continuity():
    spec = RadialBasisSpec()
    r = np.linspace(0, 3.5 - 2e-6, 200)
    h = 1e-6
    for l in range(3):
        diff = np.abs(evaluate_radial(spec, l, r + h) - evaluate_radial(spec, l, r))
        assert diff.max() < 50 * h


def test_outside_cutoff_rejected():
    with pytest.raises(InputError):
        evaluate_radial(RadialBasisSpec(), 0, 3.6)
    with pytest.raises(InputError):
        evaluate_radial(RadialBasisSpec(), 0, -0.1)


def test_shapes():
    spec = RadialBasisSpec(n_max=5)
    assert evaluate_radial(spec, 1, 1.0).shape == (5,)
    assert evaluate_radial(spec, 1, [1.0, 2.0]).shape == (2, 5)
    assert len(radial_table(spec, 3, [1.0])) == 4


def test_cutoff_values():
    assert cutoff_value(0.0, 3.5, 0.5) == 1.0
    assert cutoff_value(3.5, 3.5, 0.5) == 0.0
    assert cutoff_value(3.25, 3.5, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert cutoff_value(3.0, 3.5, 0.5) == 1.0
    assert cutoff_value(4.0, 3.5, 0.5) == 0.0


def test_cutoff_is_smooth():
    r = np.linspace(2.9, 3.6, 7001)
    f = cutoff_value(r, 3.5, 0.5)
    slope = np.diff(f) / np.diff(r)
    assert np.all(np.diff(f) <= 1e-15)
    assert np.max(np.abs(np.diff(slope))) < 1e-2  # no kinks


@pytest.mark.parametrize(
    "kw",
    [dict(n_max=0), dict(cutoff_width=0.0), dict(cutoff_width=4.0), dict(smearing_sigma=0.0), dict(kind="spline")],
)
def test_invalid_spec(kw):
    with pytest.raises(ConfigurationError):
        RadialBasisSpec(**kw)
