"""Real spherical harmonics, real-basis Clebsch-Gordan coefficients and Wigner matrices.

Real harmonics are ordered m = -l..l.  For l = 1 this gives the (y, z, x)
component order, with all three components positive along their axis.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, ContractError, InputError

L_MAX_CAP = 16


# ---------------------------------------------------------------------------
# spherical harmonics


def real_spherical_harmonics(l_max, directions):
    """Evaluate real orthonormal spherical harmonics up to ``l_max``.

    Parameters
    ----------
    l_max : int
    directions : array_like, shape (3,) or (n, 3)
        Unit vectors.  Inputs are not normalized: any vector whose norm
        deviates from one by more than 1e-10 raises :class:`InputError`.

    Returns
    -------
    list of ndarray
        Entry ``l`` has shape ``(n, 2l + 1)`` (or ``(2l + 1,)`` for a single
        direction), indexed by m = -l..l.
    """
    d = np.asarray(directions, dtype=float)
    single = d.ndim == 1
    d = np.atleast_2d(d)
    if d.shape[-1] != 3:
        raise InputError(f"directions must have 3 components, got shape {d.shape}")
    norms = np.linalg.norm(d, axis=1)
    if d.shape[0] and np.max(np.abs(norms - 1.0)) > 1e-10:
        raise InputError("directions must be unit vectors (|d| = 1 within 1e-10)")
    values = _rsh_cartesian(l_max, d[:, 0], d[:, 1], d[:, 2])
    if single:
        return [v[0] for v in values]
    return values


def _rsh_cartesian(l_max, x, y, z):
    # Y_lm = N_lm * Q_l^|m|(z) * {Re, Im}((x + iy)^|m|), with Q the associated
    # Legendre function divided by (1 - z^2)^(|m|/2); no Condon-Shortley phase.
    n = x.shape[0]
    cos_m = [np.ones(n)]
    sin_m = [np.zeros(n)]
    for m in range(1, l_max + 1):
        c, s = cos_m[-1], sin_m[-1]
        cos_m.append(c * x - s * y)
        sin_m.append(s * x + c * y)

    q = {}
    for m in range(l_max + 1):
        q[m, m] = np.full(n, float(_double_factorial(2 * m - 1)))
        if m + 1 <= l_max:
            q[m + 1, m] = (2 * m + 1) * z * q[m, m]
        for l in range(m + 2, l_max + 1):
            q[l, m] = ((2 * l - 1) * z * q[l - 1, m] - (l + m - 1) * q[l - 2, m]) / (l - m)

    out = []
    for l in range(l_max + 1):
        y_l = np.empty((n, 2 * l + 1))
        y_l[:, l] = math.sqrt((2 * l + 1) / (4 * math.pi)) * q[l, 0]
        for m in range(1, l + 1):
            norm = math.sqrt(2 * (2 * l + 1) / (4 * math.pi) / _factorial_ratio(l + m, l - m))
            y_l[:, l + m] = norm * q[l, m] * cos_m[m]
            y_l[:, l - m] = norm * q[l, m] * sin_m[m]
        out.append(y_l)
    return out


def _double_factorial(k):
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def _factorial_ratio(a, b):
    # a! / b! for a >= b
    return float(math.prod(range(b + 1, a + 1)))


# ---------------------------------------------------------------------------
# Clebsch-Gordan coefficients


def complex_cg(l1, m1, l2, m2, lam, mu):
    """Condon-Shortley Clebsch-Gordan coefficient <l1 m1; l2 m2 | lam mu>.

    Evaluated from the closed-form factorial expression in exact rational
    arithmetic; the only rounding happens in the final square root.
    """
    if mu != m1 + m2 or not abs(l1 - l2) <= lam <= l1 + l2:
        return 0.0
    if abs(m1) > l1 or abs(m2) > l2 or abs(mu) > lam:
        return 0.0
    f = math.factorial
    pref = Fraction(
        (2 * lam + 1) * f(lam + l1 - l2) * f(lam - l1 + l2) * f(l1 + l2 - lam),
        f(l1 + l2 + lam + 1),
    )
    pref *= f(lam + mu) * f(lam - mu) * f(l1 - m1) * f(l1 + m1) * f(l2 - m2) * f(l2 + m2)
    total = Fraction(0)
    k_min = max(0, l2 - lam - m1, l1 - lam + m2)
    k_max = min(l1 + l2 - lam, l1 - m1, l2 + m2)
    for k in range(k_min, k_max + 1):
        den = (
            f(k) * f(l1 + l2 - lam - k) * f(l1 - m1 - k) * f(l2 + m2 - k)
            * f(lam - l2 + m1 + k) * f(lam - l1 - m2 + k)
        )
        total += Fraction((-1) ** k, den)
    if total == 0:
        return 0.0
    return math.copysign(math.sqrt(float(total * total * pref)), total)


def complex_to_real_matrix(l):
    """Unitary U with Y_real = U @ Y_complex (complex harmonics carry the CS phase)."""
    u = np.zeros((2 * l + 1, 2 * l + 1), dtype=complex)
    s = 1 / math.sqrt(2)
    for m in range(-l, l + 1):
        if m > 0:
            u[l + m, l - m] = s
            u[l + m, l + m] = s * (-1) ** m
        elif m == 0:
            u[l, l] = 1.0
        else:
            u[l + m, l + m] = 1j * s
            u[l + m, l - m] = -1j * s * (-1) ** m
    return u


@lru_cache(maxsize=None)
def _complex_cg_block(l1, l2, lam):
    block = np.zeros((2 * l1 + 1, 2 * l2 + 1, 2 * lam + 1))
    for m1 in range(-l1, l1 + 1):
        for m2 in range(-l2, l2 + 1):
            mu = m1 + m2
            if abs(mu) <= lam:
                block[l1 + m1, l2 + m2, lam + mu] = complex_cg(l1, m1, l2, m2, lam, mu)
    return block


@lru_cache(maxsize=None)
def real_cg_block(l1, l2, lam):
    """Real-basis coupling block of shape (2l1+1, 2l2+1, 2lam+1).

    The complex block conjugated by the complex-to-real change of basis is
    either purely real or purely imaginary (when l1 + l2 + lam is odd); the
    imaginary case is rotated by -i, a global phase that keeps the block a
    valid intertwiner.
    """
    c = _complex_cg_block(l1, l2, lam)
    u1 = complex_to_real_matrix(l1)
    u2 = complex_to_real_matrix(l2)
    u3 = complex_to_real_matrix(lam)
    r = np.einsum("ia,jb,kc,abc->ijk", u1.conj(), u2.conj(), u3, c)
    if (l1 + l2 + lam) % 2:
        block = r.imag.copy()
    else:
        block = r.real.copy()
    block[np.abs(block) < 1e-15] = 0.0
    # coupling with a scalar is exactly the identity
    if l1 == 0:
        block[0] = np.eye(2 * l2 + 1)
    elif l2 == 0:
        block[:, 0] = np.eye(2 * l1 + 1)
    block.setflags(write=False)
    return block


class CGCache(Mapping):
    """Immutable map (l1, l2, lam) -> real coupling block.

    Entries exist for |l1 - l2| <= lam <= l1 + l2 with all three indices at
    most ``l_max_built``.  Blocks are computed on first access and memoized,
    so building a cache for a large ``l_max`` is cheap.
    """

    def __init__(self, l_max_built, _override=None):
        self.l_max_built = l_max_built
        self._override = dict(_override or {})

    def _valid(self, key):
        if not (isinstance(key, tuple) and len(key) == 3):
            return False
        l1, l2, lam = key
        lm = self.l_max_built
        return 0 <= l1 <= lm and 0 <= l2 <= lm and 0 <= lam <= lm and abs(l1 - l2) <= lam <= l1 + l2

    def __getitem__(self, key):
        if not self._valid(key):
            raise KeyError(key)
        if key in self._override:
            return self._override[key]
        return real_cg_block(*key)

    def __iter__(self):
        lm = self.l_max_built
        for l1 in range(lm + 1):
            for l2 in range(lm + 1):
                for lam in range(abs(l1 - l2), min(l1 + l2, lm) + 1):
                    yield (l1, l2, lam)

    def __len__(self):
        return sum(1 for _ in self)

    def __contains__(self, key):
        return self._valid(key)

    def block(self, l1, l2, lam):
        try:
            return self[l1, l2, lam]
        except KeyError:
            raise ContractError(
                f"CG block ({l1}, {l2}, {lam}) not available (l_max_built={self.l_max_built})"
            ) from None

    def with_override(self, key, block):
        """Copy of the cache with one block replaced (used as a negative control in audits)."""
        override = dict(self._override)
        override[key] = np.asarray(block, dtype=float)
        return CGCache(self.l_max_built, override)


def build_cg_cache(l_max):
    """Coupling coefficients for all (l1, l2, lam) up to ``l_max`` (0 <= l_max <= 16)."""
    if not isinstance(l_max, (int, np.integer)) or not 0 <= l_max <= L_MAX_CAP:
        raise ConfigurationError(f"l_max must be an integer in [0, {L_MAX_CAP}], got {l_max!r}")
    return CGCache(int(l_max))


# ---------------------------------------------------------------------------
# rotations


@dataclass(frozen=True)
class Rotation:
    """Orthogonal 3x3 matrix; ``improper`` marks det = -1 (rotation times inversion)."""

    matrix: np.ndarray
    improper: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise InputError("rotation matrix must be 3x3")
        if np.max(np.abs(m @ m.T - np.eye(3))) > 1e-12:
            raise InputError("rotation matrix is not orthogonal to 1e-12")
        det = np.linalg.det(m)
        expected = -1.0 if self.improper else 1.0
        if abs(det - expected) > 1e-10:
            raise InputError(f"determinant {det:.3f} inconsistent with improper={self.improper}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def random(cls, rng, improper=False):
        # QR of a Gaussian matrix gives a Haar-distributed orthogonal matrix
        q, r = np.linalg.qr(rng.standard_normal((3, 3)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        if improper:
            q = -q
        return cls(q, improper)

    @classmethod
    def inversion(cls):
        return cls(-np.eye(3), True)

    def __matmul__(self, other):
        return Rotation(self.matrix @ other.matrix, self.improper != other.improper)

    def apply(self, vectors):
        return np.asarray(vectors) @ self.matrix.T


@lru_cache(maxsize=None)
def _wigner_probe_directions(lam):
    rng = np.random.default_rng(12345 + lam)
    d = rng.standard_normal((4 * (2 * lam + 1) + 8, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def wigner_matrix(lam, rot):
    """Real Wigner matrix D such that Y_lam(R d) = D @ Y_lam(d).

    Obtained by solving the intertwining relation in the least-squares sense
    on a fixed set of probe directions.  For an improper rotation the
    geometric action on Y_lam picks up (-1)^lam.
    """
    if not isinstance(rot, Rotation):
        rot = Rotation(np.asarray(rot, dtype=float), bool(np.linalg.det(rot) < 0))
    proper = -rot.matrix if rot.improper else rot.matrix
    d = _wigner_probe_directions(lam)
    rd = d @ proper.T
    rd /= np.linalg.norm(rd, axis=1, keepdims=True)
    y = real_spherical_harmonics(lam, d)[lam]
    y_rot = real_spherical_harmonics(lam, rd)[lam]
    dt, *_ = np.linalg.lstsq(y, y_rot, rcond=None)
    out = dt.T
    if rot.improper and lam % 2:
        out = -out
    return out
