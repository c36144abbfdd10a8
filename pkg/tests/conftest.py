import numpy as np
import pytest

from mpacdc import FeatureSpec, RadialBasisSpec, Structure


def random_cluster(rng, n_atoms=6, symbols=("C", "H"), radius=1.6, min_distance=0.7):
    """Atoms uniform in a cube of half-width ``radius`` with a minimum separation."""
    while True:
        pos = rng.uniform(-radius, radius, (n_atoms, 3))
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1) + 10 * np.eye(n_atoms)
        if d.min() > min_distance:
            break
    syms = [symbols[k % len(symbols)] for k in range(n_atoms)]
    return Structure(pos, syms)


def small_spec(feature_string="nu=2", **kw):
    basis = kw.pop("basis", RadialBasisSpec(n_max=2, r_cut=4.0))
    kw.setdefault("l_max", 1)
    kw.setdefault("species", ("C", "H"))
    return FeatureSpec(basis=basis, feature_string=feature_string, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    """Print and remember one acceptance verdict line."""
    line = f"acceptance {criterion}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
