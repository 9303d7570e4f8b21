import numpy as np
import pytest

from qstlab import datagen
from qstlab.povm import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture(scope="session")
def small_pure():
    """60 two-qubit pure states, cube measurements, 1000 copies per detector."""
    return datagen.build_dataset(datagen.DatasetConfig(n_samples=60, copies=1000, seed=7))


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def ket(*amps):
    v = np.array(amps, dtype=complex)
    return v / np.linalg.norm(v)


ACCEPTANCE = {}


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance verdict; it is echoed now and in the terminal summary."""

    def record(number, passed, detail):
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
