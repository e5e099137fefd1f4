import numpy as np
import pytest

from kinedecay.spectral_generator import ModelSpec, assemble_generator, make_admissible
from kinedecay.velocity_basis import build_basis, build_collision

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def basis6():
    return build_basis(6)


@pytest.fixture(scope="session")
def const6(basis6):
    return build_collision(basis6, "const")


@pytest.fixture(scope="session")
def make_gen(basis6, const6):
    def make(model, k, collision=None):
        spec = ModelSpec(model, collision or const6)
        return assemble_generator(np.asarray(k, dtype=float), spec, basis6)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(gen, rng, admissible=True):
    x = rng.standard_normal(gen.size) + 1j * rng.standard_normal(gen.size)
    if admissible and gen.constraint_rows.shape[0]:
        x = make_admissible(gen.state(x), gen.basis).to_vector()
    return x


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
