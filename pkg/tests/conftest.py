import numpy as np
import pytest

from chaos_adjoint.adjoint_surface import lorenz_adjoint
from chaos_adjoint.attractor_mesh import build_mesh, fit_attractor_section
from chaos_adjoint.dynsys import LORENZ


@pytest.fixture(scope="session")
def lorenz_fit():
    return fit_attractor_section(LORENZ, T_total=10000.0, seed=0)


@pytest.fixture(scope="session")
def mesh512(lorenz_fit):
    return build_mesh(LORENZ, 512, 128, "clustered", seed=0, fit=lorenz_fit)


@pytest.fixture(scope="session")
def adj512(mesh512):
    return lorenz_adjoint(mesh512)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one acceptance line: acceptance(number, title, passed, detail)."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, title, passed, detail=""):
        lines.append((number, f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
