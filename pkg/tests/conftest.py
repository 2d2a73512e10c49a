import pytest

from proxtv import ProblemParams, ROFProblem, disc_indicator, ssn_solve
from proxtv.mesh import uniform_mesh


def make_problem(level, beta=1.0, gamma=1.0, alpha=10.0):
    mesh = uniform_mesh(level)
    h = float(mesh.diameters.max())
    return ROFProblem(mesh, ProblemParams(alpha, h**beta, gamma, disc_indicator(0.5)))


@pytest.fixture(scope="session")
def problem3():
    return make_problem(3)


@pytest.fixture(scope="session")
def root3(problem3):
    """A residual-1e-13 root of the optimality system on the level-3 mesh."""
    state, hist = ssn_solve(problem3, problem3.zero_state(), stop=1e-13, line_search="armijo")
    assert hist.converged
    return state


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def record_criterion(request):
    """Store ``(passed, detail)`` for one acceptance criterion; printed in the terminal summary."""
    results = request.config.stash[_CRITERIA]

    def record(number, passed, detail):
        results[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
