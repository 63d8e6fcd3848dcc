import numpy as np
import pytest

from invlqg.experiments import benchmark_costs, benchmark_game, benchmark_noise
from invlqg.riccati import solve_coupled_riccati
from invlqg.simulate import SimulationConfig, simulate_bundle


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for a criterion, print it, then assert."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def game():
    return benchmark_game()


@pytest.fixture(scope="session")
def costs():
    return benchmark_costs()


@pytest.fixture(scope="session")
def noise(game):
    return benchmark_noise(game.dt)


@pytest.fixture(scope="session")
def truth(game, costs):
    return solve_coupled_riccati(game, costs)


@pytest.fixture(scope="session")
def gt_bundle(game, truth, noise):
    return simulate_bundle(game, truth, noise, SimulationConfig(D=20, seed=42))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
