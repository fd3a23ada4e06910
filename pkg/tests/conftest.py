import warnings

import pytest

from bewley_lottery.model import AssetGrid, ModelConfig, Numerics, default_lottery

warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

DESK_ASSETS, DESK_FIRM = 200, 300

_CRITERIA = {}


def desk_config(**kw):
    return ModelConfig(assets=AssetGrid(n=DESK_ASSETS),
                       numerics=Numerics(n_k=DESK_FIRM, n_n=DESK_FIRM), **kw)


@pytest.fixture(scope="session")
def benchmark_eq():
    from bewley_lottery.equilibrium import solve_benchmark

    return solve_benchmark(desk_config())


@pytest.fixture(scope="session")
def lottery_eq():
    from bewley_lottery.equilibrium import solve_lottery

    return solve_lottery(desk_config(name="lottery").with_lottery(default_lottery()))


@pytest.fixture(scope="session")
def lottery_panels(lottery_eq):
    """Full-size panels (N = 400000, T = 200) for five seeds."""
    from bewley_lottery.simulate import SimConfig, run_simulation

    return {seed: run_simulation(SimConfig(seed=seed), lottery_eq) for seed in range(5)}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
