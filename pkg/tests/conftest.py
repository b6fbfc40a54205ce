import numpy as np
import pytest

from wavefocus.boundary_ops import BoundaryTimeMask
from wavefocus.domain import MediumSpec, build_grid, diameter
from wavefocus.signals import random_smooth_signal, smooth_bump
from wavefocus.wave_sim import WaveSolver, build_oracle, make_lattice


def variable_speed(x):
    return 1.0 + 0.2 * np.sin(2 * np.pi * x)


class Rod:
    """Small 1D setup shared by the unit tests."""

    def __init__(self, nodes=101, speed=1.0, horizon_diam=2.5, mode="cached"):
        self.grid = build_grid(MediumSpec((1.0,), (nodes,), speed=speed))
        self.diameter = diameter(self.grid)
        self.lattice = make_lattice(self.grid, horizon_diam * self.diameter)
        self.solver = WaveSolver(self.grid, self.lattice)
        self.oracle = build_oracle(self.grid, self.lattice, mode)
        T = self.lattice.horizon
        self.source = self.lattice.from_time_profile(smooth_bump(self.lattice.times, 0.0, T))
        left = np.array([True, False])
        self.mask = BoundaryTimeMask.from_rectangles(self.lattice, [(left, 0.4 * self.diameter)])

    def random_signal(self, seed):
        return random_smooth_signal(self.lattice, np.random.default_rng(seed))


@pytest.fixture(scope="session")
def rod():
    return Rod()


@pytest.fixture(scope="session")
def rod_variable():
    return Rod(speed=variable_speed)


# Acceptance reporting: one PASS/FAIL line per criterion in the terminal summary.

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}")
