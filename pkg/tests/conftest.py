import sys

import numpy as np
import pytest

from ssmflow.models import ChannelModel, ModelParams, laminar_state
from ssmflow.spectral import ModeGrid, conjugate_full


def random_full(grid, rng, scale=1.0, real=True):
    """Random full-range vector; conjugate-symmetric (a real field) when ``real``."""
    v = scale * (rng.standard_normal(grid.full_size) + 1j * rng.standard_normal(grid.full_size))
    v[-2:] = 0.0
    if real:
        v = 0.5 * (v + conjugate_full(grid, v))
    return v


@pytest.fixture(scope="session")
def newtonian_small():
    grid = ModeGrid(1.02056, 3, 16)
    model = ChannelModel(grid, ModelParams(re=3600.0))
    return model, laminar_state(grid, model.params)


@pytest.fixture(scope="session")
def newtonian_resolved():
    grid = ModeGrid(1.02056, 2, 40)
    model = ChannelModel(grid, ModelParams(re=3600.0))
    return model, laminar_state(grid, model.params)


@pytest.fixture(scope="session")
def oldroyd_small():
    grid = ModeGrid(2.3, 2, 16, 6)
    model = ChannelModel(grid, ModelParams(re=0.5, wi=13.6, beta_visc=0.9, eps=1e-2))
    return model, laminar_state(grid, model.params)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not any(mod.RESULTS.values()):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
