import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import mjlsgrid as mj


@pytest.fixture(scope="session")
def solar_model():
    model, _ = mj.load_config("solar")
    return model


@pytest.fixture(scope="session")
def game2d_model():
    model, _ = mj.load_config("game2d")
    return model


@pytest.fixture(scope="session")
def game_solution(game2d_model):
    return mj.solve_game(mj.GameProblem(system=game2d_model, gamma=0.5))


@pytest.fixture(scope="session")
def hinf_solution(game2d_model):
    return mj.solve_hinf(mj.GameProblem(system=game2d_model, gamma=0.5))


@pytest.fixture()
def single_cell():
    grid = mj.build_grid([("m", (0.0, 1.0), 1)])
    kernel = mj.build_markov_kernel_from_blocks(grid, [[1.0]])
    return grid, kernel


@pytest.fixture()
def two_cell():
    grid = mj.build_grid([("1", (0.0, 1.0), 1), ("2", (0.0, 1.0), 1)])
    kernel = mj.build_markov_kernel_from_blocks(grid, [[0.6, 0.4], [0.3, 0.7]])
    return grid, kernel


def atomic_grid_and_kernel(probs: np.ndarray):
    """Atomic grid (unit weights) whose densities equal the transition probabilities."""
    probs = np.asarray(probs, dtype=float)
    M = probs.shape[0]
    grid = mj.build_grid([(str(i + 1), (0.0, 1.0), 1) for i in range(M)])
    kernel = mj.build_markov_kernel_from_blocks(grid, probs)
    return grid, kernel


def neg_t_gain(grid):
    """The scalar gain field k(component, t) = -t."""
    return mj.MatrixField.from_function(grid, lambda lbl, t: [[-t]])
