import numpy as np
import pytest

from dyadicshell import ShellState


def decaying_state(n_shells: int, amp: float = 1.0, ratio: float = 0.5) -> ShellState:
    """Geometric profile amp * ratio^j on shells 0..n_shells."""
    return ShellState(amp * ratio ** np.arange(n_shells + 1, dtype=float))


def random_hplus(n_shells: int, seed: int, amp: float = 1.0) -> ShellState:
    """Random decaying positive-cone state: amp * 2^-j * xi_j, xi in [0.5, 1.5)."""
    rng = np.random.default_rng(seed)
    xi = rng.uniform(0.5, 1.5, n_shells + 1)
    return ShellState(amp * 2.0 ** (-np.arange(n_shells + 1, dtype=float)) * xi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
