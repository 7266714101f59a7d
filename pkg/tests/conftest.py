from __future__ import annotations

import numpy as np
import pytest

from fraclab.kernels import KernelSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def window_value(rng: np.random.Generator, lam: float) -> complex:
    """Uniform draw from ``lam <= Re a``, ``|a| <= 1/lam``."""
    re = rng.uniform(lam, 1 / lam)
    im_max = np.sqrt(max(lam**-2 - re**2, 0.0))
    return complex(re, rng.uniform(-im_max, im_max) * (1 - 1e-12))


def random_kernel(rng: np.random.Generator, order: float, lam: float, cell_size: int = 2) -> KernelSpec:
    """A rough windowed kernel: complex checkerboard or cell-random."""
    if rng.random() < 0.5:
        a, b = window_value(rng, lam), window_value(rng, lam)
        return KernelSpec.checkerboard(order, cell_size, a, b, lam=lam)
    return KernelSpec.cell_random(order, cell_size, int(rng.integers(0, 2**63)), lam)
