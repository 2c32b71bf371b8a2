import math

import numpy as np
import pytest

from trishadow.linsys import LinearCocycle, TrichotomyData
from trishadow.shadow import Perturbation

LN2 = math.log(2.0)


def diag_system(n_min=-40, n_max=40):
    cocycle = LinearCocycle.constant(np.diag([0.5, 2.0]), n_min, n_max)
    tri = TrichotomyData.dichotomy(np.diag([1.0, 0.0]), n_min, n_max, 1.0, LN2)
    return cocycle, tri


def tent_system(n_min=-40, n_max=40):
    cocycle = LinearCocycle.from_function(lambda n: [[0.5 if n >= 0 else 2.0]], n_min, n_max)
    tri = TrichotomyData.constant([[[0.0]], [[0.0]], [[1.0]]], n_min, n_max, 1.0, LN2, origin=0)
    return cocycle, tri


def sine_pert(c):
    """f_n(x) = c (sin x2, sin x1)."""
    return Perturbation(lambda n, x: c * np.sin(x[::-1]), c,
                        lambda ns, X: c * np.sin(X[:, ::-1]), "sine")


@pytest.fixture
def diag():
    return diag_system()


@pytest.fixture
def tent():
    return tent_system()


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record ``(ok, detail)`` for an acceptance criterion; printed in the summary."""
    def record(number, ok, detail=""):
        _ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
