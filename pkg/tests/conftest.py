import math

import numpy as np
import pytest

from bykov.params import SaddleParams


@pytest.fixture(scope="session")
def case1_params() -> SaddleParams:
    """No-reversal fixture: crossing level below the turning-function minimum.

    gamma = 6.25 > 1, delta = 2.5 > 1, delta_w = 2 (the stretch factor drops
    out of the return-map determinant, making its decay strictly monotone).
    """
    return SaddleParams(alpha_v=0.2, C_v=1.0, E_v=0.8, alpha_w=2.5, C_w=4.0, E_w=2.0, a=2.0, eps=0.5)


@pytest.fixture(scope="session")
def dense_params() -> SaddleParams:
    """Dense-reversal fixture: level strictly inside the extrema, gamma = sqrt(2)."""
    return SaddleParams(
        alpha_v=2.0,
        C_v=1.2,
        E_v=1.0,
        alpha_w=(10.0 / 3.0) * math.sqrt(2.0),
        C_w=2.6,
        E_w=2.0,
        a=2.0,
        eps=0.5,
    )


@pytest.fixture(scope="session")
def rational_params() -> SaddleParams:
    """Interior fixture with gamma = 3/2 exactly (periodic reversal angles)."""
    return SaddleParams(
        alpha_v=2.0, C_v=1.2, E_v=1.0, alpha_w=5.0, C_w=2.6, E_w=2.0, a=2.0, eps=0.5
    )


@pytest.fixture(scope="session")
def unit_params() -> SaddleParams:
    """Fully degenerate reference point: all rates 1, no shear, unit section."""
    return SaddleParams(alpha_v=1, C_v=1, E_v=1, alpha_w=1, C_w=1, E_w=1, a=1.0, eps=1.0)


def random_admissible(rng: np.random.Generator, a_min: float = 1.0) -> SaddleParams:
    rates = np.exp(rng.uniform(-1.1, 1.1, size=6))
    return SaddleParams(
        alpha_v=float(rates[0]),
        C_v=float(rates[1]),
        E_v=float(rates[2]),
        alpha_w=float(rates[3]),
        C_w=float(rates[4]),
        E_w=float(rates[5]),
        a=float(rng.uniform(a_min, 3.0)),
        eps=float(rng.uniform(0.2, 0.9)),
    )
