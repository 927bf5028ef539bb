import numpy as np
import pytest

# Three-variable pair worked out by hand: the first precision matrix is
# an equicorrelation-style matrix, the second decouples node 2.  All
# entries below are exact in binary floating point or exact inverses of
# each other, so tests can pin them at tight tolerances.

OMEGA_1 = np.array(
    [
        [1.0, 0.5, 0.5],
        [0.5, 1.0, 0.5],
        [0.5, 0.5, 1.0],
    ]
)

SIGMA_1 = np.array(
    [
        [1.5, -0.5, -0.5],
        [-0.5, 1.5, -0.5],
        [-0.5, -0.5, 1.5],
    ]
)

SIGMA_2 = np.array(
    [
        [1.5, -0.5, 0.0],
        [-0.5, 1.5, 0.0],
        [0.0, 0.0, 1.0],
    ]
)

OMEGA_2 = np.array(
    [
        [0.75, 0.25, 0.0],
        [0.25, 0.75, 0.0],
        [0.0, 0.0, 1.0],
    ]
)


@pytest.fixture
def toy():
    return {
        "omega1": OMEGA_1.copy(),
        "sigma1": SIGMA_1.copy(),
        "omega2": OMEGA_2.copy(),
        "sigma2": SIGMA_2.copy(),
    }
