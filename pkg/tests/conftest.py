import numpy as np
import pytest

from biflux.model import (
    ModelSpec,
    two_lane_tasep,
    two_species_exclusion,
)


@pytest.fixture(scope="session")
def tasep():
    return two_lane_tasep()


@pytest.fixture(scope="session")
def coupled():
    return two_species_exclusion()


@pytest.fixture(scope="session")
def zero_rate_spec():
    """Three states, valid measure, no dynamics (fluxes are constants)."""
    return ModelSpec(
        name="frozen",
        states=("0", "A", "B"),
        zeta={"0": 0, "A": 1, "B": 0},
        eta={"0": 0, "A": 0, "B": 1},
        base_measure={"0": 0.5, "A": 0.25, "B": 0.25},
        rates={},
    )


@pytest.fixture()
def cos_profile():
    return lambda x: 0.25 * np.cos(2.0 * np.pi * np.asarray(x, dtype=float))


@pytest.fixture()
def sin_profile():
    return lambda x: 0.25 * np.sin(2.0 * np.pi * np.asarray(x, dtype=float))
