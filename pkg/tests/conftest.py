import numpy as np
import pytest

from flexgrid.grid import Branch, Bus, GridModel
from flexgrid.scenario import reference_scenario


def two_bus(p=-0.5, q=-0.2, x=0.1, r=0.02, i_max=2.0) -> GridModel:
    y = 1.0 / complex(r, x)
    return GridModel(
        [Bus(0, "slack", v0=1.0), Bus(1, "fixed", p0=p, q0=q, vmin=0.9, vmax=1.1)],
        [Branch(0, 0, 1, abs(y), float(np.angle(y)), i_max)],
    )


@pytest.fixture(scope="session")
def ref():
    return reference_scenario()
