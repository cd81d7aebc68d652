from __future__ import annotations

import pytest

from fountain_dcp.cavity import CavityGeometry, ParametricGParams, parametric_g_model


@pytest.fixture(scope="session")
def geometry():
    return CavityGeometry()


@pytest.fixture(scope="session")
def default_map(geometry):
    return parametric_g_model(geometry, ParametricGParams())
