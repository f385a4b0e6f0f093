import math

import pytest

from conetorsion.geometry import ConeSpec, PolarGraph, cosine_profile
from conetorsion.mesh import generate_mesh
from conetorsion.torsion import solve_torsion


@pytest.fixture(scope="session")
def quarter():
    return ConeSpec("planar", math.pi / 2)


@pytest.fixture(scope="session")
def cone3():
    return ConeSpec("axisym", math.pi / 4)


@pytest.fixture(scope="session")
def quarter_sector(quarter):
    return PolarGraph.constant(quarter, 1.0)


@pytest.fixture(scope="session")
def sector_solution(quarter_sector):
    return solve_torsion(generate_mesh(quarter_sector, 0.02))


@pytest.fixture(scope="session")
def axisym_solution(cone3):
    return solve_torsion(generate_mesh(PolarGraph.constant(cone3, 1.0), 0.02))


@pytest.fixture(scope="session")
def bumpy(quarter):
    return cosine_profile(quarter, 1.0, 0.1, 4)


@pytest.fixture(scope="session")
def bumpy_solution(bumpy):
    return solve_torsion(generate_mesh(bumpy, 0.02))
