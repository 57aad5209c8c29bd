import numpy as np
import pytest

from collardyn import algebra as al
from collardyn import dynamics as dy
from collardyn import fields as fl
from collardyn.mesh import CollarMesh


@pytest.fixture(scope="session")
def su2():
    return al.build_algebra("su2")


@pytest.fixture(scope="session")
def so12():
    return al.build_algebra("so", d=2)


@pytest.fixture(scope="session")
def so11():
    return al.build_algebra("so", d=1)


@pytest.fixture(scope="session")
def so13():
    return al.build_algebra("so", d=3)


@pytest.fixture(scope="session")
def abelian1():
    return al.build_algebra("abelian", n=1)


@pytest.fixture
def mesh1d():
    return CollarMesh(d=1, sites_per_dim=8, h=0.5, n_t=8, dt=0.1)


@pytest.fixture
def mesh2d():
    return CollarMesh(d=2, sites_per_dim=(4, 4), h=(0.4, 0.5), n_t=4, dt=0.05)


def flat_vacuum(mesh, spec):
    """Exact zero of the six boundary constraints."""
    state = fl.BoundaryState.zero(mesh, spec)
    pm_p, pm_beta = dy.palatini_boundary_blocks(state)
    state.p = pm_p.copy()
    state.beta = fl.skew_project(pm_beta, 1, 2)
    return state


def random_tangent(rng, shape):
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v)
