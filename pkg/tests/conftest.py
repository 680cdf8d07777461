import numpy as np
import pytest

from weighted_rb import construction as cons
from weighted_rb.mesh import build_benchmark_mesh
from weighted_rb.solvers import build_affine_model
from weighted_rb.stochastics import DensityModel, kl_eigenpairs


@pytest.fixture(scope="session")
def tiny_mesh():
    # 52 nodes, 5 OUT nodes
    return build_benchmark_mesh(1.0)


@pytest.fixture(scope="session")
def tiny_density():
    return DensityModel(n_kl=4)


@pytest.fixture(scope="session")
def tiny_model(tiny_mesh):
    kl = kl_eigenpairs(tiny_mesh, a=2.0, Q=4)
    return build_affine_model(tiny_mesh, kl, dt=0.5, K=12)


@pytest.fixture(scope="session")
def coarse_mesh():
    return build_benchmark_mesh(1.0 / 3.0)


@pytest.fixture(scope="session")
def coarse_kl(coarse_mesh):
    return kl_eigenpairs(coarse_mesh, a=2.0, Q=10)


@pytest.fixture(scope="session")
def coarse_model(coarse_mesh, coarse_kl):
    return build_affine_model(coarse_mesh, coarse_kl, dt=0.4, K=50)


@pytest.fixture(scope="session")
def density():
    return DensityModel()


@pytest.fixture(scope="session")
def train(density):
    return density.sample_uniform(np.random.default_rng(11), 60)


@pytest.fixture(scope="session")
def output_greedy(coarse_model, train, density):
    cfg = cons.GreedyConfig(train, mode="output", weighting="uniform", n_max=10)
    return cons.pod_greedy(coarse_model, cfg, density)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
