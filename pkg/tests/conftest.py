"""
Fixtures compartidas de la suite RobustBeam
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from channel import ArrayGeometry, Scenario, UncertaintyModel, nominal_channel  # noqa: E402
from gradcore import finite_difference, relative_error  # noqa: E402
from nets import NetworkConfig  # noqa: E402
from secrecy import ParadigmConfig  # noqa: E402
from trainer import TrainingConfig  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='corre los experimentos largos')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: experimento largo (requiere --runslow)')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='requiere --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


def fd_check(loss_fn, analytic, array, n_coords=12, seed=0, h=1e-5):
    """Compara el gradiente analítico con diferencias centrales en coordenadas al azar"""
    rng = np.random.default_rng(seed)
    flat = array.reshape(-1)
    picks = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
    numeric = finite_difference(loss_fn, array, picks, h)
    got = np.array([analytic.reshape(-1)[i] for i in picks])
    want = np.array([numeric[int(i)] for i in picks])
    return relative_error(got, want, floor=1e-6)


@pytest.fixture
def fd():
    return fd_check


@pytest.fixture
def scenario():
    return Scenario()


@pytest.fixture
def uncertainty():
    return UncertaintyModel()


@pytest.fixture
def nominal(scenario):
    return nominal_channel(scenario, 42)


@pytest.fixture
def small_scenario():
    """BS 2x2 y receptores de 2 antenas: acción de 16 reales, estado de 35"""
    return Scenario(bs_array=ArrayGeometry.upa(2, 2), uav_array=ArrayGeometry.ula(2),
                    eve_array=ArrayGeometry.ula(2))


@pytest.fixture
def tiny_network():
    return NetworkConfig.tiny(width=8, state_dim=35, action_dim=16)


@pytest.fixture
def tiny_training(small_scenario, tiny_network):
    """Configuración de entrenamiento mínima para pruebas rápidas"""
    def build(**overrides):
        params = dict(epochs=3, learning_rate=1e-3, batch_size=4, replay_capacity=16,
                      paradigm=ParadigmConfig(mc_samples_train=4, mc_samples_eval=8),
                      actor_variant='mlp_diffusion', master_seed=7, scenario=small_scenario,
                      network=tiny_network, eval_every=2, eval_episodes=2)
        params.update(overrides)
        return TrainingConfig(**params)
    return build
