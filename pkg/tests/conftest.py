import copy
import os

import numpy as np
import pytest
import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from ufdanet.config import build_run_config
from ufdanet.models.state import ModelState
from ufdanet.services.datakit import PatchCache, batch_iter
from ufdanet.services.synthetic import SynthConfig, generate_synthetic
from ufdanet.services.trainer import TrainConfig

SMOKE_CONFIG = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'configs', 'smoke.json')


def pytest_collection_modifyitems(config, items):
    if os.getenv('UFDANET_RUN_SLOW') == '1':
        return
    skip_slow = pytest.mark.skip(reason='defina UFDANET_RUN_SLOW=1 para rodar')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_config():
    """Configuração mínima: F=16, L=8, patches 16x16, 40 amostras"""
    return build_run_config(SMOKE_CONFIG)


@pytest.fixture
def synthetic_manifest(tmp_path, tiny_config):
    manifest_path, _ = generate_synthetic(SynthConfig.from_run_config(tiny_config), str(tmp_path / 'synth'))
    return manifest_path


@pytest.fixture
def trainable_config(tiny_config, synthetic_manifest):
    config = copy.deepcopy(tiny_config)
    config['data']['manifest'] = synthetic_manifest
    return config


@pytest.fixture
def tiny_state(tiny_config):
    return ModelState.build(tiny_config)


@pytest.fixture
def toy_cache():
    """Cache de patches aleatórios (sem arquivos): 8 amostras 16x16"""
    rng = np.random.default_rng(0)
    fg = rng.integers(0, 256, size=(8, 16, 16, 3), dtype=np.uint8)
    bg = rng.integers(0, 256, size=(8, 16, 16, 3), dtype=np.uint8)
    return PatchCache([f"toy_{i}" for i in range(8)], fg, bg)


@pytest.fixture
def toy_batches(toy_cache):
    """Dois lotes de 4"""
    return list(batch_iter(toy_cache, batch_size=4, mask_ratio=0.25, seed=0, epoch=0))


@pytest.fixture
def train_config(tiny_config):
    return TrainConfig.from_run_config(tiny_config)


def unit_rows(n: int, dim: int, seed: int = 0, dtype=torch.float64) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.nn.functional.normalize(torch.randn(n, dim, generator=generator, dtype=dtype), dim=-1)


def check_finite_differences(loss_fn, params, step: float = 1e-3, n_directions: int = 5,
                             seed: int = 0, rtol: float = 1e-3) -> None:
    """
    Derivadas direcionais por diferenças centrais contra o autograd

    ``loss_fn`` deve ser determinística (ressemear RNGs a cada chamada). As
    direções são o gradiente mais ruído, com a perturbação efetivamente
    aplicada (após arredondamento) usada no lado analítico.
    """
    params = list(params)
    grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    flat_grad = torch.cat([
        (torch.zeros_like(p) if g is None else g).reshape(-1) for p, g in zip(params, grads)
    ]).double()
    assert flat_grad.norm() > 0, "gradiente nulo"

    origin = parameters_to_vector(params).detach().clone()
    generator = torch.Generator().manual_seed(seed)
    try:
        for _ in range(n_directions):
            noise = torch.randn(flat_grad.shape, generator=generator, dtype=torch.float64)
            direction = flat_grad / flat_grad.norm() + 0.5 * noise / noise.norm()
            direction = (direction / direction.norm()).to(origin.dtype)

            points, values = [], []
            for sign in (1.0, -1.0):
                point = origin + sign * step * direction
                with torch.no_grad():
                    vector_to_parameters(point, params)
                    values.append(float(loss_fn()))
                points.append(point)

            finite = (values[0] - values[1]) / (2 * step)
            analytic = float(flat_grad @ (points[0] - points[1]).double()) / (2 * step)
            # arredondamento de float32 na diferença das perdas
            rounding = 4 * torch.finfo(origin.dtype).eps * max(abs(values[0]), 1.0) / step
            assert abs(finite - analytic) <= rtol * abs(analytic) + rounding, (finite, analytic)
    finally:
        with torch.no_grad():
            vector_to_parameters(origin, params)
