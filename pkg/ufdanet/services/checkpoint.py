"""Checkpoints do ModelState: parâmetros, otimizadores, banco e RNG."""
import io
import json
import logging
import os

import torch

from ufdanet.models.state import PARAMETER_GROUPS, ModelState, build_groups
from ufdanet.services.liveaug import MemoryBank
from ufdanet.utils.errors import CheckpointError, DimensionError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DIM_KEYS = ('feature_dim', 'latent_dim', 'noise_dim', 'hidden_dim', 'patch_size', 'gin_per_dimension')


def checkpoint_name(epoch: int) -> str:
    return f"ckpt_epoch{epoch}.pt"


def save_checkpoint(state: ModelState, path: str) -> str:
    """
    Grava o estado completo do treino

    O arquivo é serializado em memória e movido no lugar, então o conteúdo
    não depende do caminho de destino.
    """
    payload = {
        'manifest': {
            'format_version': CHECKPOINT_VERSION,
            'dims': dict(state.dims),
            'epoch': state.epoch,
            'seed': state.seed,
            'global_step': state.global_step,
            'warmup_done': state.warmup_done,
            'domain_head_frozen': state.domain_head_frozen,
            'learning_rates': dict(state.learning_rates),
        },
        'groups': {name: state.groups[name].state_dict() for name in PARAMETER_GROUPS},
        'optimizers': {name: state.optimizers[name].state_dict() for name in PARAMETER_GROUPS},
        'bank': state.bank.state_dict(),
        'generator_state': state.generator.get_state(),
        # gravado como texto JSON
        'run_config': json.dumps(state.run_config, sort_keys=True) if state.run_config is not None else None,
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'wb') as f:
        f.write(buffer.getvalue())
    os.replace(tmp_path, path)
    logger.info("💾 Checkpoint gravado: %s (época %d)", path, state.epoch)
    return path


def load_checkpoint(path: str, expected_dims: dict | None = None) -> ModelState:
    """
    Restaura um ModelState

    Args:
        path: Arquivo ``.pt``
        expected_dims: Dimensões exigidas pelo chamador (opcional)

    Raises:
        CheckpointError: Arquivo ausente, corrompido ou de outra versão
        DimensionError: Dimensões diferentes das esperadas
    """
    if not os.path.exists(path):
        raise CheckpointError(f"Checkpoint não encontrado: {path}")
    try:
        with open(path, 'rb') as f:
            payload = torch.load(io.BytesIO(f.read()), weights_only=True)
        manifest = payload['manifest']
    except Exception as e:
        raise CheckpointError(f"Checkpoint corrompido ou ilegível: {path} ({e})") from e

    version = manifest.get('format_version')
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Versão de checkpoint {version} não suportada (esperada {CHECKPOINT_VERSION})"
        )

    dims = manifest['dims']
    if expected_dims:
        mismatched = {
            key: (dims.get(key), value) for key, value in expected_dims.items()
            if key in DIM_KEYS and dims.get(key) != value
        }
        if mismatched:
            details = ', '.join(f"{k}: arquivo={a}, esperado={b}" for k, (a, b) in mismatched.items())
            raise DimensionError(f"Dimensões do checkpoint incompatíveis: {details}")

    bank = MemoryBank()
    bank.load_state_dict(payload['bank'])
    state = ModelState(build_groups(dims), manifest['learning_rates'], dims, bank, seed=manifest['seed'])
    try:
        for name in PARAMETER_GROUPS:
            state.groups[name].load_state_dict(payload['groups'][name])
            state.optimizers[name].load_state_dict(payload['optimizers'][name])
    except RuntimeError as e:
        raise DimensionError(f"Parâmetros do checkpoint incompatíveis com as dimensões: {e}") from e
    except KeyError as e:
        raise CheckpointError(f"Checkpoint incompleto, falta o grupo {e}") from e

    state.epoch = manifest['epoch']
    state.global_step = manifest['global_step']
    state.warmup_done = manifest['warmup_done']
    run_config = payload.get('run_config')
    state.run_config = json.loads(run_config) if run_config is not None else None
    state.generator.set_state(payload['generator_state'])
    if manifest['domain_head_frozen']:
        state.freeze_domain_head()
    logger.info("📦 Checkpoint carregado: %s (época %d)", path, state.epoch)
    return state
