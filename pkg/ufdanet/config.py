import copy
import json
import os
from dotenv import load_dotenv
from jsonschema import Draft202012Validator

from ufdanet.utils.errors import InputError

load_dotenv()


class Config:
    """Configurações centralizadas do processo (variáveis de ambiente)"""

    # Saídas
    OUT_ROOT = os.getenv('UFDANET_OUT', 'runs')
    LOG_LEVEL = os.getenv('UFDANET_LOG_LEVEL', 'INFO')
    NUM_THREADS = int(os.getenv('UFDANET_NUM_THREADS', 0))

    # Modelo servido pela API
    CHECKPOINT = os.getenv('UFDANET_CHECKPOINT')
    THRESHOLD = float(os.getenv('UFDANET_THRESHOLD', 0.5))

    # Flask
    DEBUG = os.getenv('FLASK_ENV') == 'development'
    JSON_SORT_KEYS = False
    UPLOAD_DIR = os.getenv('UPLOAD_DIR', 'uploads')
    MAX_CONTENT_LENGTH = int(os.getenv('MAX_CONTENT_LENGTH', 8 * 1024 * 1024))

    # CORS
    CORS_ORIGINS = os.getenv(
        'CORS_ORIGINS',
        'http://localhost:3000,http://localhost:5173'
    ).split(',')


# ==================== CONFIGURAÇÃO DE EXECUÇÃO ====================

DEFAULT_RUN_CONFIG = {
    'seed': 0,
    'out_dir': None,
    'synth': {
        'n_train_live': 2000,
        'n_dev_live': 100,
        'n_dev_spoof': 100,
        'n_test_live': 500,
        'n_test_spoof': 500,
        'image_size': 96,
        'face_size_range': [44, 64],
        'domain_palette_count': 4,
        'liveness_band': [0.18, 0.35],
        'texture_amplitude': 0.12,
        'spoof_blur_sigma': 1.5,
        'resharpen_amount': 0.6,
    },
    'data': {
        'manifest': None,
        'patch_size': 64,
        'mask_ratio': 0.25,
        'num_workers': 0,
    },
    'model': {
        'feature_dim': 128,
        'latent_dim': 64,
        'noise_dim': 8,
        'hidden_dim': 128,
    },
    'train': {
        'epochs': 30,
        'warmup_epochs': 5,
        'batch_size': 32,
        'learning_rates': {
            'encoder': 1e-3,
            'live_extractor': 1e-3,
            'domain_extractor': 1e-3,
            'reconstructor': 1e-3,
            'adaptor': 1e-3,
            'condition_generator': 1e-3,
            'gin': 1e-3,
            'live_head': 1e-3,
            'domain_head': 1e-3,
        },
        'lambda1': 1e-3,
        'lambda2': 1e-1,
        'delta': 0.5,
        'bank_capacity': 512,
        'feature_mask_ratio': 0.25,
        'bank_insertion': 'per_batch',
        'rec_loss': 'l1',
        'dis_mode': 'signed',
        'liveaug_mode': 'adaptor',
        'use_mine': True,
        'domainaug_mode': 'gin',
        'use_domain_entropy': True,
        'gin_per_dimension': False,
        'domain_head_epochs': 20,
        'domain_head_holdout': 0.2,
    },
    'eval': {
        'checkpoint': None,
        'threshold_split': 'test',
        'batch_size': 128,
    },
}

_NUMBER = {'type': 'number'}
_POS_INT = {'type': 'integer', 'minimum': 1}
_NONNEG_INT = {'type': 'integer', 'minimum': 0}
_RATE = {'type': 'number', 'minimum': 0}
_RATIO = {'type': 'number', 'minimum': 0, 'maximum': 0.9}
_PATH = {'type': ['string', 'null']}


def _section(properties: dict) -> dict:
    return {'type': 'object', 'additionalProperties': False, 'properties': properties}


RUN_CONFIG_SCHEMA = {
    '$schema': 'https://json-schema.org/draft/2020-12/schema',
    'title': 'UFDANet run configuration',
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'seed': {'type': 'integer', 'minimum': 0, 'description': 'semente global'},
        'out_dir': _PATH,
        'synth': _section({
            'n_train_live': _POS_INT,
            'n_dev_live': _NONNEG_INT,
            'n_dev_spoof': _NONNEG_INT,
            'n_test_live': _POS_INT,
            'n_test_spoof': _NONNEG_INT,
            'image_size': {'type': 'integer', 'minimum': 16},
            'face_size_range': {'type': 'array', 'items': _POS_INT, 'minItems': 2, 'maxItems': 2},
            'domain_palette_count': _POS_INT,
            'liveness_band': {
                'type': 'array', 'minItems': 2, 'maxItems': 2,
                'items': {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 0.5},
            },
            'texture_amplitude': {'type': 'number', 'exclusiveMinimum': 0},
            'spoof_blur_sigma': {'type': 'number', 'exclusiveMinimum': 0},
            'resharpen_amount': {'type': 'number', 'minimum': 0},
        }),
        'data': _section({
            'manifest': _PATH,
            'patch_size': {'type': 'integer', 'minimum': 16},
            'mask_ratio': _RATIO,
            'num_workers': _NONNEG_INT,
        }),
        'model': _section({
            'feature_dim': _POS_INT,
            'latent_dim': {'type': 'integer', 'minimum': 2},
            'noise_dim': _POS_INT,
            'hidden_dim': _POS_INT,
        }),
        'train': _section({
            'epochs': _POS_INT,
            'warmup_epochs': _NONNEG_INT,
            'batch_size': {'type': 'integer', 'minimum': 2},
            'learning_rates': _section({
                name: _RATE for name in DEFAULT_RUN_CONFIG['train']['learning_rates']
            }),
            'lambda1': _RATE,
            'lambda2': _RATE,
            'delta': {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 1},
            'bank_capacity': _POS_INT,
            'feature_mask_ratio': _RATIO,
            'bank_insertion': {'enum': ['per_batch', 'per_sample']},
            'rec_loss': {'enum': ['l1', 'l2']},
            'dis_mode': {'enum': ['signed', 'absolute']},
            'liveaug_mode': {'enum': ['adaptor', 'noise']},
            'use_mine': {'type': 'boolean'},
            'domainaug_mode': {'enum': ['gin', 'adain', 'off']},
            'use_domain_entropy': {'type': 'boolean'},
            'gin_per_dimension': {'type': 'boolean'},
            'domain_head_epochs': _POS_INT,
            'domain_head_holdout': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
        }),
        'eval': _section({
            'checkpoint': _PATH,
            'threshold_split': {'enum': ['test', 'dev']},
            'batch_size': _POS_INT,
        }),
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate_run_config(config: dict) -> None:
    """Valida o documento contra o schema (chaves desconhecidas são rejeitadas)"""
    validator = Draft202012Validator(RUN_CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.path))
    if errors:
        details = '; '.join(
            f"{'.'.join(str(p) for p in e.path) or '<raiz>'}: {e.message}" for e in errors
        )
        raise InputError(f"Configuração inválida: {details}")


def parse_override(item: str):
    """Converte ``secao.chave=valor`` em (caminho, valor); o valor é lido como JSON"""
    if '=' not in item:
        raise InputError(f"Override inválido (use secao.chave=valor): {item}")
    key, raw = item.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split('.'), value


def build_run_config(path: str | None = None, overrides: dict | None = None,
                     dotted: list[str] | tuple[str, ...] = ()) -> dict:
    """
    Materializa a configuração de execução

    Ordem de precedência: padrões < arquivo < ``--set`` < flags explícitas.

    Args:
        path: Arquivo JSON (opcional)
        overrides: Dicionário aninhado vindo das flags
        dotted: Lista ``secao.chave=valor``

    Returns:
        dict: Configuração completa e validada

    Raises:
        InputError: Arquivo ausente, JSON inválido ou violação do schema
    """
    config = copy.deepcopy(DEFAULT_RUN_CONFIG)

    if path:
        if not os.path.exists(path):
            raise InputError(f"Arquivo de configuração não encontrado: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                from_file = json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"JSON inválido em {path}: {e}") from e
        if not isinstance(from_file, dict):
            raise InputError(f"O arquivo {path} deve conter um objeto JSON")
        config = _deep_merge(config, from_file)

    for item in dotted:
        keys, value = parse_override(item)
        node = config
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                raise InputError(f"Seção desconhecida no override: {item}")
            node = node[key]
        node[keys[-1]] = value

    if overrides:
        config = _deep_merge(config, overrides)

    validate_run_config(config)
    return config


def resolve_out_dir(config: dict, out: str | None = None) -> str:
    return out or config.get('out_dir') or Config.OUT_ROOT


def echo_run_config(config: dict, out_dir: str) -> str:
    """Grava a configuração materializada em ``<out>/config.json``"""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, 'config.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config, f, indent=2, sort_keys=True)
        f.write('\n')
    return path
