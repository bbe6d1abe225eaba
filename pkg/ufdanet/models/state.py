"""ModelState: grupos de parâmetros, otimizadores, banco de memória e RNG."""
import copy
import logging

import torch
import torch.nn as nn

from ufdanet.models.augmenters import ConditionGenerator, FeatureAdaptor, GinEncoder
from ufdanet.models.nets import BinaryHead, FeatureExtractor, GeneralEncoder, Reconstructor
from ufdanet.services.liveaug import MemoryBank
from ufdanet.utils.errors import InputError, SequencingError

logger = logging.getLogger(__name__)

# Ordem canônica dos grupos (E, E_l, E_d, D, phi, G, E_GIN, C_l, C_d)
PARAMETER_GROUPS = (
    'encoder',
    'live_extractor',
    'domain_extractor',
    'reconstructor',
    'adaptor',
    'condition_generator',
    'gin',
    'live_head',
    'domain_head',
)


class ModelState:
    """Estado completo do treino; escrito por um único loop de treinamento"""

    def __init__(self, groups: nn.ModuleDict, learning_rates: dict[str, float], dims: dict,
                 bank: MemoryBank, seed: int = 0):
        self.groups = groups
        self.dims = dict(dims)
        self.bank = bank
        self.seed = seed
        self.run_config: dict | None = None
        self.epoch = 0
        self.global_step = 0
        self.warmup_done = False
        self.domain_head_frozen = False
        self.generator = torch.Generator()
        self.generator.manual_seed(seed)
        self.learning_rates = {}
        self.optimizers = {}
        for name in PARAMETER_GROUPS:
            rate = float(learning_rates[name])
            if rate < 0:
                raise InputError(f"Taxa de aprendizado negativa para '{name}': {rate}")
            self.learning_rates[name] = rate
            self.optimizers[name] = torch.optim.Adam(self.groups[name].parameters(), lr=rate)

    @classmethod
    def build(cls, run_config: dict) -> 'ModelState':
        """Cria um estado novo a partir da configuração de execução (inicialização semeada)"""
        model = run_config['model']
        train = run_config['train']
        dims = {
            'feature_dim': model['feature_dim'],
            'latent_dim': model['latent_dim'],
            'noise_dim': model['noise_dim'],
            'hidden_dim': model['hidden_dim'],
            'patch_size': run_config['data']['patch_size'],
            'gin_per_dimension': bool(train['gin_per_dimension']),
        }
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(run_config['seed'])
            groups = build_groups(dims)
        bank = MemoryBank(capacity=train['bank_capacity'], delta=train['delta'])
        state = cls(groups, train['learning_rates'], dims, bank, seed=run_config['seed'])
        state.run_config = run_config
        return state

    # ==================== MAPAS ====================

    def __getitem__(self, name: str) -> nn.Module:
        return self.groups[name]

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.groups['encoder'](x)

    def extract_liveness(self, f: torch.Tensor) -> torch.Tensor:
        return self.groups['live_extractor'](f)

    def extract_domain(self, f: torch.Tensor) -> torch.Tensor:
        return self.groups['domain_extractor'](f)

    def reconstruct(self, l: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        return self.groups['reconstructor'](l, d)

    def classify_liveness(self, l: torch.Tensor) -> torch.Tensor:
        return self.groups['live_head'](l)

    def classify_domain(self, v: torch.Tensor) -> torch.Tensor:
        return self.groups['domain_head'](v)

    # ==================== ATUALIZAÇÃO ====================

    def set_trainable(self, names) -> None:
        """Habilita gradiente apenas nos grupos indicados (C_d congelado nunca volta)"""
        names = set(names)
        for name in PARAMETER_GROUPS:
            enabled = name in names and not (name == 'domain_head' and self.domain_head_frozen)
            for param in self.groups[name].parameters():
                param.requires_grad_(enabled)

    def zero_grad(self) -> None:
        for optimizer in self.optimizers.values():
            optimizer.zero_grad(set_to_none=True)

    def step(self, names) -> None:
        for name in names:
            if name == 'domain_head' and self.domain_head_frozen:
                raise SequencingError("C_d está congelado e não pode ser atualizado")
            self.optimizers[name].step()
        self.global_step += 1

    def freeze_domain_head(self) -> None:
        self.domain_head_frozen = True
        for param in self.groups['domain_head'].parameters():
            param.requires_grad_(False)
            param.grad = None
        logger.info("🧊 C_d congelado")

    def non_finite_groups(self) -> list[str]:
        return [
            name for name in PARAMETER_GROUPS
            if any(not torch.isfinite(p).all() for p in self.groups[name].parameters())
        ]

    # ==================== CÓPIAS ====================

    def parameter_snapshot(self) -> dict[str, dict[str, torch.Tensor]]:
        """Cópia de todos os parâmetros por grupo (auditoria de isolamento)"""
        return {
            name: {k: v.detach().clone() for k, v in self.groups[name].state_dict().items()}
            for name in PARAMETER_GROUPS
        }

    def snapshot(self) -> 'ModelState':
        """Cópia profunda somente-leitura para avaliação"""
        return copy.deepcopy(self)


def build_groups(dims: dict) -> nn.ModuleDict:
    feature_dim = dims['feature_dim']
    latent_dim = dims['latent_dim']
    hidden_dim = dims['hidden_dim']
    return nn.ModuleDict({
        'encoder': GeneralEncoder(feature_dim, dims['patch_size']),
        'live_extractor': FeatureExtractor(feature_dim, latent_dim, hidden_dim),
        'domain_extractor': FeatureExtractor(feature_dim, latent_dim, hidden_dim),
        'reconstructor': Reconstructor(feature_dim, latent_dim, hidden_dim),
        'adaptor': FeatureAdaptor(latent_dim),
        'condition_generator': ConditionGenerator(
            dims['noise_dim'], hidden_dim, latent_dim if dims['gin_per_dimension'] else 1
        ),
        'gin': GinEncoder(latent_dim),
        'live_head': BinaryHead(latent_dim),
        'domain_head': BinaryHead(latent_dim),
    })


def changed_groups(before: dict, after: dict) -> set[str]:
    """Grupos cujos bits mudaram entre dois ``parameter_snapshot``"""
    changed = set()
    for name in PARAMETER_GROUPS:
        for key, tensor in before[name].items():
            if not torch.equal(tensor, after[name][key]):
                changed.add(name)
                break
    return changed
