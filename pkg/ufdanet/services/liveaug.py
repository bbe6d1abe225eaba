"""Aumento de liveness: features OOD, banco de memória FIFO e perdas L_unl, L_pres, L_mine."""
import logging

import attrs
import torch
import torch.nn.functional as F

from ufdanet.models.augmenters import FeatureAdaptor
from ufdanet.services.ufd import NORM_FLOOR, rowwise_cosine
from ufdanet.utils.errors import DegenerateError, DimensionError, InputError

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-4
MAX_FEATURE_MASK_RATIO = 0.9
INSERTION_POLICIES = ('per_batch', 'per_sample')
LIVEAUG_MODES = ('adaptor', 'noise')


# ==================== BANCO DE MEMÓRIA ====================

@attrs.frozen(eq=False)
class BankEntry:
    order: int
    vector: torch.Tensor
    gate: float | None


class MemoryBank:
    """Banco FIFO de features OOD, filtrado por similaridade média |cos| < delta"""

    def __init__(self, capacity: int = 512, delta: float = 0.5):
        if capacity <= 0:
            raise InputError(f"Capacidade do banco deve ser positiva: {capacity}")
        if not 0.0 < delta <= 1.0:
            raise InputError(f"delta deve estar em (0, 1]: {delta}")
        self.capacity = int(capacity)
        self.delta = float(delta)
        self.entries: list[BankEntry] = []
        self.next_order = 0
        self._matrix: torch.Tensor | None = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def vectors(self) -> torch.Tensor | None:
        if not self.entries:
            return None
        if self._matrix is None:
            self._matrix = torch.stack([e.vector for e in self.entries])
        return self._matrix

    def gate_value(self, candidate: torch.Tensor) -> float | None:
        """Média de |cos(candidato, entrada)|; ``None`` com o banco vazio"""
        stored = self.vectors()
        if stored is None:
            return None
        return float((stored.to(candidate.dtype) @ candidate.detach()).abs().mean())

    def try_insert(self, candidate: torch.Tensor) -> bool:
        """
        Tenta inserir uma feature OOD (cópia sem gradiente)

        Returns:
            bool: True se inserida; com o banco cheio a entrada mais antiga sai

        Raises:
            InputError: Candidato não unitário ou de dimensão diferente
        """
        if candidate.dim() != 1:
            raise InputError(f"Candidato deve ser um vetor, recebido shape {tuple(candidate.shape)}")
        if self.entries and candidate.shape != self.entries[0].vector.shape:
            raise InputError(
                f"Candidato com dimensão {candidate.shape[0]}, banco com {self.entries[0].vector.shape[0]}"
            )
        norm = float(candidate.detach().norm())
        if abs(norm - 1.0) > UNIT_TOLERANCE:
            raise InputError(f"Candidato deve ter norma 1 (norma {norm:.6f})")

        gate = self.gate_value(candidate)
        if gate is not None and not gate < self.delta:
            return False
        if len(self.entries) >= self.capacity:
            self.entries.pop(0)
        self.entries.append(BankEntry(self.next_order, candidate.detach().clone(), gate))
        self._matrix = None
        self.next_order += 1
        return True

    def state_dict(self) -> dict:
        return {
            'capacity': self.capacity,
            'delta': self.delta,
            'next_order': self.next_order,
            'orders': [e.order for e in self.entries],
            'gates': [e.gate for e in self.entries],
            'vectors': self.vectors(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.capacity = int(state['capacity'])
        self.delta = float(state['delta'])
        self.next_order = int(state['next_order'])
        vectors = state['vectors']
        self.entries = [
            BankEntry(order, vectors[i].clone(), gate)
            for i, (order, gate) in enumerate(zip(state['orders'], state['gates']))
        ]
        self._matrix = None


def bank_try_insert(bank: MemoryBank, l_tilde: torch.Tensor) -> bool:
    return bank.try_insert(l_tilde)


def bank_candidates(l_tilde: torch.Tensor, policy: str = 'per_batch',
                    generator: torch.Generator | None = None) -> list[torch.Tensor]:
    """Candidatos à inserção: uma amostra sorteada do lote ou todas, em ordem"""
    if policy == 'per_batch':
        index = int(torch.randint(l_tilde.shape[0], (1,), generator=generator))
        return [l_tilde[index]]
    if policy == 'per_sample':
        return list(l_tilde)
    raise InputError(f"bank_insertion desconhecido: {policy} (use {', '.join(INSERTION_POLICIES)})")


# ==================== FEATURES OOD ====================

def adapt(adaptor: FeatureAdaptor, l: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    return adaptor(l, generator)


def noise_features(like: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    """Pseudo-spoof sem adaptador: gaussianas normalizadas"""
    return F.normalize(torch.randn(like.shape, generator=generator, dtype=like.dtype), dim=-1)


def mask_feature(l_tilde: torch.Tensor, ratio: float,
                 generator: torch.Generator | None = None) -> torch.Tensor:
    """
    Zera ``floor(ratio * L)`` coordenadas sorteadas por linha e renormaliza

    Raises:
        InputError: ``ratio`` fora de [0, 0.9]
        DegenerateError: Linha zerada por completo
    """
    if not 0.0 <= ratio <= MAX_FEATURE_MASK_RATIO:
        raise InputError(f"feature_mask_ratio deve estar em [0, {MAX_FEATURE_MASK_RATIO}]: {ratio}")
    single = l_tilde.dim() == 1
    rows = l_tilde.unsqueeze(0) if single else l_tilde
    latent_dim = rows.shape[-1]
    n_zero = int(ratio * latent_dim)

    keep = torch.ones_like(rows)
    if n_zero:
        chosen = torch.rand(rows.shape, generator=generator).argsort(dim=-1)[:, :n_zero]
        keep.scatter_(1, chosen, 0.0)
    masked = rows * keep
    norms = masked.norm(dim=-1, keepdim=True)
    if bool((norms < NORM_FLOOR).any()):
        raise DegenerateError("Feature mascarada ficou nula; reduza feature_mask_ratio")
    out = masked / norms
    return out[0] if single else out


# ==================== PERDAS ====================

def loss_unl(l_tilde_s: torch.Tensor, l_t: torch.Tensor) -> torch.Tensor:
    """Média de cos(l~_s, l_t); o gradiente só chega ao adaptador"""
    return rowwise_cosine(l_tilde_s, l_t.detach()).mean()


def loss_pres(p_live: torch.Tensor, p_aug: torch.Tensor) -> torch.Tensor:
    """-média[log p_live + log(1 - p_aug)]"""
    if p_live.shape != p_aug.shape:
        raise DimensionError(f"Probabilidades com shapes diferentes: {tuple(p_live.shape)} vs {tuple(p_aug.shape)}")
    return -(torch.log(p_live) + torch.log1p(-p_aug)).mean()


def loss_mine(l_tilde: torch.Tensor, l_tilde_m: torch.Tensor,
              bank: MemoryBank | torch.Tensor | None) -> torch.Tensor:
    """
    Contraste (temperatura 1): (l~, l~_M) é o par positivo, as entradas do banco os negativos

    Com o banco vazio o termo vale 0 (ainda ligado ao grafo).
    """
    stored = bank.vectors() if isinstance(bank, MemoryBank) else bank
    if stored is None or stored.shape[0] == 0:
        return (l_tilde * 0.0).sum()

    single = l_tilde.dim() == 1
    anchors = l_tilde.unsqueeze(0) if single else l_tilde
    positives = l_tilde_m.unsqueeze(0) if single else l_tilde_m
    if stored.shape[-1] != anchors.shape[-1]:
        raise DimensionError(f"Banco com dimensão {stored.shape[-1]}, feature com {anchors.shape[-1]}")

    positive = rowwise_cosine(anchors, positives)
    negatives = F.normalize(anchors, dim=-1) @ stored.detach().to(anchors.dtype).T
    logits = torch.cat([positive[:, None], negatives], dim=1)
    target = torch.zeros(logits.shape[0], dtype=torch.long)
    return F.cross_entropy(logits, target)


def liveaug_total(l_unl: torch.Tensor, l_pres: torch.Tensor, l_mine: torch.Tensor,
                  lambda2: float = 1e-1) -> torch.Tensor:
    return l_unl + l_pres + lambda2 * l_mine
