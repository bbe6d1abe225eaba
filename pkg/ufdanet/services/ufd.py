"""Perdas de desentrelaçamento não supervisionado (UFD) e o total ponderado."""
import attrs
import torch

from ufdanet.utils.errors import DegenerateError, DimensionError, InputError

NORM_FLOOR = 1e-12
REC_LOSSES = ('l1', 'l2')
DIS_MODES = ('signed', 'absolute')


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"Lotes com shapes diferentes: {tuple(a.shape)} vs {tuple(b.shape)}")


def rowwise_cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    Cosseno linha a linha

    Raises:
        DimensionError: Shapes diferentes
        DegenerateError: Linha de norma zero (cosseno indefinido)
    """
    _check_pair(a, b)
    norm_a = a.norm(dim=-1)
    norm_b = b.norm(dim=-1)
    if bool((norm_a < NORM_FLOOR).any()) or bool((norm_b < NORM_FLOOR).any()):
        raise DegenerateError("Cosseno indefinido: vetor de norma zero")
    return (a * b).sum(dim=-1) / (norm_a * norm_b)


def loss_domain(d_f: torch.Tensor, d_b: torch.Tensor) -> torch.Tensor:
    """Consistência de domínio entre rosto e fundo: média de 1 - cos(d^f, d^b)"""
    return (1.0 - rowwise_cosine(d_f, d_b)).mean()


def loss_live(l_s: torch.Tensor, l_t: torch.Tensor) -> torch.Tensor:
    """Consistência de liveness entre as duas vistas mascaradas: média de 1 - cos(l_s, l_t)"""
    return (1.0 - rowwise_cosine(l_s, l_t)).mean()


def loss_dis(l_s: torch.Tensor, d_f: torch.Tensor, mode: str = 'signed') -> torch.Tensor:
    """Desentrelaçamento: média de cos(l_s, d^f) (ou de |cos| no modo ``absolute``)"""
    cosine = rowwise_cosine(l_s, d_f)
    if mode == 'signed':
        return cosine.mean()
    if mode == 'absolute':
        return cosine.abs().mean()
    raise InputError(f"dis_mode desconhecido: {mode} (use {', '.join(DIS_MODES)})")


def loss_rec(f: torch.Tensor, f_rec: torch.Tensor, kind: str = 'l1') -> torch.Tensor:
    """Reconstrução da feature geral: erro absoluto médio (ou quadrático com ``l2``)"""
    _check_pair(f, f_rec)
    diff = f - f_rec
    if kind == 'l1':
        return diff.abs().mean()
    if kind == 'l2':
        return diff.pow(2).mean()
    raise InputError(f"rec_loss desconhecida: {kind} (use {', '.join(REC_LOSSES)})")


@attrs.frozen(eq=False)
class UfdLossReport:
    """Componentes da perda UFD de um lote; ``total`` mantém o grafo"""

    l_domain: torch.Tensor
    l_live: torch.Tensor
    l_dis: torch.Tensor
    l_rec: torch.Tensor
    total: torch.Tensor
    lambda1: float


def ufd_total(l_domain: torch.Tensor, l_live: torch.Tensor, l_dis: torch.Tensor,
              l_rec: torch.Tensor, lambda1: float = 1e-3) -> UfdLossReport:
    total = l_domain + l_live + l_dis + lambda1 * l_rec
    return UfdLossReport(l_domain, l_live, l_dis, l_rec, total, lambda1)
