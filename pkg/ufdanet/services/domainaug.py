"""Aumento de domínio: GIN condicionado por G, perda adversarial e entropia de domínio."""
import attrs
import torch
import torch.nn.functional as F

from ufdanet.models.augmenters import ConditionGenerator, GinEncoder
from ufdanet.utils.errors import InputError, SequencingError

DOMAINAUG_MODES = ('gin', 'adain', 'off')


@attrs.frozen(eq=False)
class GinOutput:
    """d_hat normalizado, o valor antes da normalização e a condição usada"""

    d_hat: torch.Tensor
    pre_norm: torch.Tensor
    alpha: torch.Tensor | None
    beta: torch.Tensor | None


def gin_forward(gin: GinEncoder, condition_generator: ConditionGenerator | None, d_f: torch.Tensor,
                generator: torch.Generator | None = None,
                condition: tuple[torch.Tensor, torch.Tensor] | None = None,
                mode: str = 'gin') -> GinOutput:
    """
    Gera features de domínio com estilo novo

    Args:
        gin: E_GIN
        condition_generator: G (ignorado em ``adain``/``off`` ou com ``condition``)
        d_f: Feature de domínio do rosto, (L,) ou (B, L)
        generator: RNG do ruído de G
        condition: (alpha, beta) forçados, aplicados sem modulação de E_GIN
        mode: ``gin`` | ``adain`` | ``off``

    Raises:
        DegenerateError: d_f constante (desvio < 1e-6)
    """
    if mode not in DOMAINAUG_MODES:
        raise InputError(f"domainaug_mode desconhecido: {mode} (use {', '.join(DOMAINAUG_MODES)})")
    if mode == 'off':
        return GinOutput(d_f, d_f, None, None)

    single = d_f.dim() == 1
    rows = d_f.unsqueeze(0) if single else d_f
    batch = rows.shape[0]
    if condition is not None:
        alpha, beta = (torch.as_tensor(c, dtype=rows.dtype) for c in condition)
    elif mode == 'adain':
        alpha, beta = gin.adain_condition(batch)
    else:
        n_alpha, n_beta = condition_generator.sample_noise(batch, generator, rows.dtype)
        alpha, beta = gin.modulate(*condition_generator(n_alpha, n_beta))

    if alpha.dim() == 1 and alpha.shape[0] == batch:
        alpha, beta = alpha[:, None], beta[:, None]
    pre_norm = gin(rows, alpha, beta)
    d_hat = F.normalize(pre_norm, dim=-1)
    if single:
        return GinOutput(d_hat[0], pre_norm[0], alpha, beta)
    return GinOutput(d_hat, pre_norm, alpha, beta)


def loss_adv(p_aug_domain: torch.Tensor) -> torch.Tensor:
    """-média log(1 - p): features com domínio novo devem parecer spoof para C_l"""
    return -torch.log1p(-p_aug_domain).mean()


def loss_domain_entropy(p_dhat: torch.Tensor, domain_head_frozen: bool) -> torch.Tensor:
    """
    -média log C_d(d_hat)

    Raises:
        SequencingError: C_d ainda não foi pré-treinado e congelado
    """
    if not domain_head_frozen:
        raise SequencingError("L_d exige C_d pré-treinado e congelado")
    return -torch.log(p_dhat).mean()


def domainaug_total(l_adv: torch.Tensor, l_d: torch.Tensor) -> torch.Tensor:
    return l_adv + l_d
