"""Aumentadores de features: adaptador OOD (phi), gerador de condição (G) e E_GIN."""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ufdanet.models.nets import check_feature
from ufdanet.utils.errors import DegenerateError

STD_FLOOR = 1e-6
_LN2 = math.log(2.0)


def _softplus_inverse(value: float) -> float:
    return math.log(math.expm1(value))


def positive_alpha(raw: torch.Tensor) -> torch.Tensor:
    """Transformação positiva com alpha(0) = 1"""
    return F.softplus(raw) / _LN2


# ==================== PHI ====================

def affine_perturb(l: torch.Tensor, weight: torch.Tensor, s_c: torch.Tensor, b_c: torch.Tensor,
                   eps_scale: torch.Tensor, eps_bias: torch.Tensor) -> torch.Tensor:
    """``s * W(l) + b`` com ``s = 1 + s_c * eps1`` e ``b = b_c * eps2`` (antes da normalização)"""
    scale = 1.0 + s_c * eps_scale
    bias = b_c * eps_bias
    return scale * (l @ weight.T) + bias


class FeatureAdaptor(nn.Module):
    """phi: mapa linear (iniciado na identidade) com escala e viés gaussianos aprendíveis"""

    def __init__(self, latent_dim: int = 64, init_std: float = 0.1):
        super().__init__()
        self.latent_dim = latent_dim
        self.weight = nn.Parameter(torch.eye(latent_dim))
        self.scale_raw = nn.Parameter(torch.full((latent_dim,), _softplus_inverse(init_std)))
        self.bias_raw = nn.Parameter(torch.full((latent_dim,), _softplus_inverse(init_std)))

    @property
    def scale_std(self) -> torch.Tensor:
        return F.softplus(self.scale_raw)

    @property
    def bias_std(self) -> torch.Tensor:
        return F.softplus(self.bias_raw)

    def forward(self, l: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
        check_feature(l, self.latent_dim, 'liveness')
        eps_scale = torch.randn(l.shape, generator=generator, dtype=l.dtype)
        eps_bias = torch.randn(l.shape, generator=generator, dtype=l.dtype)
        perturbed = affine_perturb(l, self.weight, self.scale_std, self.bias_std, eps_scale, eps_bias)
        return F.normalize(perturbed, dim=-1)


# ==================== GIN ====================

def standardize(d: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Normalização de instância sobre os elementos do vetor

    Returns:
        tuple: (vetor padronizado, média, desvio), média/desvio com shape (..., 1)

    Raises:
        DegenerateError: Vetor (quase) constante, desvio < 1e-6
    """
    mu = d.mean(dim=-1, keepdim=True)
    sigma = d.std(dim=-1, unbiased=False, keepdim=True)
    if bool((sigma < STD_FLOOR).any()):
        raise DegenerateError("Feature de domínio constante: desvio padrão < 1e-6")
    return (d - mu) / sigma.clamp_min(STD_FLOOR), mu, sigma


class ConditionGenerator(nn.Module):
    """G: perceptron de 2 camadas (n_alpha, n_beta) -> (alpha, beta)"""

    def __init__(self, noise_dim: int = 8, hidden_dim: int = 64, out_dim: int = 1):
        super().__init__()
        self.noise_dim = noise_dim
        self.out_dim = out_dim
        self.net = nn.Sequential(
            nn.Linear(2 * noise_dim, hidden_dim),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden_dim, 2 * out_dim),
        )

    def sample_noise(self, batch: int, generator: torch.Generator | None = None,
                     dtype: torch.dtype = torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
        n_alpha = torch.randn((batch, self.noise_dim), generator=generator, dtype=dtype)
        n_beta = torch.randn((batch, self.noise_dim), generator=generator, dtype=dtype)
        return n_alpha, n_beta

    def forward(self, n_alpha: torch.Tensor, n_beta: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        raw = self.net(torch.cat([n_alpha, n_beta], dim=-1))
        raw_alpha, beta = raw.split(self.out_dim, dim=-1)
        return positive_alpha(raw_alpha), beta


class GinEncoder(nn.Module):
    """E_GIN: AdaIN aprendível sobre vetores.

    ``forward`` aplica ``alpha * padronizado(d) + beta`` sem nada entre a
    padronização e a condição. Os parâmetros aprendíveis ficam no caminho da
    condição: ``modulate`` aplica ganho positivo e deslocamento por dimensão
    à saída de G (identidade na inicialização). No modo ``adain`` alpha e
    beta são dois escalares aprendíveis do próprio módulo.
    """

    def __init__(self, latent_dim: int = 64):
        super().__init__()
        self.latent_dim = latent_dim
        self.gain_raw = nn.Parameter(torch.zeros(latent_dim))
        self.offset = nn.Parameter(torch.zeros(latent_dim))
        self.adain_alpha_raw = nn.Parameter(torch.zeros(1))
        self.adain_beta = nn.Parameter(torch.zeros(1))

    def modulate(self, alpha: torch.Tensor, beta: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(alpha, beta) de G -> condição por dimensão, alpha continua positivo"""
        return alpha * positive_alpha(self.gain_raw), beta + self.offset

    def adain_condition(self, batch: int) -> tuple[torch.Tensor, torch.Tensor]:
        alpha = positive_alpha(self.adain_alpha_raw).expand(batch, 1)
        return alpha, self.adain_beta.expand(batch, 1)

    def forward(self, d: torch.Tensor, alpha: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
        """Retorna d_hat antes da normalização L2"""
        check_feature(d, self.latent_dim, 'domain')
        normalized, _, _ = standardize(d)
        return alpha * normalized + beta
