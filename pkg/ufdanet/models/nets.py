"""Componentes aprendíveis: E, E_l, E_d, D, C_l e C_d.

Todas as features são vetores; l e d saem normalizados (norma L2 = 1), o que
mantém as perdas de cosseno bem condicionadas.
"""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ufdanet.utils.errors import DimensionError

PROB_EPS = 1e-7


def clamped_sigmoid(logit: torch.Tensor) -> torch.Tensor:
    """Sigmoide com saída em [1e-7, 1 - 1e-7] (evita log(0) nas perdas)"""
    return torch.sigmoid(logit).clamp(PROB_EPS, 1.0 - PROB_EPS)


def check_feature(x: torch.Tensor, dim: int, role: str) -> None:
    if x.dim() not in (1, 2) or x.shape[-1] != dim:
        raise DimensionError(
            f"Feature '{role}' deve ter dimensão {dim}, recebido shape {tuple(x.shape)}"
        )


class GeneralEncoder(nn.Module):
    """E: 4 blocos convolucionais (stride 2) + pooling médio global -> F"""

    def __init__(self, feature_dim: int = 128, patch_size: int = 64, in_channels: int = 3):
        super().__init__()
        self.feature_dim = feature_dim
        self.patch_size = patch_size
        self.in_channels = in_channels
        widths = [max(8, feature_dim // 8), max(8, feature_dim // 4), max(8, feature_dim // 2), feature_dim]
        blocks = []
        channels = in_channels
        for width in widths:
            blocks += [
                nn.Conv2d(channels, width, kernel_size=3, stride=2, padding=1),
                nn.GroupNorm(math.gcd(width, 4), width),
                nn.LeakyReLU(0.2),
            ]
            channels = width
        self.blocks = nn.Sequential(*blocks)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        expected = (self.in_channels, self.patch_size, self.patch_size)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise DimensionError(
                f"Patch deve ter shape (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                f"recebido {tuple(x.shape)}"
            )
        return self.blocks(x).mean(dim=(2, 3))


class FeatureExtractor(nn.Module):
    """E_l / E_d: perceptron de 2 camadas F -> L com normalização L2 final"""

    def __init__(self, feature_dim: int = 128, latent_dim: int = 64, hidden_dim: int = 128):
        super().__init__()
        self.feature_dim = feature_dim
        self.latent_dim = latent_dim
        self.net = nn.Sequential(
            nn.Linear(feature_dim, hidden_dim),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden_dim, latent_dim),
        )

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        check_feature(f, self.feature_dim, 'general')
        return F.normalize(self.net(f), dim=-1)


class Reconstructor(nn.Module):
    """D: perceptron de 2 camadas sobre (l, d) concatenados -> F"""

    def __init__(self, feature_dim: int = 128, latent_dim: int = 64, hidden_dim: int = 128):
        super().__init__()
        self.feature_dim = feature_dim
        self.latent_dim = latent_dim
        self.net = nn.Sequential(
            nn.Linear(2 * latent_dim, hidden_dim),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden_dim, feature_dim),
        )

    def forward(self, l: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        check_feature(l, self.latent_dim, 'liveness')
        check_feature(d, self.latent_dim, 'domain')
        return self.net(torch.cat([l, d], dim=-1))


class BinaryHead(nn.Module):
    """C_l / C_d: cabeça linear com sigmoide limitada"""

    def __init__(self, latent_dim: int = 64):
        super().__init__()
        self.latent_dim = latent_dim
        self.linear = nn.Linear(latent_dim, 1)

    def logit(self, v: torch.Tensor) -> torch.Tensor:
        check_feature(v, self.latent_dim, 'classifier input')
        return self.linear(v).squeeze(-1)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        return clamped_sigmoid(self.logit(v))
