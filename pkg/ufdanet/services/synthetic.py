"""Gerador procedural do conjunto sintético live/spoof.

Cada imagem combina um rosto com textura de banda limitada (o fator de
liveness) sobre um fundo suave; rosto e fundo recebem o mesmo estilo de
domínio (cor global + gradiente de iluminação). Amostras spoof passam por
desfoque gaussiano e re-nitidez, o que destrói a banda de liveness e
preserva o estilo de domínio.
"""
import logging
import os

import attrs
import numpy as np
from scipy.ndimage import gaussian_filter

from ufdanet.services.datakit import LIVE, SPOOF, SampleRecord, write_manifest
from ufdanet.services.file_handler import FileHandler
from ufdanet.utils.errors import InputError
from ufdanet.utils.seeding import numpy_rng

logger = logging.getLogger(__name__)


def _positive(instance, attribute, value):
    if value <= 0:
        raise InputError(f"{attribute.name} deve ser positivo: {value}")


def _non_negative(instance, attribute, value):
    if value < 0:
        raise InputError(f"{attribute.name} não pode ser negativo: {value}")


def _band(instance, attribute, value):
    low, high = value
    if not 0 < low < high <= 0.5:
        raise InputError(f"liveness_band deve satisfazer 0 < low < high <= 0.5: {value}")


@attrs.frozen
class SynthConfig:
    """Parâmetros do conjunto sintético"""

    n_train_live: int = attrs.field(default=2000, validator=_positive)
    n_test_live: int = attrs.field(default=500, validator=_positive)
    n_test_spoof: int = attrs.field(default=500, validator=_non_negative)
    n_dev_live: int = attrs.field(default=0, validator=_non_negative)
    n_dev_spoof: int = attrs.field(default=0, validator=_non_negative)
    image_size: int = attrs.field(default=96, validator=_positive)
    face_size_range: tuple[int, int] = attrs.field(default=(44, 64), converter=tuple)
    domain_palette_count: int = attrs.field(default=4, validator=_positive)
    liveness_band: tuple[float, float] = attrs.field(default=(0.18, 0.35), converter=tuple,
                                                     validator=_band)
    texture_amplitude: float = attrs.field(default=0.12, validator=_positive)
    spoof_blur_sigma: float = attrs.field(default=1.5, validator=_positive)
    resharpen_amount: float = attrs.field(default=0.6, validator=_non_negative)
    seed: int = 0

    @face_size_range.validator
    def _check_face_size(self, attribute, value):
        low, high = value
        if not 0 < low <= high < self.image_size:
            raise InputError(
                f"face_size_range {value} deve caber na imagem de {self.image_size}px com fundo"
            )

    @classmethod
    def from_run_config(cls, config: dict) -> 'SynthConfig':
        return cls(seed=config['seed'], **config['synth'])


@attrs.frozen
class DomainStyle:
    color_cast: np.ndarray = attrs.field(eq=False)
    gradient_angle: float
    gradient_strength: float
    base_level: float


def domain_palette(config: SynthConfig) -> list[DomainStyle]:
    rng = numpy_rng(config.seed, 3)
    return [
        DomainStyle(
            color_cast=rng.uniform(0.7, 1.2, size=3),
            gradient_angle=float(rng.uniform(0, 2 * np.pi)),
            gradient_strength=float(rng.uniform(0.1, 0.4)),
            base_level=float(rng.uniform(0.35, 0.65)),
        )
        for _ in range(config.domain_palette_count)
    ]


def band_limited_noise(shape: tuple[int, int], band: tuple[float, float],
                       rng: np.random.Generator) -> np.ndarray:
    """Ruído com espectro restrito ao anel ``band`` (ciclos/pixel), desvio 1"""
    noise = rng.standard_normal(shape)
    spectrum = np.fft.fft2(noise)
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    radius = np.sqrt(fx ** 2 + fy ** 2)
    spectrum[(radius < band[0]) | (radius > band[1])] = 0.0
    texture = np.real(np.fft.ifft2(spectrum))
    return texture / (texture.std() + 1e-12)


def band_energy(image: np.ndarray, band: tuple[float, float]) -> float:
    """Potência espectral média (tons de cinza) dentro do anel ``band``"""
    gray = np.asarray(image, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    gray = gray - gray.mean()
    power = np.abs(np.fft.fft2(gray)) ** 2 / gray.size
    fy = np.fft.fftfreq(gray.shape[0])[:, None]
    fx = np.fft.fftfreq(gray.shape[1])[None, :]
    radius = np.sqrt(fx ** 2 + fy ** 2)
    selected = (radius >= band[0]) & (radius <= band[1])
    return float(power[selected].mean())


def _apply_style(image: np.ndarray, style: DomainStyle) -> np.ndarray:
    size_y, size_x = image.shape[:2]
    yy, xx = np.meshgrid(np.linspace(-1, 1, size_y), np.linspace(-1, 1, size_x), indexing='ij')
    ramp = np.cos(style.gradient_angle) * xx + np.sin(style.gradient_angle) * yy
    illumination = 1.0 + style.gradient_strength * ramp
    return image * illumination[..., None] * style.color_cast[None, None, :]


def render_sample(config: SynthConfig, style: DomainStyle, spoof: bool,
                  rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    """
    Desenha uma amostra

    Returns:
        tuple: (imagem (S, S, 3) em [0, 1], face_box (x, y, w, h))
    """
    size = config.image_size
    side = int(rng.integers(config.face_size_range[0], config.face_size_range[1] + 1))
    x = int(rng.integers(0, size - side + 1))
    y = int(rng.integers(0, size - side + 1))

    # Fundo: padrão suave de baixa frequência
    background = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 8)
    background = style.base_level + 0.15 * background / (background.std() + 1e-12)
    image = np.repeat(background[..., None], 3, axis=2)

    # Rosto: tom de pele com sombreamento elíptico + textura de liveness
    yy, xx = np.meshgrid(np.linspace(-1, 1, side), np.linspace(-1, 1, side), indexing='ij')
    shading = np.clip(1.0 - 0.35 * (xx ** 2 + yy ** 2), 0.5, 1.0)
    skin = np.array([0.78, 0.60, 0.50]) * rng.uniform(0.85, 1.1)
    texture = config.texture_amplitude * band_limited_noise((side, side), config.liveness_band, rng)
    face = skin[None, None, :] * shading[..., None] + texture[..., None]
    image[y:y + side, x:x + side] = face

    image = _apply_style(image, style)

    if spoof:
        sigma = config.spoof_blur_sigma
        blurred = gaussian_filter(image, sigma=(sigma, sigma, 0))
        coarse = gaussian_filter(blurred, sigma=(3 * sigma, 3 * sigma, 0))
        image = blurred + config.resharpen_amount * (blurred - coarse)

    return np.clip(image, 0.0, 1.0), (x, y, side, side)


def _plan(config: SynthConfig) -> list[tuple[str, str, int]]:
    plan = []
    for split, label, count in (
        ('train', LIVE, config.n_train_live),
        ('dev', LIVE, config.n_dev_live),
        ('dev', SPOOF, config.n_dev_spoof),
        ('test', LIVE, config.n_test_live),
        ('test', SPOOF, config.n_test_spoof),
    ):
        plan.extend((split, label, i) for i in range(count))
    return plan


def generate_synthetic(config: SynthConfig, out_dir: str) -> tuple[str, list[SampleRecord]]:
    """
    Gera imagens PNG e o manifesto do conjunto sintético

    Args:
        config: Parâmetros do gerador
        out_dir: Diretório de saída (``images/`` e ``manifest.csv``)

    Returns:
        tuple: (caminho do manifesto, registros)
    """
    palette = domain_palette(config)
    records = []
    plan = _plan(config)
    logger.info("🎨 Gerando %d imagens sintéticas em %s", len(plan), out_dir)

    for index, (split, label, i) in enumerate(plan):
        rng = numpy_rng(config.seed, 7, index)
        domain = int(rng.integers(len(palette)))
        image, face_box = render_sample(config, palette[domain], label == SPOOF, rng)
        path = os.path.join(out_dir, 'images', split, f"{split}_{label}_{i:05d}.png")
        FileHandler.save_image(image, path)
        records.append(SampleRecord(
            image_path=path, label=label, face_box=face_box, split=split, domain_tag=f"d{domain}",
        ))

    manifest_path = write_manifest(records, os.path.join(out_dir, 'manifest.csv'))
    logger.info("✅ Manifesto gravado: %s (%d registros)", manifest_path, len(records))
    return manifest_path, records
