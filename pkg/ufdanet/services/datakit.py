"""Ingestão de dados: manifesto, separação rosto/fundo, máscaras e lotes.

O manifesto é um CSV com cabeçalho::

    path,label,x,y,w,h,split,domain_tag

``path`` é relativo ao diretório do manifesto; ``(x, y, w, h)`` é a caixa
do rosto em pixels. O split ``train`` só pode conter amostras ``live``.
"""
import csv
import logging
import os
from typing import Iterator, Sequence

import attrs
import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset

from ufdanet.services.file_handler import FileHandler
from ufdanet.utils.errors import DegenerateError, InputError
from ufdanet.utils.seeding import numpy_rng

logger = logging.getLogger(__name__)

LIVE = 'live'
SPOOF = 'spoof'
LABELS = (LIVE, SPOOF)
SPLITS = ('train', 'dev', 'test')
MANIFEST_FIELDS = ['path', 'label', 'x', 'y', 'w', 'h', 'split', 'domain_tag']

MAX_MASK_RATIO = 0.9
MASK_TOLERANCE = 0.05


def _face_box_converter(box) -> tuple[int, int, int, int]:
    values = tuple(int(v) for v in box)
    if len(values) != 4:
        raise InputError(f"face_box deve ter 4 inteiros (x, y, w, h): {box}")
    return values


@attrs.frozen
class SampleRecord:
    """Uma linha do manifesto"""

    image_path: str
    label: str = attrs.field(validator=attrs.validators.in_(LABELS))
    face_box: tuple[int, int, int, int] = attrs.field(converter=_face_box_converter)
    split: str = attrs.field(validator=attrs.validators.in_(SPLITS))
    domain_tag: str = ''

    @property
    def sample_id(self) -> str:
        return os.path.splitext(os.path.basename(self.image_path))[0]


@attrs.frozen(eq=False)
class PatchBatch:
    """Lote de patches: duas vistas mascaradas do rosto e o fundo"""

    fg: torch.Tensor
    fg_masked_s: torch.Tensor
    fg_masked_t: torch.Tensor
    bg: torch.Tensor
    masks_s: torch.Tensor
    masks_t: torch.Tensor
    sample_ids: list[str]

    def __len__(self) -> int:
        return len(self.sample_ids)


# ==================== MANIFESTO ====================

def check_one_class(records: Sequence[SampleRecord]) -> None:
    """Falha se o split de treino contiver qualquer amostra spoof"""
    offenders = [r.sample_id for r in records if r.split == 'train' and r.label != LIVE]
    if offenders:
        raise InputError(
            f"O split de treino deve conter apenas amostras live; encontradas {len(offenders)} "
            f"amostras spoof (ex.: {offenders[0]})"
        )


def training_records(records: Sequence[SampleRecord]) -> list[SampleRecord]:
    check_one_class(records)
    return [r for r in records if r.split == 'train']


def split_records(records: Sequence[SampleRecord], split: str) -> list[SampleRecord]:
    if split not in SPLITS:
        raise InputError(f"Split desconhecido: {split}")
    return [r for r in records if r.split == split]


def write_manifest(records: Sequence[SampleRecord], path: str) -> str:
    """Grava o manifesto CSV; caminhos de imagem ficam relativos ao manifesto"""
    check_one_class(records)
    root = os.path.dirname(os.path.abspath(path))
    os.makedirs(root, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(MANIFEST_FIELDS)
        for r in records:
            rel = os.path.relpath(os.path.abspath(r.image_path), root)
            x, y, w, h = r.face_box
            writer.writerow([rel.replace(os.sep, '/'), r.label, x, y, w, h, r.split, r.domain_tag])
    return path


def read_manifest(path: str) -> list[SampleRecord]:
    """
    Lê o manifesto CSV

    Returns:
        list[SampleRecord]: Registros com caminhos absolutos

    Raises:
        InputError: Arquivo ausente, cabeçalho diferente, linha inválida
            ou violação da restrição de uma classe
    """
    if not os.path.exists(path):
        raise InputError(f"Manifesto não encontrado: {path}")
    root = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != MANIFEST_FIELDS:
            raise InputError(
                f"Cabeçalho do manifesto inválido: {reader.fieldnames} (esperado {MANIFEST_FIELDS})"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                records.append(SampleRecord(
                    image_path=os.path.join(root, row['path']),
                    label=row['label'],
                    face_box=(row['x'], row['y'], row['w'], row['h']),
                    split=row['split'],
                    domain_tag=row['domain_tag'] or '',
                ))
            except (ValueError, TypeError) as e:
                raise InputError(f"Linha {line_no} do manifesto inválida: {e}") from e
    check_one_class(records)
    return records


# ==================== ROSTO / FUNDO ====================

def validate_face_box(image_shape: tuple[int, ...], face_box: Sequence[int]) -> tuple[int, int, int, int]:
    height, width = image_shape[:2]
    x, y, w, h = _face_box_converter(face_box)
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise InputError(f"face_box {face_box} fora dos limites da imagem {width}x{height}")
    return x, y, w, h


def _resize(image: np.ndarray, size: int) -> np.ndarray:
    tensor = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)[None]
    if tensor.shape[-2:] != (size, size):
        tensor = F.interpolate(tensor, size=(size, size), mode='bilinear',
                               align_corners=False, antialias=True)
    return tensor[0].permute(1, 2, 0).clamp(0.0, 1.0).numpy()


def zero_face_region(image: np.ndarray, face_box: Sequence[int]) -> np.ndarray:
    """Imagem inteira com a região do rosto zerada (fundo antes do redimensionamento)"""
    x, y, w, h = validate_face_box(image.shape, face_box)
    if w == image.shape[1] and h == image.shape[0]:
        raise DegenerateError("face_box cobre a imagem inteira: não há fundo")
    background = np.array(image, dtype=np.float32, copy=True)
    background[y:y + h, x:x + w] = 0.0
    return background


def crop_foreground(image: np.ndarray, face_box: Sequence[int], patch_size: int = 64) -> np.ndarray:
    """
    Recorta só o rosto (x^f), redimensionado para (P, P, 3)

    Aceita caixa cobrindo a imagem inteira (rosto já recortado).

    Raises:
        InputError: Caixa fora da imagem
    """
    x, y, w, h = validate_face_box(image.shape, face_box)
    return _resize(np.asarray(image, dtype=np.float32)[y:y + h, x:x + w], patch_size)


def split_foreground_background(image: np.ndarray, face_box: Sequence[int],
                                patch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """
    Separa o rosto (x^f) do fundo (x^b)

    Args:
        image: Array (H, W, 3) em [0, 1]
        face_box: (x, y, w, h) em pixels
        patch_size: Lado do patch de saída

    Returns:
        tuple: (rosto recortado, imagem com rosto zerado), ambos (P, P, 3)

    Raises:
        InputError: Caixa fora da imagem
        DegenerateError: Caixa cobrindo a imagem inteira
    """
    background = zero_face_region(image, face_box)
    return crop_foreground(image, face_box, patch_size), _resize(background, patch_size)


# ==================== MÁSCARAS ====================

def random_mask(fg_image: np.ndarray, mask_ratio: float,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """
    Aplica máscara aleatória em blocos retangulares

    O lado de cada bloco é sorteado em [P/8, P/4] (8-16 px para P=64). Blocos
    são adicionados até a fração removida ficar a menos de 1% abaixo de
    ``mask_ratio``; blocos que passariam de ``mask_ratio + 3%`` são recusados.

    Returns:
        tuple: (imagem mascarada, máscara (H, W) com 1 = mantido)

    Raises:
        InputError: ``mask_ratio`` fora de [0, 0.9]
    """
    if not 0.0 <= mask_ratio <= MAX_MASK_RATIO:
        raise InputError(f"mask_ratio deve estar em [0, {MAX_MASK_RATIO}]: {mask_ratio}")

    height, width = fg_image.shape[:2]
    removed = np.zeros((height, width), dtype=bool)
    total = float(height * width)
    min_side = max(1, min(height, width) // 8)
    max_side = max(min_side, min(height, width) // 4)

    coverage = 0.0
    rejections = 0
    attempts = 0
    while coverage < mask_ratio - 0.01 and attempts < 20000:
        attempts += 1
        side_cap = min_side if rejections >= 50 else max_side
        bh = int(rng.integers(min_side, side_cap + 1))
        bw = int(rng.integers(min_side, side_cap + 1))
        top = int(rng.integers(0, height - bh + 1))
        left = int(rng.integers(0, width - bw + 1))

        candidate = removed.copy()
        candidate[top:top + bh, left:left + bw] = True
        new_coverage = candidate.sum() / total
        if new_coverage > mask_ratio + 0.03:
            rejections += 1
            continue
        removed = candidate
        coverage = new_coverage
        rejections = 0

    if abs(coverage - mask_ratio) > MASK_TOLERANCE:
        raise DegenerateError(f"Não foi possível atingir mask_ratio={mask_ratio} (obtido {coverage:.3f})")

    mask = (~removed).astype(np.float32)
    masked = np.asarray(fg_image, dtype=np.float32) * mask[..., None]
    return masked, mask


# ==================== LOTES ====================

class PatchCache:
    """Rostos e fundos pré-processados (uint8) de um conjunto de registros"""

    def __init__(self, sample_ids: list[str], fg: np.ndarray, bg: np.ndarray | None):
        self.sample_ids = sample_ids
        self.fg = fg
        self.bg = bg

    def __len__(self) -> int:
        return len(self.sample_ids)

    @classmethod
    def from_records(cls, records: Sequence[SampleRecord], patch_size: int = 64,
                     with_background: bool = True) -> 'PatchCache':
        """
        Carrega e recorta os registros

        Args:
            records: Registros do manifesto
            patch_size: Lado dos patches
            with_background: ``False`` para pontuação (só o rosto é usado)
        """
        if not records:
            raise InputError("Manifesto vazio: nenhum registro para iterar")
        fg = np.empty((len(records), patch_size, patch_size, 3), dtype=np.uint8)
        bg = np.empty_like(fg) if with_background else None
        for i, record in enumerate(records):
            image = FileHandler.load_image(record.image_path)
            if with_background:
                face, background = split_foreground_background(image, record.face_box, patch_size)
                bg[i] = np.rint(background * 255.0).astype(np.uint8)
            else:
                face = crop_foreground(image, record.face_box, patch_size)
            fg[i] = np.rint(face * 255.0).astype(np.uint8)
        logger.info("📦 %d amostras carregadas em cache (%dx%d)", len(records), patch_size, patch_size)
        return cls([r.sample_id for r in records], fg, bg)


class _EpochPatches(Dataset):
    """Visão de uma época: cada amostra gera duas máscaras independentes"""

    def __init__(self, cache: PatchCache, mask_ratio: float, seed: int, epoch: int):
        if cache.bg is None:
            raise InputError("Cache sem fundos não serve para treino")
        self.cache = cache
        self.mask_ratio = mask_ratio
        self.seed = seed
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.cache)

    def __getitem__(self, index: int) -> dict:
        rng = numpy_rng(self.seed, self.epoch, 1, index)
        fg = self.cache.fg[index].astype(np.float32) / 255.0
        bg = self.cache.bg[index].astype(np.float32) / 255.0
        masked_s, mask_s = random_mask(fg, self.mask_ratio, rng)
        masked_t, mask_t = random_mask(fg, self.mask_ratio, rng)
        return {
            'fg': fg, 'bg': bg,
            'fg_masked_s': masked_s, 'fg_masked_t': masked_t,
            'masks_s': mask_s, 'masks_t': mask_t,
            'sample_id': self.cache.sample_ids[index],
        }


def _to_chw(arrays: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(arrays)).permute(0, 3, 1, 2).contiguous()


def collate_patches(items: list[dict]) -> PatchBatch:
    return PatchBatch(
        fg=_to_chw([it['fg'] for it in items]),
        fg_masked_s=_to_chw([it['fg_masked_s'] for it in items]),
        fg_masked_t=_to_chw([it['fg_masked_t'] for it in items]),
        bg=_to_chw([it['bg'] for it in items]),
        masks_s=torch.from_numpy(np.stack([it['masks_s'] for it in items]))[:, None],
        masks_t=torch.from_numpy(np.stack([it['masks_t'] for it in items]))[:, None],
        sample_ids=[it['sample_id'] for it in items],
    )


def batch_order(n_samples: int, batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    """Ordem embaralhada da época; o último lote parcial é descartado"""
    permutation = numpy_rng(seed, epoch, 0).permutation(n_samples)
    n_batches = n_samples // batch_size
    return [permutation[i * batch_size:(i + 1) * batch_size].tolist() for i in range(n_batches)]


def batch_iter(manifest: Sequence[SampleRecord] | PatchCache, batch_size: int, mask_ratio: float,
               seed: int, epoch: int = 0, patch_size: int = 64,
               num_workers: int = 0) -> Iterator[PatchBatch]:
    """
    Itera lotes de patches de uma época

    Toda a aleatoriedade vem de fluxos derivados de ``(seed, epoch)``, então a
    sequência emitida é a mesma para qualquer número de workers.

    Raises:
        InputError: Manifesto vazio, ``batch_size < 2`` ou ``mask_ratio`` inválido
    """
    if batch_size < 2:
        raise InputError(f"batch_size deve ser >= 2 (a perda de liveness pareia patches): {batch_size}")
    if not 0.0 <= mask_ratio <= MAX_MASK_RATIO:
        raise InputError(f"mask_ratio deve estar em [0, {MAX_MASK_RATIO}]: {mask_ratio}")
    if isinstance(manifest, PatchCache):
        cache = manifest
    else:
        records = list(manifest)
        check_one_class(records)
        cache = PatchCache.from_records(records, patch_size)
    if len(cache) == 0:
        raise InputError("Manifesto vazio: nenhum registro para iterar")

    loader = DataLoader(
        _EpochPatches(cache, mask_ratio, seed, epoch),
        batch_sampler=batch_order(len(cache), batch_size, seed, epoch),
        collate_fn=collate_patches,
        num_workers=num_workers,
    )
    yield from loader
