import numpy as np
import torch


def derive_seed(*parts: int) -> int:
    """Deriva uma semente de 63 bits a partir de uma tupla de inteiros.

    Usa o ``SeedSequence`` do numpy, então ``(seed, epoch, stage)`` gera
    fluxos independentes e reprodutíveis.
    """
    seq = np.random.SeedSequence([int(p) for p in parts])
    return int(seq.generate_state(1, dtype=np.uint64)[0]) >> 1


def numpy_rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))


def torch_generator(*parts: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(*parts))
    return generator
