"""Treinamento em quatro estágios por época (UFD, LiveAug, DomainAug, treino aprimorado).

Cada estágio percorre todos os lotes da época e atualiza apenas os seus
grupos de parâmetros. As épocas de aquecimento rodam só o estágio 1; ao
fim do aquecimento C_d é pré-treinado e congelado.
"""
import json
import logging
import math
import os
import time

import attrs
import numpy as np
import torch
import torch.nn.functional as F

from ufdanet.models.state import ModelState
from ufdanet.services import domainaug, liveaug, ufd
from ufdanet.services.checkpoint import checkpoint_name, load_checkpoint, save_checkpoint
from ufdanet.services.datakit import PatchBatch, PatchCache, batch_iter, read_manifest, training_records
from ufdanet.utils.errors import InputError, SequencingError, TrainingAbort
from ufdanet.utils.log import MetricsLog
from ufdanet.utils.seeding import derive_seed, numpy_rng

logger = logging.getLogger(__name__)

# Grupos atualizados por estágio
STAGE_GROUPS = {
    1: ('encoder', 'live_extractor', 'domain_extractor', 'reconstructor'),
    2: ('adaptor',),
    3: ('condition_generator', 'gin'),
    4: ('live_head', 'live_extractor'),
}
WARMUP_STAGES = (1,)
FULL_STAGES = (1, 2, 3, 4)
HISTORY_FILE = 'history.jsonl'
METRICS_FILE = 'metrics.log'


# ==================== CONFIGURAÇÃO ====================

def _non_negative_rates(instance, attribute, value):
    negative = {k: v for k, v in value.items() if v < 0}
    if negative:
        raise InputError(f"Taxas de aprendizado negativas: {negative}")


@attrs.frozen
class TrainConfig:
    """Visão tipada da seção ``train`` (mais semente e dados)"""

    epochs: int = 30
    warmup_epochs: int = 5
    batch_size: int = 32
    learning_rates: dict = attrs.field(factory=dict, validator=_non_negative_rates)
    lambda1: float = 1e-3
    lambda2: float = 1e-1
    delta: float = 0.5
    bank_capacity: int = 512
    mask_ratio: float = 0.25
    feature_mask_ratio: float = 0.25
    bank_insertion: str = attrs.field(default='per_batch',
                                      validator=attrs.validators.in_(liveaug.INSERTION_POLICIES))
    rec_loss: str = attrs.field(default='l1', validator=attrs.validators.in_(ufd.REC_LOSSES))
    dis_mode: str = attrs.field(default='signed', validator=attrs.validators.in_(ufd.DIS_MODES))
    liveaug_mode: str = attrs.field(default='adaptor', validator=attrs.validators.in_(liveaug.LIVEAUG_MODES))
    use_mine: bool = True
    domainaug_mode: str = attrs.field(default='gin',
                                      validator=attrs.validators.in_(domainaug.DOMAINAUG_MODES))
    use_domain_entropy: bool = True
    gin_per_dimension: bool = False
    domain_head_epochs: int = 20
    domain_head_holdout: float = 0.2
    seed: int = 0
    patch_size: int = 64
    num_workers: int = 0

    def __attrs_post_init__(self):
        if self.epochs <= 0:
            raise InputError(f"epochs deve ser positivo: {self.epochs}")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise InputError(
                f"warmup_epochs ({self.warmup_epochs}) deve ser menor que epochs ({self.epochs})"
            )

    @classmethod
    def from_run_config(cls, config: dict) -> 'TrainConfig':
        train = dict(config['train'])
        data = config['data']
        return cls(
            seed=config['seed'],
            mask_ratio=data['mask_ratio'],
            patch_size=data['patch_size'],
            num_workers=data['num_workers'],
            **train,
        )


@attrs.frozen
class EpochRecord:
    """Resumo de uma época; ``seconds`` fica fora do histórico em disco"""

    epoch: int
    phase: str
    stages: tuple[int, ...]
    losses: dict
    bank_size: int
    bank_inserted: int
    seconds: float = attrs.field(default=0.0, eq=False)

    def to_history(self) -> dict:
        return {
            'epoch': self.epoch,
            'phase': self.phase,
            'stages': list(self.stages),
            'losses': self.losses,
            'bank_size': self.bank_size,
            'bank_inserted': self.bank_inserted,
        }


@attrs.frozen
class DomainHeadReport:
    train_accuracy: float
    heldout_accuracy: float
    heldout_mean_p_domain: float
    heldout_mean_p_live: float
    n_train: int
    n_heldout: int


@attrs.frozen
class FitResult:
    state: ModelState = attrs.field(eq=False)
    history: list[EpochRecord]
    checkpoint_path: str
    history_path: str
    domain_head: DomainHeadReport | None = None


# ==================== PERDA DO ESTÁGIO 4 ====================

def loss_feature_enhanced(p_rec: torch.Tensor, p_hat: torch.Tensor, p_tilde: torch.Tensor) -> torch.Tensor:
    """-média[log p_rec + log p_hat + log(1 - p_tilde)]"""
    return -(torch.log(p_rec) + torch.log(p_hat) + torch.log1p(-p_tilde)).mean()


# ==================== ESTÁGIOS ====================

class _StageMeter:
    """Acumula médias por estágio e grava cada passo no metrics.log"""

    def __init__(self, stage: int, metrics: MetricsLog | None):
        self.stage = stage
        self.metrics = metrics
        self.sums: dict[str, float] = {}
        self.count = 0

    def check(self, losses: dict[str, torch.Tensor], batch_index: int) -> None:
        for name, value in losses.items():
            value = float(value.detach())
            if not math.isfinite(value):
                raise TrainingAbort(f"perda '{name}' não finita ({value})", self.stage, batch_index)

    def add(self, step: int, losses: dict[str, torch.Tensor]) -> None:
        values = {name: float(value.detach()) for name, value in losses.items()}
        for name, value in values.items():
            self.sums[name] = self.sums.get(name, 0.0) + value
        self.count += 1
        if self.metrics is not None:
            self.metrics.write(step, {f"stage{self.stage}/{k}": v for k, v in values.items()})

    def means(self) -> dict[str, float]:
        return {name: total / self.count for name, total in self.sums.items()} if self.count else {}


def _begin_stage(state: ModelState, config: TrainConfig, epoch: int, stage: int) -> None:
    state.generator.manual_seed(derive_seed(config.seed, epoch, stage))
    state.set_trainable(STAGE_GROUPS[stage])
    state.zero_grad()


def _update(state: ModelState, stage: int, total: torch.Tensor, batch_index: int,
            groups: tuple[str, ...] | None = None) -> None:
    groups = STAGE_GROUPS[stage] if groups is None else groups
    state.zero_grad()
    total.backward()
    state.step(groups)
    broken = [name for name in state.non_finite_groups() if name in groups]
    if broken:
        raise TrainingAbort(f"parâmetros não finitos em {broken}", stage, batch_index)


def run_stage_ufd(state: ModelState, batches: list[PatchBatch], config: TrainConfig,
                  epoch: int, metrics: MetricsLog | None = None) -> dict[str, float]:
    """Estágio 1: E, E_l, E_d e D pela perda UFD"""
    meter = _StageMeter(1, metrics)
    _begin_stage(state, config, epoch, 1)
    for index, batch in enumerate(batches):
        f_s = state.encode(batch.fg_masked_s)
        f_t = state.encode(batch.fg_masked_t)
        f_b = state.encode(batch.bg)
        l_s = state.extract_liveness(f_s)
        l_t = state.extract_liveness(f_t)
        d_f = state.extract_domain(f_s)
        d_b = state.extract_domain(f_b)

        report = ufd.ufd_total(
            ufd.loss_domain(d_f, d_b),
            ufd.loss_live(l_s, l_t),
            ufd.loss_dis(l_s, d_f, config.dis_mode),
            ufd.loss_rec(f_s, state.reconstruct(l_s, d_f), config.rec_loss),
            config.lambda1,
        )
        losses = {'domain': report.l_domain, 'live': report.l_live, 'dis': report.l_dis,
                  'rec': report.l_rec, 'total': report.total}
        meter.check(losses, index)
        _update(state, 1, report.total, index)
        meter.add(state.global_step, losses)
    return meter.means()


def _frozen_features(state: ModelState, batch: PatchBatch) -> tuple[torch.Tensor, ...]:
    with torch.no_grad():
        f_s = state.encode(batch.fg_masked_s)
        f_t = state.encode(batch.fg_masked_t)
        return state.extract_liveness(f_s), state.extract_liveness(f_t), state.extract_domain(f_s)


def _ood_features(state: ModelState, l: torch.Tensor, config: TrainConfig) -> torch.Tensor:
    if config.liveaug_mode == 'noise':
        return liveaug.noise_features(l, state.generator)
    return liveaug.adapt(state['adaptor'], l, state.generator)


def run_stage_liveaug(state: ModelState, batches: list[PatchBatch], config: TrainConfig,
                      epoch: int, metrics: MetricsLog | None = None) -> tuple[dict[str, float], int]:
    """
    Estágio 2: adaptador phi pela perda LiveAug, com inserções no banco

    Returns:
        tuple: (médias das perdas, número de inserções no banco)
    """
    meter = _StageMeter(2, metrics)
    _begin_stage(state, config, epoch, 2)
    inserted = 0
    for index, batch in enumerate(batches):
        l_s, l_t, d_f = _frozen_features(state, batch)
        l_tilde = _ood_features(state, l_s, config)

        with torch.no_grad():
            p_live = state.classify_liveness(state.extract_liveness(state.reconstruct(l_s, d_f)))
        p_aug = state.classify_liveness(state.extract_liveness(state.reconstruct(l_tilde, d_f)))

        l_unl = liveaug.loss_unl(l_tilde, l_t)
        l_pres = liveaug.loss_pres(p_live, p_aug)
        if config.use_mine:
            l_tilde_m = liveaug.mask_feature(l_tilde, config.feature_mask_ratio, state.generator)
            l_mine = liveaug.loss_mine(l_tilde, l_tilde_m, state.bank)
        else:
            l_mine = torch.zeros((), dtype=l_tilde.dtype)
        total = liveaug.liveaug_total(l_unl, l_pres, l_mine, config.lambda2)

        losses = {'unl': l_unl, 'pres': l_pres, 'mine': l_mine, 'total': total}
        meter.check(losses, index)
        if config.liveaug_mode == 'adaptor':
            _update(state, 2, total, index)
        else:
            state.global_step += 1

        for candidate in liveaug.bank_candidates(l_tilde.detach(), config.bank_insertion, state.generator):
            inserted += int(state.bank.try_insert(candidate))
        meter.add(state.global_step, losses)
    return meter.means(), inserted


def _domain_groups(config: TrainConfig) -> tuple[str, ...]:
    return ('gin',) if config.domainaug_mode == 'adain' else STAGE_GROUPS[3]


def run_stage_domainaug(state: ModelState, batches: list[PatchBatch], config: TrainConfig,
                        epoch: int, metrics: MetricsLog | None = None) -> dict[str, float]:
    """Estágio 3: G e E_GIN pelas perdas adversarial e de entropia de domínio"""
    if config.domainaug_mode == 'off':
        return {}
    meter = _StageMeter(3, metrics)
    _begin_stage(state, config, epoch, 3)
    for index, batch in enumerate(batches):
        l_s, _, d_f = _frozen_features(state, batch)
        out = domainaug.gin_forward(state['gin'], state['condition_generator'], d_f,
                                    state.generator, mode=config.domainaug_mode)
        p_aug = state.classify_liveness(state.extract_liveness(state.reconstruct(l_s, out.d_hat)))
        l_adv = domainaug.loss_adv(p_aug)
        if config.use_domain_entropy:
            l_d = domainaug.loss_domain_entropy(state.classify_domain(out.d_hat), state.domain_head_frozen)
        else:
            l_d = torch.zeros((), dtype=l_adv.dtype)
        total = domainaug.domainaug_total(l_adv, l_d)

        losses = {'adv': l_adv, 'domain_entropy': l_d, 'total': total}
        meter.check(losses, index)
        _update(state, 3, total, index, _domain_groups(config))
        meter.add(state.global_step, losses)
    return meter.means()


def run_stage_enhanced(state: ModelState, batches: list[PatchBatch], config: TrainConfig,
                       epoch: int, metrics: MetricsLog | None = None) -> dict[str, float]:
    """Estágio 4: C_l e E_l com features reconstruídas, de domínio novo e OOD"""
    meter = _StageMeter(4, metrics)
    _begin_stage(state, config, epoch, 4)
    for index, batch in enumerate(batches):
        with torch.no_grad():
            f_s = state.encode(batch.fg_masked_s)
            d_f = state.extract_domain(f_s)
        l_s = state.extract_liveness(f_s)
        with torch.no_grad():
            l_tilde = _ood_features(state, l_s.detach(), config)
            d_hat = domainaug.gin_forward(state['gin'], state['condition_generator'], d_f,
                                          state.generator, mode=config.domainaug_mode).d_hat

        def classify(f):
            return state.classify_liveness(state.extract_liveness(f))

        p_rec = classify(state.reconstruct(l_s, d_f))
        p_hat = classify(state.reconstruct(l_s, d_hat))
        p_tilde = classify(state.reconstruct(l_tilde, d_f))
        total = loss_feature_enhanced(p_rec, p_hat, p_tilde)

        losses = {'p_rec': p_rec.mean(), 'p_hat': p_hat.mean(), 'p_tilde': p_tilde.mean(), 'total': total}
        meter.check(losses, index)
        _update(state, 4, total, index)
        meter.add(state.global_step, losses)
    return meter.means()


# ==================== ÉPOCA ====================

def epoch_batches(cache: PatchCache, config: TrainConfig, epoch: int) -> list[PatchBatch]:
    return list(batch_iter(cache, config.batch_size, config.mask_ratio, config.seed,
                           epoch=epoch, num_workers=config.num_workers))


def train_epoch(state: ModelState, data: PatchCache | list[PatchBatch], config: TrainConfig,
                phase: str = 'full', metrics: MetricsLog | None = None) -> EpochRecord:
    """
    Executa uma época (estágios 1-4, ou só o 1 no aquecimento)

    Args:
        state: Estado do treino (``state.epoch`` avança em 1)
        data: Cache de patches ou lista de lotes já montados
        config: Configuração do treino
        phase: ``warmup`` | ``full``
        metrics: Log de métricas por passo (opcional)

    Raises:
        TrainingAbort: Perda ou parâmetro não finito (informa estágio e lote)
        SequencingError: Época completa com L_d ativo e C_d não congelado
    """
    epoch = state.epoch
    batches = epoch_batches(data, config, epoch) if isinstance(data, PatchCache) else list(data)
    if not batches:
        raise InputError("Nenhum lote completo na época: aumente o conjunto ou reduza batch_size")
    started = time.perf_counter()

    losses = {'stage1': run_stage_ufd(state, batches, config, epoch, metrics)}
    stages = WARMUP_STAGES
    inserted = 0
    if phase == 'full':
        stages = FULL_STAGES
        losses['stage2'], inserted = run_stage_liveaug(state, batches, config, epoch, metrics)
        losses['stage3'] = run_stage_domainaug(state, batches, config, epoch, metrics)
        losses['stage4'] = run_stage_enhanced(state, batches, config, epoch, metrics)

    state.set_trainable(())
    state.epoch = epoch + 1
    record = EpochRecord(
        epoch=state.epoch,
        phase=phase,
        stages=stages,
        losses=losses,
        bank_size=len(state.bank),
        bank_inserted=inserted,
        seconds=time.perf_counter() - started,
    )
    logger.info(
        "🏋️ Época %d (%s) concluída em %.1fs | UFD %.4f | banco %d",
        record.epoch, phase, record.seconds, losses['stage1'].get('total', float('nan')), record.bank_size,
    )
    return record


# ==================== C_d ====================

def _harvest_domain_features(state: ModelState, cache: PatchCache,
                             batch_size: int) -> tuple[torch.Tensor, torch.Tensor]:
    domain, live = [], []
    with torch.no_grad():
        for start in range(0, len(cache), batch_size):
            fg = torch.from_numpy(cache.fg[start:start + batch_size].astype(np.float32) / 255.0)
            f = state.encode(fg.permute(0, 3, 1, 2).contiguous())
            domain.append(state.extract_domain(f))
            live.append(state.extract_liveness(f))
    return torch.cat(domain), torch.cat(live)


def _accuracy(logits: torch.Tensor, targets: torch.Tensor) -> float:
    return float(((logits >= 0).float() == targets).float().mean())


def pretrain_domain_head(state: ModelState, cache: PatchCache, config: TrainConfig) -> DomainHeadReport:
    """
    Pré-treina C_d (d = domínio, rótulo 1; l = liveness, rótulo 0) e o congela

    Raises:
        SequencingError: Chamado antes do fim do aquecimento ou com C_d já congelado
    """
    if state.domain_head_frozen:
        raise SequencingError("C_d já foi pré-treinado e congelado")
    if state.epoch < config.warmup_epochs:
        raise SequencingError(
            f"C_d só pode ser pré-treinado após o aquecimento ({state.epoch}/{config.warmup_epochs} épocas)"
        )

    d, l = _harvest_domain_features(state, cache, max(config.batch_size, 64))
    n = d.shape[0]
    order = numpy_rng(config.seed, 11).permutation(n)
    n_heldout = min(n - 1, max(1, int(round(config.domain_head_holdout * n)))) if n > 1 else 0
    heldout_idx = torch.from_numpy(order[:n_heldout].copy())
    train_idx = torch.from_numpy(order[n_heldout:].copy())

    def stack(idx):
        inputs = torch.cat([d[idx], l[idx]])
        targets = torch.cat([torch.ones(len(idx)), torch.zeros(len(idx))])
        return inputs, targets

    train_x, train_y = stack(train_idx)
    head = state['domain_head']
    state.set_trainable(('domain_head',))
    for _ in range(config.domain_head_epochs):
        state.zero_grad()
        loss = F.binary_cross_entropy_with_logits(head.logit(train_x), train_y)
        loss.backward()
        state.step(('domain_head',))

    with torch.no_grad():
        train_accuracy = _accuracy(head.logit(train_x), train_y)
        eval_idx = heldout_idx if n_heldout else train_idx
        eval_x, eval_y = stack(eval_idx)
        heldout_accuracy = _accuracy(head.logit(eval_x), eval_y)
        mean_p_domain = float(head(d[eval_idx]).mean())
        mean_p_live = float(head(l[eval_idx]).mean())

    state.freeze_domain_head()
    state.warmup_done = True
    report = DomainHeadReport(train_accuracy, heldout_accuracy, mean_p_domain, mean_p_live,
                              n - n_heldout, n_heldout)
    logger.info(
        "🎯 C_d pré-treinado | acc treino %.3f | acc validação %.3f | C_d(d) %.3f | C_d(l) %.3f",
        train_accuracy, heldout_accuracy, mean_p_domain, mean_p_live,
    )
    return report


# ==================== LOOP COMPLETO ====================

def load_history(path: str, up_to_epoch: int | None = None) -> list[dict]:
    """
    Lê ``history.jsonl``

    Raises:
        InputError: Arquivo ausente ou linha malformada
    """
    if not os.path.exists(path):
        raise InputError(f"Histórico não encontrado: {path}")
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                epoch = int(row['epoch'])
                if not isinstance(row['losses'], dict):
                    raise TypeError('losses')
            except (ValueError, KeyError, TypeError) as e:
                raise InputError(f"Linha {line_no} do histórico malformada: {path}") from e
            if up_to_epoch is None or epoch <= up_to_epoch:
                rows.append(row)
    return rows


def _write_history(path: str, rows: list[dict]) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + '\n')


def fit(run_config: dict, out_dir: str, resume_from: str | None = None) -> FitResult:
    """
    Treina do zero (ou a partir de um checkpoint) até ``epochs``

    Grava ``ckpt_epoch{N}.pt`` a cada época, ``history.jsonl`` (uma linha por
    época) e ``metrics.log``.

    Raises:
        InputError: Manifesto ausente ou pequeno demais para um lote
        TrainingAbort: Valor não finito em algum estágio
    """
    config = TrainConfig.from_run_config(run_config)
    manifest = run_config['data']['manifest']
    if not manifest:
        raise InputError("data.manifest não informado")
    records = training_records(read_manifest(manifest))
    if len(records) < config.batch_size:
        raise InputError(
            f"Treino com {len(records)} amostras não forma um lote de {config.batch_size}"
        )
    cache = PatchCache.from_records(records, config.patch_size)

    if resume_from:
        state = load_checkpoint(resume_from, expected_dims={
            'feature_dim': run_config['model']['feature_dim'],
            'latent_dim': run_config['model']['latent_dim'],
            'patch_size': config.patch_size,
        })
        state.run_config = run_config
        logger.info("🔁 Retomando da época %d", state.epoch)
    else:
        state = ModelState.build(run_config)

    os.makedirs(out_dir, exist_ok=True)
    history_path = os.path.join(out_dir, HISTORY_FILE)
    metrics_path = os.path.join(out_dir, METRICS_FILE)
    rows = []
    if resume_from and os.path.exists(history_path):
        rows = load_history(history_path, state.epoch)
    _write_history(history_path, rows)
    if not resume_from and os.path.exists(metrics_path):
        os.remove(metrics_path)

    history = []
    checkpoint_path = resume_from or ''
    domain_report = None
    logger.info("🚀 Treino: %d épocas (%d de aquecimento), %d amostras", config.epochs,
                config.warmup_epochs, len(records))
    with MetricsLog(metrics_path) as metrics:
        while state.epoch < config.epochs:
            phase = 'warmup' if state.epoch < config.warmup_epochs else 'full'
            if phase == 'full' and not state.domain_head_frozen:
                domain_report = pretrain_domain_head(state, cache, config)
            record = train_epoch(state, cache, config, phase, metrics)
            history.append(record)
            checkpoint_path = save_checkpoint(state, os.path.join(out_dir, checkpoint_name(state.epoch)))
            with open(history_path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(record.to_history(), sort_keys=True) + '\n')

    logger.info("✅ Treino concluído: %s", checkpoint_path)
    return FitResult(state, history, checkpoint_path, history_path, domain_report)
