"""Pontuação de inferência e métricas PAD: ROC, AUC, limiar de Youden, APCER/BPCER/ACER/HTER.

Convenção: rótulo 1 = live (bona fide), 0 = ataque; a decisão é live se
``s >= tau``. HTER usa FAR = APCER e FRR = BPCER (um único tipo de ataque).
"""
import json
import logging
import os
from typing import Sequence

import attrs
import numpy as np
import torch
from sklearn import metrics

from ufdanet.models.state import ModelState
from ufdanet.services import domainaug, liveaug
from ufdanet.services.datakit import LIVE, SPOOF, PatchCache, SampleRecord, crop_foreground, split_records
from ufdanet.services.plotting import plot_roc
from ufdanet.services.ufd import rowwise_cosine
from ufdanet.utils.errors import InputError
from ufdanet.utils.seeding import torch_generator

logger = logging.getLogger(__name__)

HTER_MAPPING = 'FAR = APCER, FRR = BPCER (um único tipo de ataque por execução)'
REPORT_FILE = 'report.json'
ROC_FILE = 'roc.png'


# ==================== TIPOS ====================

def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


@attrs.frozen(eq=False)
class ScoreSet:
    """Pontuações de um split; rótulos 1 = live, 0 = ataque"""

    scores: np.ndarray = attrs.field(converter=_as_array)
    labels: np.ndarray = attrs.field(converter=lambda v: np.asarray(v, dtype=np.int64))
    split: str = 'test'
    sample_ids: list[str] = attrs.field(factory=list)

    def __attrs_post_init__(self):
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise InputError(
                f"scores e labels devem ser vetores do mesmo tamanho: {self.scores.shape} vs {self.labels.shape}"
            )
        if self.sample_ids and len(self.sample_ids) != len(self.scores):
            raise InputError("sample_ids com tamanho diferente das pontuações")
        if not np.isin(self.labels, (0, 1)).all():
            raise InputError("labels devem ser 0 (ataque) ou 1 (live)")
        if ((self.scores < 0) | (self.scores > 1)).any():
            raise InputError("Pontuações devem estar em [0, 1]")

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def n_live(self) -> int:
        return int((self.labels == 1).sum())

    @property
    def n_attack(self) -> int:
        return int((self.labels == 0).sum())

    def require_both_labels(self) -> None:
        if self.n_live == 0 or self.n_attack == 0:
            raise InputError(
                f"Split '{self.split}' precisa de amostras live e ataque "
                f"(live={self.n_live}, ataque={self.n_attack})"
            )


@attrs.frozen(eq=False)
class RocCurve:
    """Pontos em ordem de limiar decrescente; o primeiro limiar é a sentinela +inf"""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def points(self) -> list[tuple[float, float, float]]:
        return [(float(f), float(t), float(h)) for f, t, h in zip(self.fpr, self.tpr, self.thresholds)]


@attrs.frozen
class MetricsReport:
    auc: float
    threshold: float
    youden_j: float
    apcer: float
    bpcer: float
    acer: float
    hter: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_live: int
    n_attack: int
    threshold_split: str = 'test'

    def to_dict(self) -> dict:
        data = attrs.asdict(self)
        data['hter_mapping'] = HTER_MAPPING
        data['decision_rule'] = 'live se score >= threshold'
        return data


@attrs.frozen
class FeatureDiagnostics:
    mean_abs_cos_l_d: float
    mean_p_domain_dhat: float
    mean_p_domain_l: float
    mean_cos_ltilde_l: float
    n_samples: int


# ==================== PONTUAÇÃO ====================

def _patch_tensor(patches: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(patches.astype(np.float32) / 255.0).permute(0, 3, 1, 2).contiguous()


def _liveness_scores(state: ModelState, patches: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        return state.classify_liveness(state.extract_liveness(state.encode(patches)))


def score(state: ModelState, image: np.ndarray, face_box: Sequence[int] | None) -> float:
    """
    Probabilidade de liveness de uma imagem (rosto sem máscara)

    Raises:
        InputError: ``face_box`` ausente ou fora da imagem
    """
    if face_box is None:
        raise InputError("face_box é obrigatório para pontuar uma imagem")
    face = crop_foreground(image, face_box, state.dims['patch_size'])
    patch = np.rint(face * 255.0).astype(np.uint8)[None]
    return float(_liveness_scores(state, _patch_tensor(patch))[0])


def score_records(state: ModelState, records: Sequence[SampleRecord], batch_size: int = 128,
                  split: str = 'test') -> ScoreSet:
    """Pontua registros do manifesto em lotes"""
    cache = PatchCache.from_records(list(records), state.dims['patch_size'], with_background=False)
    scores = []
    for start in range(0, len(cache), batch_size):
        scores.append(_liveness_scores(state, _patch_tensor(cache.fg[start:start + batch_size])))
    values = torch.cat(scores).double().numpy()
    labels = [1 if r.label == LIVE else 0 for r in records]
    return ScoreSet(values, labels, split, [r.sample_id for r in records])


# ==================== CURVAS E LIMIAR ====================

def roc_curve(score_set: ScoreSet) -> RocCurve:
    """
    ROC varrendo todas as pontuações únicas (sem descartar pontos intermediários)

    Raises:
        InputError: Apenas uma classe presente
    """
    score_set.require_both_labels()
    fpr, tpr, thresholds = metrics.roc_curve(
        score_set.labels, score_set.scores, pos_label=1, drop_intermediate=False
    )
    return RocCurve(fpr, tpr, thresholds)


def auc(roc: RocCurve) -> float:
    """Área trapezoidal (igual à probabilidade de ranqueamento com empates valendo 0.5)"""
    return float(metrics.auc(roc.fpr, roc.tpr))


def youden_threshold(roc: RocCurve) -> tuple[float, float]:
    """
    Limiar que maximiza J = TPR - FPR

    Empates ficam com o menor limiar. O ``tau`` devolvido é o ponto médio
    entre a pontuação do corte e a próxima pontuação única abaixo dela (0.0
    abaixo da menor).

    Returns:
        tuple: (tau, J)
    """
    j = roc.tpr - roc.fpr
    best = float(j.max())
    index = int(np.flatnonzero(j >= best - 1e-12)[-1])
    index = max(index, 1)
    cut = float(roc.thresholds[index])
    lower = float(roc.thresholds[index + 1]) if index + 1 < len(roc.thresholds) else 0.0
    return (cut + lower) / 2.0, best


def pad_metrics(score_set: ScoreSet, tau: float, threshold_split: str = 'test',
                youden_j: float | None = None) -> MetricsReport:
    """
    APCER, BPCER, ACER e HTER no limiar ``tau``

    Raises:
        InputError: ``tau`` fora de [0, 1] ou apenas uma classe presente
    """
    if not 0.0 <= tau <= 1.0:
        raise InputError(f"Limiar deve estar em [0, 1]: {tau}")
    roc = roc_curve(score_set)
    predicted = (score_set.scores >= tau).astype(np.int64)
    tn, fp, fn, tp = metrics.confusion_matrix(score_set.labels, predicted, labels=[0, 1]).ravel()
    apcer = fp / score_set.n_attack
    bpcer = fn / score_set.n_live
    acer = (apcer + bpcer) / 2.0
    return MetricsReport(
        auc=auc(roc),
        threshold=float(tau),
        youden_j=float(youden_j) if youden_j is not None else float(tp / score_set.n_live - apcer),
        apcer=float(apcer),
        bpcer=float(bpcer),
        acer=float(acer),
        hter=float(acer),
        tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn),
        n_live=score_set.n_live,
        n_attack=score_set.n_attack,
        threshold_split=threshold_split,
    )


# ==================== DIAGNÓSTICO ====================

def diagnose_features(state: ModelState, records: Sequence[SampleRecord],
                      batch_size: int = 128) -> FeatureDiagnostics:
    """Estatísticas de features em amostras live (desentrelaçamento, GIN e OOD)"""
    live = [r for r in records if r.label == LIVE]
    if not live:
        raise InputError("Diagnóstico exige ao menos uma amostra live")
    train = (state.run_config or {}).get('train', {})
    liveaug_mode = train.get('liveaug_mode', 'adaptor')
    domainaug_mode = train.get('domainaug_mode', 'gin')
    generator = torch_generator(state.seed, 99)

    cache = PatchCache.from_records(live, state.dims['patch_size'], with_background=False)
    abs_cos, p_dhat, p_l, cos_tilde = [], [], [], []
    with torch.no_grad():
        for start in range(0, len(cache), batch_size):
            f = state.encode(_patch_tensor(cache.fg[start:start + batch_size]))
            l = state.extract_liveness(f)
            d = state.extract_domain(f)
            if liveaug_mode == 'noise':
                l_tilde = liveaug.noise_features(l, generator)
            else:
                l_tilde = liveaug.adapt(state['adaptor'], l, generator)
            d_hat = domainaug.gin_forward(state['gin'], state['condition_generator'], d,
                                          generator, mode=domainaug_mode).d_hat
            abs_cos.append(rowwise_cosine(l, d).abs())
            p_dhat.append(state.classify_domain(d_hat))
            p_l.append(state.classify_domain(l))
            cos_tilde.append(rowwise_cosine(l_tilde, l))

    def mean(parts):
        return float(torch.cat(parts).double().mean())

    return FeatureDiagnostics(mean(abs_cos), mean(p_dhat), mean(p_l), mean(cos_tilde), len(live))


# ==================== ARQUIVOS ====================

def write_score_dump(score_set: ScoreSet, path: str) -> str:
    """Uma linha por amostra: ``sample_id<TAB>label<TAB>score``"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    ids = score_set.sample_ids or [str(i) for i in range(len(score_set))]
    with open(path, 'w', encoding='utf-8') as f:
        f.write('sample_id\tlabel\tscore\n')
        for sample_id, label, value in zip(ids, score_set.labels, score_set.scores):
            f.write(f"{sample_id}\t{LIVE if label == 1 else SPOOF}\t{float(value)!r}\n")
    return path


def read_score_dump(path: str, split: str = 'test') -> ScoreSet:
    if not os.path.exists(path):
        raise InputError(f"Arquivo de pontuações não encontrado: {path}")
    ids, labels, scores = [], [], []
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().rstrip('\n').split('\t')
        if header != ['sample_id', 'label', 'score']:
            raise InputError(f"Cabeçalho inválido em {path}: {header}")
        for line_no, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                sample_id, label, value = line.rstrip('\n').split('\t')
                ids.append(sample_id)
                labels.append({LIVE: 1, SPOOF: 0}[label])
                scores.append(float(value))
            except (ValueError, KeyError) as e:
                raise InputError(f"Linha {line_no} inválida em {path}: {line.strip()}") from e
    return ScoreSet(scores, labels, split, ids)


def emit_report(report: MetricsReport, out_dir: str, roc: RocCurve | None = None) -> dict[str, str]:
    """
    Grava ``report.json`` e, com a ROC, ``roc.png`` (sobrescreve)

    Returns:
        dict: Caminhos gravados
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {'report': os.path.join(out_dir, REPORT_FILE)}
    with open(paths['report'], 'w', encoding='utf-8') as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')
    if roc is not None:
        paths['roc'] = plot_roc(roc, report, os.path.join(out_dir, ROC_FILE))
    return paths


@attrs.frozen(eq=False)
class EvalResult:
    report: MetricsReport
    test_scores: ScoreSet
    threshold_scores: ScoreSet
    paths: dict


def evaluate_run(state: ModelState, records: Sequence[SampleRecord], out_dir: str,
                 threshold_split: str = 'test', batch_size: int = 128) -> EvalResult:
    """
    Avaliação completa: limiar de Youden no split escolhido, métricas no teste

    Raises:
        InputError: Split sem as duas classes
    """
    test_records = split_records(records, 'test')
    if not test_records:
        raise InputError("Manifesto sem split de teste")
    test_scores = score_records(state, test_records, batch_size, 'test')
    test_scores.require_both_labels()

    if threshold_split == 'test':
        threshold_scores = test_scores
    elif threshold_split == 'dev':
        dev_records = split_records(records, 'dev')
        if not dev_records:
            raise InputError("threshold_split=dev, mas o manifesto não tem split dev")
        threshold_scores = score_records(state, dev_records, batch_size, 'dev')
    else:
        raise InputError(f"threshold_split desconhecido: {threshold_split}")

    tau, j = youden_threshold(roc_curve(threshold_scores))
    report = pad_metrics(test_scores, tau, threshold_split, youden_j=j)
    paths = emit_report(report, out_dir, roc_curve(test_scores))
    paths['scores_test'] = write_score_dump(test_scores, os.path.join(out_dir, 'scores_test.tsv'))
    if threshold_split == 'dev':
        paths['scores_dev'] = write_score_dump(threshold_scores, os.path.join(out_dir, 'scores_dev.tsv'))

    logger.info(
        "📊 AUC %.4f | tau %.4f (%s) | APCER %.4f | BPCER %.4f | ACER %.4f",
        report.auc, report.threshold, threshold_split, report.apcer, report.bpcer, report.acer,
    )
    return EvalResult(report, test_scores, threshold_scores, paths)
