"""Figuras estáticas (PNG): curva ROC e curvas de perda por estágio."""
import logging
import os

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from ufdanet.utils.errors import InputError  # noqa: E402

logger = logging.getLogger(__name__)

# Sem data/versão nos metadados: a mesma entrada gera os mesmos bytes
PNG_METADATA = {'Software': None}


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_roc(roc, report, path: str) -> str:
    """ROC com o ponto do limiar de Youden marcado"""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(roc.fpr, roc.tpr, lw=2, label=f"ROC (AUC = {report.auc:.4f})")
    ax.plot([0, 1], [0, 1], '--', color='gray', lw=1)

    fpr_at = report.apcer
    tpr_at = 1.0 - report.bpcer
    ax.scatter([fpr_at], [tpr_at], color='red', zorder=3,
               label=f"Youden: tau = {report.threshold:.4f}")
    ax.set_xlabel('FPR (APCER)')
    ax.set_ylabel('TPR (1 - BPCER)')
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_title(f"ACER = {report.acer:.4f}")
    ax.legend(loc='lower right')
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_history(rows: list[dict], path: str) -> str:
    """
    Uma curva de perda total por estágio ao longo das épocas

    Raises:
        InputError: Histórico vazio
    """
    if not rows:
        raise InputError("Histórico vazio: nada para plotar")

    stages = sorted({stage for row in rows for stage in row['losses'] if row['losses'][stage]})
    fig, axes = plt.subplots(1, len(stages), figsize=(4 * len(stages), 3.5), squeeze=False)
    for ax, stage in zip(axes[0], stages):
        points = [(row['epoch'], row['losses'][stage]) for row in rows if row['losses'].get(stage)]
        for name in sorted(points[0][1]):
            ax.plot([e for e, _ in points], [losses.get(name) for _, losses in points],
                    marker='o', ms=3, label=name)
        ax.set_title(stage)
        ax.set_xlabel('época')
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7)
    fig.tight_layout()
    logger.info("📈 Curvas de perda: %d épocas, estágios %s", len(rows), ', '.join(stages))
    return _save(fig, path)
