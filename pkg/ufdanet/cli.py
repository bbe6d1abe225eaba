"""Linha de comando: ``ufdanet synth|train|eval|plot|serve``."""
import functools
import json
import logging
import os

import attrs
import click
import torch

from ufdanet.config import Config, build_run_config, echo_run_config, resolve_out_dir
from ufdanet.utils.errors import UfdanetError
from ufdanet.utils.log import configure_logging

logger = logging.getLogger(__name__)


def common_options(func):
    """Flags compartilhadas por todos os subcomandos de execução"""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                     show_default='configs padrão', help='Arquivo JSON de configuração'),
        click.option('--out', type=click.Path(file_okay=False), default=None, show_default='out_dir da config',
                     help=f'Diretório de saída (padrão: out_dir da config ou UFDANET_OUT={Config.OUT_ROOT})'),
        click.option('--seed', type=int, default=None, show_default='valor da config', help='Semente global'),
        click.option('--set', 'dotted', multiple=True, metavar='SECAO.CHAVE=VALOR',
                     help='Override pontual (valor em JSON), repetível'),
        click.option('--log-level', default=Config.LOG_LEVEL, show_default=True,
                     type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False)),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def handle_errors(func):
    """Converte erros do projeto em mensagem de uma linha e código de saída 1"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except UfdanetError as e:
            click.echo(f"❌ Erro ({e.code}): {e.message}", err=True)
            raise SystemExit(1)
        except OSError as e:
            click.echo(f"❌ Erro de E/S: {e}", err=True)
            raise SystemExit(1)

    return wrapper


def _prepare(config_path, out, seed, dotted, log_level, overrides=None) -> tuple[dict, str]:
    configure_logging(log_level)
    if Config.NUM_THREADS > 0:
        torch.set_num_threads(Config.NUM_THREADS)
    overrides = dict(overrides or {})
    if seed is not None:
        overrides['seed'] = seed
    config = build_run_config(config_path, overrides, dotted)
    out_dir = resolve_out_dir(config, out)
    config['out_dir'] = out_dir
    echo_run_config(config, out_dir)
    return config, out_dir


def _nested(section: str, **values) -> dict:
    present = {k: v for k, v in values.items() if v is not None}
    return {section: present} if present else {}


@click.group()
def cli():
    """UFDANet: anti-spoofing facial one-class (síntese, treino, avaliação)"""


# ==================== SYNTH ====================

@cli.command()
@common_options
@handle_errors
def synth(config_path, out, seed, dotted, log_level):
    """Gera o conjunto sintético live/spoof e o manifesto"""
    from ufdanet.services.synthetic import SynthConfig, generate_synthetic

    config, out_dir = _prepare(config_path, out, seed, dotted, log_level)
    manifest_path, records = generate_synthetic(SynthConfig.from_run_config(config), out_dir)
    click.echo(f"✅ Manifesto: {manifest_path} ({len(records)} amostras)")


# ==================== TRAIN ====================

@cli.command()
@common_options
@click.option('--manifest', type=click.Path(dir_okay=False), default=None, show_default='data.manifest',
              help='Manifesto CSV (sobrepõe data.manifest)')
@click.option('--epochs', type=int, default=None, show_default='train.epochs', help='T_max')
@click.option('--warmup', type=int, default=None, show_default='train.warmup_epochs',
              help='Épocas de aquecimento (só estágio 1)')
@click.option('--batch-size', type=int, default=None, show_default='train.batch_size')
@click.option('--resume', type=click.Path(dir_okay=False), default=None, show_default='nenhum',
              help='Checkpoint para retomar')
@handle_errors
def train(config_path, out, seed, dotted, log_level, manifest, epochs, warmup, batch_size, resume):
    """Treina o modelo (aquecimento, pré-treino de C_d e épocas de 4 estágios)"""
    from ufdanet.services.trainer import fit

    overrides = {
        **_nested('data', manifest=manifest),
        **_nested('train', epochs=epochs, warmup_epochs=warmup, batch_size=batch_size),
    }
    config, out_dir = _prepare(config_path, out, seed, dotted, log_level, overrides)
    result = fit(config, out_dir, resume_from=resume)
    click.echo(f"✅ Checkpoint final: {result.checkpoint_path}")
    click.echo(f"📄 Histórico: {result.history_path}")


# ==================== EVAL ====================

@cli.command(name='eval')
@common_options
@click.option('--manifest', type=click.Path(dir_okay=False), default=None, show_default='data.manifest',
              help='Manifesto CSV (sobrepõe data.manifest)')
@click.option('--checkpoint', type=click.Path(dir_okay=False), default=None, show_default='eval.checkpoint',
              help='Checkpoint a avaliar (sobrepõe eval.checkpoint)')
@click.option('--threshold-split', type=click.Choice(['test', 'dev']), default=None,
              show_default='eval.threshold_split',
              help='Split usado para escolher o limiar de Youden (padrão: eval.threshold_split)')
@handle_errors
def evaluate(config_path, out, seed, dotted, log_level, manifest, checkpoint, threshold_split):
    """Pontua o split de teste e grava relatório, ROC e pontuações"""
    from ufdanet.services.checkpoint import load_checkpoint
    from ufdanet.services.datakit import read_manifest, split_records
    from ufdanet.services.evalkit import diagnose_features, evaluate_run
    from ufdanet.utils.errors import InputError

    overrides = {
        **_nested('data', manifest=manifest),
        **_nested('eval', checkpoint=checkpoint, threshold_split=threshold_split),
    }
    config, out_dir = _prepare(config_path, out, seed, dotted, log_level, overrides)
    if not config['eval']['checkpoint']:
        raise InputError("Informe --checkpoint (ou eval.checkpoint)")
    if not config['data']['manifest']:
        raise InputError("Informe --manifest (ou data.manifest)")

    state = load_checkpoint(config['eval']['checkpoint'])
    records = read_manifest(config['data']['manifest'])
    result = evaluate_run(state, records, out_dir, config['eval']['threshold_split'],
                          config['eval']['batch_size'])

    diagnostics = diagnose_features(state, split_records(records, 'test'), config['eval']['batch_size'])
    diagnostics_path = os.path.join(out_dir, 'diagnostics.json')
    with open(diagnostics_path, 'w', encoding='utf-8') as f:
        json.dump(attrs.asdict(diagnostics), f, indent=2, sort_keys=True)
        f.write('\n')

    report = result.report
    click.echo(
        f"📊 AUC {report.auc:.4f} | tau {report.threshold:.4f} | APCER {report.apcer:.4f} | "
        f"BPCER {report.bpcer:.4f} | ACER {report.acer:.4f} | HTER {report.hter:.4f}"
    )
    click.echo(f"📄 Relatório: {result.paths['report']}")


# ==================== PLOT ====================

@cli.command()
@common_options
@click.option('--history', type=click.Path(dir_okay=False), default=None, show_default='<out>/history.jsonl',
              help='history.jsonl (padrão: <out>/history.jsonl)')
@handle_errors
def plot(config_path, out, seed, dotted, log_level, history):
    """Desenha as curvas de perda por estágio a partir do histórico"""
    from ufdanet.services.plotting import plot_history
    from ufdanet.services.trainer import HISTORY_FILE, load_history

    config, out_dir = _prepare(config_path, out, seed, dotted, log_level)
    history = history or os.path.join(out_dir, HISTORY_FILE)
    path = plot_history(load_history(history), os.path.join(out_dir, 'losses.png'))
    click.echo(f"📈 Curvas de perda: {path}")


# ==================== SERVE ====================

@cli.command()
@click.option('--checkpoint', type=click.Path(dir_okay=False), default=Config.CHECKPOINT,
              show_default='UFDANET_CHECKPOINT', help='Checkpoint servido (padrão: UFDANET_CHECKPOINT)')
@click.option('--threshold', type=float, default=Config.THRESHOLD, show_default=True,
              help='Limiar de decisão (padrão: UFDANET_THRESHOLD)')
@click.option('--host', default=os.getenv('HOST', '0.0.0.0'), show_default=True)
@click.option('--port', type=int, default=int(os.getenv('PORT', 8000)), show_default=True)
@click.option('--log-level', default=Config.LOG_LEVEL, show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
@handle_errors
def serve(checkpoint, threshold, host, port, log_level):
    """Sobe a API HTTP de pontuação"""
    from ufdanet import create_app

    configure_logging(log_level)
    app = create_app(checkpoint=checkpoint, threshold=threshold)
    logger.info("🚀 Servidor de pontuação em http://%s:%d (Swagger em /docs)", host, port)
    app.run(host=host, port=port, debug=Config.DEBUG)


def main():
    cli(prog_name='ufdanet')


if __name__ == '__main__':
    main()
