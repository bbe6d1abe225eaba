"""Execuções completas no conjunto sintético (lentas, só com UFDANET_RUN_SLOW=1)"""
import os

import numpy as np
import pytest

from ufdanet.config import build_run_config
from ufdanet.services.datakit import read_manifest, split_records
from ufdanet.services.evalkit import diagnose_features, evaluate_run
from ufdanet.services.synthetic import SynthConfig, generate_synthetic
from ufdanet.services.trainer import fit

pytestmark = pytest.mark.slow

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'configs', 'default.json')
SEEDS = (0, 1, 2)

ABLATIONS = {
    'full': {},
    'without_domainaug': {'domainaug_mode': 'off', 'use_domain_entropy': False},
    'without_liveaug_and_domainaug': {
        'liveaug_mode': 'noise', 'use_mine': False,
        'domainaug_mode': 'off', 'use_domain_entropy': False,
    },
}


def run_once(root, seed: int, train_overrides: dict | None = None):
    config = build_run_config(DEFAULT_CONFIG, overrides={'seed': seed, 'train': train_overrides or {}})
    manifest_path, _ = generate_synthetic(SynthConfig.from_run_config(config), str(root / f'synth_{seed}'))
    config['data']['manifest'] = manifest_path

    name = '_'.join(f'{k}-{v}' for k, v in sorted((train_overrides or {}).items())) or 'full'
    run_dir = root / f'run_{seed}_{name}'
    result = fit(config, str(run_dir))

    records = read_manifest(manifest_path)
    evaluation = evaluate_run(result.state, records, str(run_dir / 'eval'))
    diagnostics = diagnose_features(result.state, split_records(records, 'test'))
    return evaluation.report, diagnostics


@pytest.fixture(scope='module')
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp('end_to_end')


@pytest.fixture(scope='module')
def full_runs(workdir):
    return [run_once(workdir, seed) for seed in SEEDS]


def test_default_run_meets_quality_gates(full_runs):
    reports = [report for report, _ in full_runs]
    diagnostics = [diag for _, diag in full_runs]

    assert np.mean([r.auc for r in reports]) >= 0.90
    assert np.mean([r.hter for r in reports]) <= 0.15
    assert np.mean([d.mean_abs_cos_l_d for d in diagnostics]) <= 0.15
    assert np.mean([d.mean_p_domain_dhat for d in diagnostics]) > np.mean([d.mean_p_domain_l for d in diagnostics])
    assert np.mean([d.mean_cos_ltilde_l for d in diagnostics]) <= 0.5


def test_ablation_ordering(workdir, full_runs):
    mean_auc = {'full': np.mean([report.auc for report, _ in full_runs])}
    for name in ('without_domainaug', 'without_liveaug_and_domainaug'):
        mean_auc[name] = np.mean([run_once(workdir, seed, ABLATIONS[name])[0].auc for seed in SEEDS])

    assert mean_auc['full'] >= mean_auc['without_domainaug'] >= mean_auc['without_liveaug_and_domainaug']
    assert mean_auc['full'] - mean_auc['without_liveaug_and_domainaug'] >= 0.03
