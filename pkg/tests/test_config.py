import json
import os

import pytest

from conftest import SMOKE_CONFIG
from ufdanet.config import DEFAULT_RUN_CONFIG, build_run_config, echo_run_config, parse_override, resolve_out_dir
from ufdanet.utils.errors import InputError


def test_defaults_are_valid_and_not_shared():
    config = build_run_config()
    assert config == DEFAULT_RUN_CONFIG
    config['train']['epochs'] = 1
    assert DEFAULT_RUN_CONFIG['train']['epochs'] == 30


def test_file_values_override_defaults():
    config = build_run_config(SMOKE_CONFIG)
    assert config['model']['latent_dim'] == 8
    assert config['train']['lambda1'] == 1e-3
    assert config['train']['learning_rates']['gin'] == 1e-3


def test_precedence_file_then_dotted_then_flags():
    config = build_run_config(
        SMOKE_CONFIG,
        overrides={'train': {'epochs': 5}},
        dotted=['train.epochs=4', 'train.delta=0.3', 'train.dis_mode=absolute'],
    )
    assert config['train']['epochs'] == 5
    assert config['train']['delta'] == 0.3
    assert config['train']['dis_mode'] == 'absolute'


def test_parse_override():
    assert parse_override('train.lambda2=0.2') == (['train', 'lambda2'], 0.2)
    assert parse_override('train.rec_loss=l2') == (['train', 'rec_loss'], 'l2')
    with pytest.raises(InputError):
        parse_override('train.lambda2')


@pytest.mark.parametrize('dotted', [
    'train.unknown=1',
    'train.delta=0',
    'train.batch_size=1',
    'data.mask_ratio=0.95',
    'train.learning_rates.adaptor=-0.1',
    'nope.key=1',
])
def test_invalid_values_are_rejected(dotted):
    with pytest.raises(InputError):
        build_run_config(dotted=[dotted])


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(InputError, match='missing.json'):
        build_run_config(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"seed": ', encoding='utf-8')
    with pytest.raises(InputError):
        build_run_config(str(bad))
    listing = tmp_path / 'list.json'
    listing.write_text('[1, 2]', encoding='utf-8')
    with pytest.raises(InputError):
        build_run_config(str(listing))


def test_out_dir_resolution_and_echo(tmp_path):
    config = build_run_config()
    assert resolve_out_dir(config, str(tmp_path)) == str(tmp_path)
    config['out_dir'] = 'from_config'
    assert resolve_out_dir(config) == 'from_config'

    path = echo_run_config(config, str(tmp_path / 'run'))
    assert os.path.basename(path) == 'config.json'
    with open(path, encoding='utf-8') as f:
        assert json.load(f) == config
