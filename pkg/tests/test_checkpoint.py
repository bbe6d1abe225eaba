import numpy as np
import pytest
import torch

from ufdanet.models.state import changed_groups
from ufdanet.services.checkpoint import checkpoint_name, load_checkpoint, save_checkpoint
from ufdanet.services.evalkit import score
from ufdanet.services.trainer import train_epoch
from ufdanet.utils.errors import CheckpointError, DimensionError


@pytest.fixture
def trained_state(tiny_state, toy_batches, train_config):
    tiny_state.freeze_domain_head()
    train_epoch(tiny_state, toy_batches, train_config, phase='full')
    return tiny_state


def test_checkpoint_name():
    assert checkpoint_name(3) == 'ckpt_epoch3.pt'


def test_save_load_save_is_byte_identical(trained_state, tmp_path):
    first = save_checkpoint(trained_state, str(tmp_path / 'a' / 'ckpt.pt'))
    restored = load_checkpoint(first)
    second = save_checkpoint(restored, str(tmp_path / 'b' / 'other_name.pt'))
    with open(first, 'rb') as a, open(second, 'rb') as b:
        assert a.read() == b.read()


def test_round_trip_restores_everything(trained_state, tmp_path):
    path = save_checkpoint(trained_state, str(tmp_path / 'ckpt.pt'))
    restored = load_checkpoint(path)

    assert changed_groups(trained_state.parameter_snapshot(), restored.parameter_snapshot()) == set()
    assert restored.epoch == trained_state.epoch == 1
    assert restored.global_step == trained_state.global_step
    assert restored.domain_head_frozen
    assert restored.run_config == trained_state.run_config
    assert torch.equal(restored.generator.get_state(), trained_state.generator.get_state())

    assert len(restored.bank) == len(trained_state.bank)
    assert [e.order for e in restored.bank.entries] == [e.order for e in trained_state.bank.entries]
    assert torch.equal(restored.bank.vectors(), trained_state.bank.vectors())

    original_adam = trained_state.optimizers['encoder'].state_dict()['state']
    restored_adam = restored.optimizers['encoder'].state_dict()['state']
    assert original_adam.keys() == restored_adam.keys()
    for key in original_adam:
        assert torch.equal(original_adam[key]['exp_avg'], restored_adam[key]['exp_avg'])


def test_scores_are_identical_after_reload(trained_state, tmp_path):
    image = np.random.default_rng(0).uniform(size=(48, 48, 3)).astype(np.float32)
    before = score(trained_state, image, (8, 8, 30, 30))
    restored = load_checkpoint(save_checkpoint(trained_state, str(tmp_path / 'ckpt.pt')))
    assert score(restored, image, (8, 8, 30, 30)) == before


def test_wrong_latent_dimension(trained_state, tmp_path):
    path = save_checkpoint(trained_state, str(tmp_path / 'ckpt.pt'))
    with pytest.raises(DimensionError):
        load_checkpoint(path, expected_dims={'latent_dim': 64})


def test_missing_corrupt_and_wrong_version(trained_state, tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'missing.pt'))

    corrupt = tmp_path / 'corrupt.pt'
    corrupt.write_bytes(b'not a checkpoint')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(corrupt))

    path = save_checkpoint(trained_state, str(tmp_path / 'ckpt.pt'))
    payload = torch.load(path, weights_only=True)
    payload['manifest']['format_version'] = 99
    torch.save(payload, str(tmp_path / 'future.pt'))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'future.pt'))


def test_resumed_state_continues_identically(trained_state, toy_batches, train_config, tmp_path):
    restored = load_checkpoint(save_checkpoint(trained_state, str(tmp_path / 'ckpt.pt')))
    original_record = train_epoch(trained_state, toy_batches, train_config, phase='full')
    restored_record = train_epoch(restored, toy_batches, train_config, phase='full')
    assert original_record == restored_record
    assert changed_groups(trained_state.parameter_snapshot(), restored.parameter_snapshot()) == set()
