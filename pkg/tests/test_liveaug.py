import math

import pytest
import torch

from conftest import check_finite_differences, unit_rows
from ufdanet.models.augmenters import FeatureAdaptor, affine_perturb
from ufdanet.models.nets import BinaryHead
from ufdanet.services.liveaug import (
    MemoryBank,
    adapt,
    bank_candidates,
    liveaug_total,
    loss_mine,
    loss_pres,
    loss_unl,
    mask_feature,
    noise_features,
)
from ufdanet.utils.errors import DegenerateError, InputError


# ==================== ADAPTADOR ====================

def test_degenerate_noise_with_identity_map_returns_input():
    l = unit_rows(4, 8, dtype=torch.float32)
    zeros = torch.zeros(8)
    eps = torch.randn(4, 8)
    out = affine_perturb(l, torch.eye(8), zeros, zeros, eps, eps)
    assert torch.equal(out, l)


def test_two_dimensional_worked_example():
    l = torch.tensor([0.6, 0.8])
    out = affine_perturb(
        l, torch.eye(2),
        s_c=torch.tensor([0.0, 0.0]), b_c=torch.tensor([1.0, 0.0]),
        eps_scale=torch.tensor([0.3, -1.2]), eps_bias=torch.tensor([0.5, 0.7]),
    )
    assert torch.allclose(out, l + torch.tensor([0.5, 0.0]))


def test_adapt_is_deterministic_per_generator_and_unit_norm():
    adaptor = FeatureAdaptor(8)
    l = unit_rows(4, 8, dtype=torch.float32)
    a = adapt(adaptor, l, torch.Generator().manual_seed(3))
    b = adapt(adaptor, l, torch.Generator().manual_seed(3))
    assert torch.equal(a, b)
    assert torch.allclose(a.norm(dim=-1), torch.ones(4), atol=1e-6)


def test_adaptor_noise_parameters_receive_gradients():
    adaptor = FeatureAdaptor(8)
    l = unit_rows(4, 8, dtype=torch.float32)
    out = adapt(adaptor, l, torch.Generator().manual_seed(0))
    (out * torch.randn(4, 8)).sum().backward()
    assert adaptor.scale_raw.grad is not None and adaptor.scale_raw.grad.abs().sum() > 0
    assert adaptor.bias_raw.grad is not None and adaptor.bias_raw.grad.abs().sum() > 0
    assert (adaptor.scale_std >= 0).all() and (adaptor.bias_std >= 0).all()


def test_noise_features_are_unit_vectors():
    like = torch.zeros(5, 8)
    out = noise_features(like, torch.Generator().manual_seed(0))
    assert torch.allclose(out.norm(dim=-1), torch.ones(5), atol=1e-6)


# ==================== PERDAS ====================

def test_loss_unl_examples():
    a = unit_rows(4, 8)
    assert loss_unl(a, a).item() == pytest.approx(1.0, abs=1e-12)
    assert loss_unl(torch.tensor([[1.0, 0.0]]), torch.tensor([[0.0, 1.0]])).item() == pytest.approx(0.0)
    assert loss_unl(a, -a).item() == pytest.approx(-1.0, abs=1e-12)


def test_loss_unl_does_not_reach_live_view():
    a = unit_rows(4, 8).requires_grad_(True)
    b = unit_rows(4, 8, seed=1).requires_grad_(True)
    loss_unl(a, b).backward()
    assert a.grad is not None
    assert b.grad is None


def test_loss_pres_examples():
    assert loss_pres(torch.tensor([1 - 1e-7]), torch.tensor([1e-7])).item() < 1e-6
    half = torch.tensor([0.5], dtype=torch.float64)
    assert loss_pres(half, half).item() == pytest.approx(2 * math.log(2), abs=1e-6)
    value = loss_pres(torch.tensor([0.9], dtype=torch.float64), torch.tensor([0.1], dtype=torch.float64))
    assert value.item() == pytest.approx(0.2107, abs=1e-4)
    assert value.item() == pytest.approx(-2 * math.log(0.9), abs=1e-12)


def test_loss_mine_empty_bank_is_zero_and_connected():
    l = unit_rows(3, 8).requires_grad_(True)
    value = loss_mine(l, l, MemoryBank(capacity=4))
    assert value.item() == 0.0
    value.backward()
    assert l.grad is not None


def test_loss_mine_examples():
    l = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    orthogonal = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    assert loss_mine(l, l, orthogonal).item() == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-6)
    assert loss_mine(l, l, orthogonal).item() == pytest.approx(0.3133, abs=1e-4)
    assert loss_mine(l, l, l.clone()).item() == pytest.approx(math.log(2), abs=1e-6)


def test_loss_mine_accepts_memory_bank():
    bank = MemoryBank(capacity=4, delta=1.0)
    bank.try_insert(torch.tensor([0.0, 1.0], dtype=torch.float64))
    l = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    assert loss_mine(l, l, bank).item() == pytest.approx(0.3133, abs=1e-4)


def test_liveaug_total_examples():
    zero = torch.zeros(())
    assert liveaug_total(zero, zero, zero).item() == 0.0
    total = liveaug_total(torch.tensor(0.5, dtype=torch.float64), torch.tensor(1.0, dtype=torch.float64),
                          torch.tensor(2.0, dtype=torch.float64), lambda2=0.1)
    assert total.item() == pytest.approx(1.7, abs=1e-12)
    a = liveaug_total(zero, zero, torch.tensor(3.0), lambda2=0.0)
    b = liveaug_total(zero, zero, torch.tensor(30.0), lambda2=0.0)
    assert a.item() == b.item()


def test_gradcheck_loss_mine_and_loss_pres():
    entries = unit_rows(3, 8, seed=5)
    l = unit_rows(2, 8, seed=6).requires_grad_(True)
    l_m = unit_rows(2, 8, seed=7).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda a, b: loss_mine(a, b, entries), (l, l_m), eps=1e-6, atol=1e-5)

    p_live = torch.tensor([0.3, 0.8], dtype=torch.float64, requires_grad=True)
    p_aug = torch.tensor([0.6, 0.2], dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(loss_pres, (p_live, p_aug), eps=1e-6, atol=1e-5)


@pytest.mark.parametrize('term', ['unl', 'pres', 'mine'])
def test_adaptor_parameters_match_finite_differences(term):
    torch.manual_seed(0)
    adaptor = FeatureAdaptor(8)
    head = BinaryHead(8)
    l = unit_rows(5, 8, seed=1, dtype=torch.float32)
    l_t = unit_rows(5, 8, seed=2, dtype=torch.float32)
    entries = unit_rows(4, 8, seed=3, dtype=torch.float32)
    p_live = torch.full((5,), 0.7)

    def loss():
        generator = torch.Generator().manual_seed(11)
        l_tilde = adapt(adaptor, l, generator)
        if term == 'unl':
            return loss_unl(l_tilde, l_t)
        if term == 'pres':
            return loss_pres(p_live, head(l_tilde))
        return loss_mine(l_tilde, mask_feature(l_tilde, 0.25, generator), entries)

    check_finite_differences(loss, adaptor.parameters())


# ==================== MÁSCARA DE FEATURE ====================

def test_mask_feature_ratio_zero_is_identity():
    l = unit_rows(3, 8)
    assert torch.allclose(mask_feature(l, 0.0, torch.Generator().manual_seed(0)), l, atol=1e-12)


def test_mask_feature_zeroes_exact_count():
    l = unit_rows(5, 64, dtype=torch.float32)
    out = mask_feature(l, 0.25, torch.Generator().manual_seed(1))
    assert ((out == 0).sum(dim=-1) == 16).all()
    assert torch.allclose(out.norm(dim=-1), torch.ones(5), atol=1e-6)


def test_mask_feature_is_deterministic_per_seed():
    l = unit_rows(5, 64, dtype=torch.float32)
    a = mask_feature(l, 0.25, torch.Generator().manual_seed(2))
    b = mask_feature(l, 0.25, torch.Generator().manual_seed(2))
    assert torch.equal(a, b)


def test_mask_feature_rejects_bad_ratio_and_empty_result():
    l = unit_rows(1, 10)[0]
    with pytest.raises(InputError):
        mask_feature(l, 0.95)

    sparse = torch.zeros(10, dtype=torch.float64)
    sparse[0] = 1.0
    raised = 0
    for seed in range(30):
        try:
            out = mask_feature(sparse, 0.9, torch.Generator().manual_seed(seed))
            assert torch.equal(out, sparse)
        except DegenerateError:
            raised += 1
    assert raised > 0


def test_bank_candidates_policies():
    l = unit_rows(4, 8)
    per_batch = bank_candidates(l, 'per_batch', torch.Generator().manual_seed(0))
    assert len(per_batch) == 1
    assert any(torch.equal(per_batch[0], row) for row in l)
    per_sample = bank_candidates(l, 'per_sample')
    assert len(per_sample) == 4 and all(torch.equal(a, b) for a, b in zip(per_sample, l))
    with pytest.raises(InputError):
        bank_candidates(l, 'per_epoch')
