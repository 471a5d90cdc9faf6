import pytest
import torch
import torch.nn.functional as F

from layermix.pooling import ClassifierHead, EmptyPoolError, ScalarMix, cls_pool, scalar_mix_pool


def hand_case():
    values = torch.tensor(
        [
            [[1.0, 0.0], [3.0, 2.0]],  # layer 0, token means -> [2, 1]
            [[0.0, 2.0], [2.0, 0.0]],  # layer 1, token means -> [1, 1]
        ]
    )
    include = torch.tensor([1, 1])
    lambdas = torch.tensor([2.0, 4.0])
    return values, include, lambdas


def test_hand_computed_example():
    values, include, lambdas = hand_case()
    y = scalar_mix_pool(values, include, lambdas, mode="corrected")
    assert torch.allclose(y, torch.tensor([4.0, 3.0]), atol=1e-7)


def test_hand_example_literal_mode():
    values, include, lambdas = hand_case()
    y = scalar_mix_pool(values, include, lambdas, mode="paper_literal")
    assert torch.allclose(y, torch.tensor([8.0, 6.0]), atol=1e-7)


def test_zero_lambdas_zero_output():
    values, include, _ = hand_case()
    y = scalar_mix_pool(values, include, torch.zeros(2))
    assert torch.equal(y, torch.zeros(2))


def test_constant_states_average_to_themselves():
    v = torch.tensor([0.5, -1.5, 2.0])
    values = v.expand(4, 6, 3).clone()
    include = torch.ones(6, dtype=torch.long)
    y = scalar_mix_pool(values, include, torch.ones(4), mode="corrected")
    assert torch.allclose(y, v, atol=1e-6)


def test_excluded_positions_do_not_leak():
    values, include, lambdas = hand_case()
    poisoned = values.clone()
    extra = torch.cat([poisoned, torch.full((2, 1, 2), 1e6)], dim=1)
    include3 = torch.tensor([1, 1, 0])
    y = scalar_mix_pool(extra, include3, lambdas)
    assert torch.allclose(y, torch.tensor([4.0, 3.0]), atol=1e-6)


def test_empty_pool_rejected():
    values, _, lambdas = hand_case()
    with pytest.raises(EmptyPoolError):
        scalar_mix_pool(values, torch.zeros(2, dtype=torch.long), lambdas)


def test_length_mismatch_rejected():
    values, include, _ = hand_case()
    with pytest.raises(ValueError):
        scalar_mix_pool(values, include, torch.ones(3))


def test_literal_mode_undefined_for_single_layer():
    values = torch.randn(1, 4, 3)
    include = torch.ones(4, dtype=torch.long)
    with pytest.raises(ValueError):
        scalar_mix_pool(values, include, torch.ones(1), mode="paper_literal")


def test_bilinearity_over_random_draws():
    g = torch.Generator().manual_seed(77)
    for _ in range(100):
        h1 = torch.randn(3, 5, 4, generator=g)
        h2 = torch.randn(3, 5, 4, generator=g)
        lam = torch.randn(3, generator=g)
        mu = torch.randn(3, generator=g)
        include = torch.tensor([1, 1, 1, 0, 0])
        a, b = 0.7, -1.3
        left = scalar_mix_pool(a * h1 + b * h2, include, lam)
        right = a * scalar_mix_pool(h1, include, lam) + b * scalar_mix_pool(h2, include, lam)
        assert torch.allclose(left, right, atol=1e-6)
        left = scalar_mix_pool(h1, include, a * lam + b * mu)
        right = a * scalar_mix_pool(h1, include, lam) + b * scalar_mix_pool(h1, include, mu)
        assert torch.allclose(left, right, atol=1e-6)


def test_doubling_lambdas_doubles_output_exactly():
    values, include, lambdas = hand_case()
    y1 = scalar_mix_pool(values, include, lambdas)
    y2 = scalar_mix_pool(values, include, 2.0 * lambdas)
    assert torch.equal(y2, 2.0 * y1)


def test_single_layer_single_token_reduction():
    v = torch.tensor([1.5, -2.0, 0.25])
    values = v.reshape(1, 1, 3)
    include = torch.ones(1, dtype=torch.long)
    lam = torch.tensor([3.0])
    y = scalar_mix_pool(values, include, lam, mode="corrected")
    assert torch.allclose(y, 3.0 * v, atol=1e-7)


def test_lambda_gradient_is_scaled_layer_mean():
    g = torch.Generator().manual_seed(5)
    values = torch.randn(4, 6, 8, generator=g, dtype=torch.float64)
    include = torch.tensor([1, 1, 1, 1, 0, 0])
    lam = torch.randn(4, generator=g, dtype=torch.float64).requires_grad_(True)
    u = torch.randn(8, generator=g, dtype=torch.float64)
    (scalar_mix_pool(values, include, lam) @ u).backward()
    token_mean = values[:, :4, :].mean(dim=1)
    analytic = (token_mean @ u) / 4.0
    assert torch.allclose(lam.grad, analytic, rtol=1e-10, atol=1e-12)
    # and against central finite differences
    eps = 1e-6
    for j in range(4):
        lp = lam.detach().clone()
        lm = lam.detach().clone()
        lp[j] += eps
        lm[j] -= eps
        fd = (
            (scalar_mix_pool(values, include, lp) @ u) - (scalar_mix_pool(values, include, lm) @ u)
        ) / (2 * eps)
        rel = abs(fd.item() - lam.grad[j].item()) / max(abs(fd.item()), 1e-12)
        assert rel < 1e-4


def test_cls_pool_takes_final_layer_position_zero():
    values = torch.arange(24.0).reshape(2, 4, 3)
    assert torch.equal(cls_pool(values), values[-1, 0, :])
    batched = values.unsqueeze(0).expand(5, 2, 4, 3)
    assert torch.equal(cls_pool(batched), batched[:, -1, 0, :])


def test_cls_pool_differs_from_scalar_mix_on_random_states():
    g = torch.Generator().manual_seed(9)
    values = torch.randn(3, 6, 4, generator=g)
    include = torch.tensor([1, 1, 1, 1, 1, 0])
    mixed = scalar_mix_pool(values, include, torch.ones(3))
    assert not torch.allclose(mixed, cls_pool(values), atol=1e-3)


def test_scalar_mix_module_modes():
    mix = ScalarMix(num_layers=2)
    assert mix.lambdas.shape == (3,)
    assert torch.equal(mix.mixing_weights(), mix.lambdas)
    soft = ScalarMix(num_layers=2, softmax_normalize=True)
    weights = soft.mixing_weights()
    assert torch.allclose(weights.sum(), torch.tensor(1.0), atol=1e-6)
    with pytest.raises(ValueError):
        ScalarMix(num_layers=2, mode="bogus")


def test_head_zero_weights_gives_bias():
    head = ClassifierHead(4, 3)
    with torch.no_grad():
        head.hidden.weight.zero_()
        head.hidden.bias.zero_()
        head.out.weight.zero_()
        head.out.bias.copy_(torch.tensor([0.5, -1.0, 2.0]))
    logits = head(torch.randn(6, 4))
    assert torch.allclose(logits, torch.tensor([0.5, -1.0, 2.0]).expand(6, 3))


def test_head_matches_manual_arithmetic():
    g = torch.Generator().manual_seed(3)
    head = ClassifierHead(5, 2, hidden_dim=7)
    y = torch.randn(5, generator=g)
    manual = head.out.weight @ F.gelu(head.hidden.weight @ y + head.hidden.bias) + head.out.bias
    assert torch.allclose(head(y), manual, atol=1e-6)


def test_argmax_shift_invariance():
    logits = torch.tensor([0.2, -1.1, 3.0])
    shifted = logits + 17.5
    assert logits.argmax() == shifted.argmax()
