"""Sequence pooling: trainable weighted layer averaging and the CLS baseline.

The scalar-mix pool turns the full hidden-state stack into one vector:
each layer is reduced to the mean of its included token positions, the
layer means are combined with one trainable weight per layer, and the sum
is divided by a normalization constant.

Two normalization modes are exposed. `corrected` divides the layer sum by
L+1, the number of layers actually summed. `paper_literal` divides by L
(one less than the number of summands), mirroring a published constant;
the difference is absorbed by the trainable weights, so the modes are
equally expressive but only `corrected` is well defined for every L.
"""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

NORMALIZATION_MODES = ("corrected", "paper_literal")


class EmptyPoolError(ValueError):
    """No token position qualified for the pooled mean."""


def scalar_mix_pool(
    values: Tensor,
    include_mask: Tensor,
    lambdas: Tensor,
    mode: str = "corrected",
) -> Tensor:
    """Pool hidden states (..., L+1, T, d) into (..., d).

    y = (1/Z) * sum_j lambda_j * mean_{i in included} h_i^j, where the token
    mean divides by the included-position count and Z is L+1 (`corrected`)
    or L (`paper_literal`).
    """
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    num_layers_plus_one = values.shape[-3]
    if lambdas.shape[-1] != num_layers_plus_one:
        raise ValueError(
            f"lambdas length {lambdas.shape[-1]} != layer count {num_layers_plus_one}"
        )
    include = include_mask.to(values.dtype)
    counts = include.sum(dim=-1)
    if (counts == 0).any():
        raise EmptyPoolError("no includable token positions in at least one sequence")
    token_mean = (values * include[..., None, :, None]).sum(dim=-2) / counts[..., None, None]
    weighted = (lambdas[..., None] * token_mean).sum(dim=-2)
    if mode == "corrected":
        divisor = num_layers_plus_one
    else:
        divisor = num_layers_plus_one - 1
        if divisor == 0:
            raise ValueError("paper_literal mode is undefined for a single-layer stack")
    return weighted / divisor


def cls_pool(values: Tensor) -> Tensor:
    """Final-layer hidden state at position 0 (the CLS slot)."""
    return values[..., -1, 0, :]


class ScalarMix(nn.Module):
    """Trainable per-layer weights for scalar-mix pooling.

    Weights are unconstrained reals by default; with softmax_normalize they
    are passed through a softmax before pooling.
    """

    def __init__(self, num_layers: int, mode: str = "corrected", softmax_normalize: bool = False):
        super().__init__()
        if mode not in NORMALIZATION_MODES:
            raise ValueError(f"unknown normalization mode {mode!r}")
        self.mode = mode
        self.softmax_normalize = softmax_normalize
        self.lambdas = nn.Parameter(torch.ones(num_layers + 1))

    def mixing_weights(self) -> Tensor:
        if self.softmax_normalize:
            return torch.softmax(self.lambdas, dim=-1)
        return self.lambdas

    def forward(self, values: Tensor, include_mask: Tensor) -> Tensor:
        return scalar_mix_pool(values, include_mask, self.mixing_weights(), self.mode)


class ClassifierHead(nn.Module):
    """Two-layer feed-forward head: logits = W2 gelu(W1 y + b1) + b2."""

    def __init__(self, input_dim: int, num_classes: int, hidden_dim: Optional[int] = None):
        super().__init__()
        hidden_dim = input_dim if hidden_dim is None else hidden_dim
        self.hidden = nn.Linear(input_dim, hidden_dim)
        self.out = nn.Linear(hidden_dim, num_classes)

    def forward(self, y: Tensor) -> Tensor:
        return self.out(F.gelu(self.hidden(y)))
