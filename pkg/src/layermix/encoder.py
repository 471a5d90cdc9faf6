"""Post-layer-norm transformer encoder that keeps every layer's output.

The forward pass returns a stack of L+1 hidden-state tensors (embedding
output at index 0, final layer at index L) so downstream pooling can weight
all of them. Dropout is driven by an explicit seed instead of global RNG
state, which keeps training runs bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .tokenizer import Vocab


@dataclass
class EncoderConfig:
    num_layers: int = 4
    model_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    max_len: int = 128
    vocab_size: int = Vocab.size
    dropout_rate: float = 0.1
    layer_norm_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        for name in ("model_dim", "num_heads", "ffn_dim", "max_len", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.model_dim % self.num_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class HiddenStates:
    """All layer outputs for a batch: values of shape (..., L+1, T, d).

    Index 0 along the layer axis is the embedding output; index L the final
    layer. `mask` is the attention mask that produced the states.
    """

    values: Tensor
    mask: Tensor

    @property
    def num_layers(self) -> int:
        return self.values.shape[-3] - 1


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis with 1/d (biased) variance."""
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    return gain * (x - mean) / torch.sqrt(var + eps) + bias


def attention_weights(query_states: Tensor, key_states: Tensor, key_mask: Tensor) -> Tensor:
    """Scaled dot-product attention weights with hard masking.

    query_states/key_states: (..., T_q, d_head) and (..., T_k, d_head);
    key_mask: {0,1}, broadcastable to the score tensor once a query axis is
    inserted. Masked keys get exactly zero weight; each unmasked row sums
    to 1. Every query must see at least one unmasked key.
    """
    d_head = query_states.shape[-1]
    scores = query_states @ key_states.transpose(-2, -1) / math.sqrt(d_head)
    if key_mask.dim() == scores.dim() - 1:
        key_mask = key_mask.unsqueeze(-2)
    scores = scores.masked_fill(key_mask == 0, float("-inf"))
    return torch.softmax(scores, dim=-1)


def seeded_dropout(x: Tensor, rate: float, train: bool, generator: Optional[torch.Generator]) -> Tensor:
    """Inverted dropout whose mask comes from an explicit generator."""
    if not train or rate <= 0.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) >= rate
    return x * keep.to(x.dtype) / (1.0 - rate)


def _apply_projection(proj: nn.Module, x: Tensor, train: bool, generator: Optional[torch.Generator]) -> Tensor:
    # Adapter wrappers need the dropout context; plain linears do not.
    if getattr(proj, "is_adapter", False):
        return proj(x, train=train, generator=generator)
    return proj(x)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.num_heads = config.num_heads
        self.head_dim = config.model_dim // config.num_heads
        self.dropout_rate = config.dropout_rate
        self.query = nn.Linear(config.model_dim, config.model_dim)
        self.key = nn.Linear(config.model_dim, config.model_dim)
        self.value = nn.Linear(config.model_dim, config.model_dim)
        self.output = nn.Linear(config.model_dim, config.model_dim)

    def _split_heads(self, x: Tensor) -> Tensor:
        *lead, t, _ = x.shape
        x = x.reshape(*lead, t, self.num_heads, self.head_dim)
        return x.transpose(-3, -2)  # (..., heads, T, head_dim)

    def forward(
        self,
        x: Tensor,
        mask: Tensor,
        train: bool = False,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        q = self._split_heads(_apply_projection(self.query, x, train, generator))
        k = self._split_heads(self.key(x))
        v = self._split_heads(_apply_projection(self.value, x, train, generator))
        weights = attention_weights(q, k, mask.unsqueeze(-2))
        weights = seeded_dropout(weights, self.dropout_rate, train, generator)
        context = weights @ v
        context = context.transpose(-3, -2).reshape(x.shape)
        return self.output(context)


class EncoderLayer(nn.Module):
    """Self-attention + FFN block with post-layer-norm residuals."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.attn = MultiHeadSelfAttention(config)
        self.attn_norm = nn.LayerNorm(config.model_dim, eps=config.layer_norm_eps)
        self.ffn_in = nn.Linear(config.model_dim, config.ffn_dim)
        self.ffn_out = nn.Linear(config.ffn_dim, config.model_dim)
        self.ffn_norm = nn.LayerNorm(config.model_dim, eps=config.layer_norm_eps)
        self.dropout_rate = config.dropout_rate

    def forward(
        self,
        x: Tensor,
        mask: Tensor,
        train: bool = False,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        h = self.attn_norm(x + self.attn(x, mask, train, generator))
        f = seeded_dropout(F.gelu(self.ffn_in(h)), self.dropout_rate, train, generator)
        return self.ffn_norm(h + self.ffn_out(f))


class TransformerEncoder(nn.Module):
    """Byte-id encoder returning the full per-layer hidden-state stack."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.model_dim)
        self.position_embedding = nn.Embedding(config.max_len, config.model_dim)
        self.layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.num_layers))

    def forward(
        self,
        ids: Tensor,
        mask: Tensor,
        train: bool = False,
        dropout_seed: int = 0,
    ) -> HiddenStates:
        """Run the encoder; ids and mask are (..., T) with T <= max_len."""
        if ids.shape != mask.shape:
            raise ValueError(f"ids shape {tuple(ids.shape)} != mask shape {tuple(mask.shape)}")
        t = ids.shape[-1]
        if t > self.config.max_len:
            raise ValueError(f"sequence length {t} exceeds max_len {self.config.max_len}")
        generator: Optional[torch.Generator] = None
        if train and self.config.dropout_rate > 0.0:
            generator = torch.Generator(device=ids.device)
            generator.manual_seed(dropout_seed)

        positions = torch.arange(t, device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)
        states = [x]
        for layer in self.layers:
            x = layer(x, mask, train, generator)
            states.append(x)
        values = torch.stack(states, dim=-3)
        if not torch.isfinite(values).all():
            raise FloatingPointError("encoder produced non-finite hidden states")
        return HiddenStates(values=values, mask=mask)
