"""Full classifier assembly: frozen-backbone encoder + adapters + pooling + head."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import torch
from torch import Tensor, nn

from .adapters import AdaLoraLinear, AdapterConfig, LoraLinear, attach_adapters
from .encoder import EncoderConfig, HiddenStates, TransformerEncoder
from .pooling import ClassifierHead, ScalarMix, cls_pool
from .tokenizer import Vocab

POOLING_MODES = ("scalar_mix", "cls")


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    num_classes: int = 2
    pooling: str = "scalar_mix"
    normalization_mode: str = "corrected"
    include_specials: bool = False
    softmax_layer_weights: bool = False
    head_hidden_dim: Optional[int] = None

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {self.pooling!r}")


class SequenceClassifier(nn.Module):
    """Encoder + (optional) adapters + pooling + classifier head.

    Only adapters, the layer-mix weights, and the head are meant to train;
    the backbone stays frozen. Call `initialize(seed)` after construction
    for a fully seeded parameter init.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = TransformerEncoder(config.encoder)
        self.adapters = attach_adapters(self.encoder, config.adapter)
        self.scalar_mix = ScalarMix(
            config.encoder.num_layers,
            mode=config.normalization_mode,
            softmax_normalize=config.softmax_layer_weights,
        )
        self.head = ClassifierHead(
            config.encoder.model_dim, config.num_classes, config.head_hidden_dim
        )

    def initialize(self, seed: int) -> None:
        initialize_parameters(self, seed)

    def include_mask(self, ids: Tensor, mask: Tensor) -> Tensor:
        """Positions entering the token mean: unmasked, and (unless
        configured otherwise) neither CLS nor SEP. Padding never counts."""
        include = mask != 0
        if not self.config.include_specials:
            include = include & (ids >= Vocab.byte_offset)
        return include

    def hidden_states(
        self, ids: Tensor, mask: Tensor, train: bool = False, dropout_seed: int = 0
    ) -> HiddenStates:
        return self.encoder(ids, mask, train=train, dropout_seed=dropout_seed)

    def forward(
        self, ids: Tensor, mask: Tensor, train: bool = False, dropout_seed: int = 0
    ) -> Tensor:
        hidden = self.hidden_states(ids, mask, train=train, dropout_seed=dropout_seed)
        if self.config.pooling == "scalar_mix":
            pooled = self.scalar_mix(hidden.values, self.include_mask(ids, mask))
        else:
            pooled = cls_pool(hidden.values)
        return self.head(pooled)

    def layer_weights(self) -> List[float]:
        return [float(v) for v in self.scalar_mix.mixing_weights().detach()]

    def active_ranks(self) -> List[int]:
        return [a.active_rank() for a in self.adapters if isinstance(a, AdaLoraLinear)]


def initialize_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic init: backbone weights N(0, 0.02), biases zero, layer
    norms identity, mix weights one, adapter factors per their own rule."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    for module in model.modules():
        if isinstance(module, (LoraLinear, AdaLoraLinear)):
            module.reset_parameters(generator)
        elif isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=0.02, generator=generator)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=0.02, generator=generator)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
        elif isinstance(module, ScalarMix):
            nn.init.ones_(module.lambdas)


def set_trainable(model: SequenceClassifier) -> None:
    """Freeze the backbone; adapters, mix weights, and head stay trainable."""
    trainable = _trainable_param_ids(model)
    for p in model.parameters():
        p.requires_grad_(id(p) in trainable)


def trainable_parameters(model: nn.Module) -> Iterator[Tuple[str, nn.Parameter]]:
    for name, param in model.named_parameters():
        if param.requires_grad:
            yield name, param


def _trainable_param_ids(model: SequenceClassifier) -> set:
    ids = {id(model.scalar_mix.lambdas)}
    ids.update(id(p) for p in model.head.parameters())
    for adapter in model.adapters:
        if isinstance(adapter, AdaLoraLinear):
            ids.update(id(p) for p in (adapter.p, adapter.lam, adapter.q))
        elif isinstance(adapter, LoraLinear):
            ids.update(id(p) for p in (adapter.lora_a, adapter.lora_b))
    return ids


def backbone_state(model: SequenceClassifier) -> dict:
    """Frozen-backbone tensors (everything that must not move in training)."""
    trainable = _trainable_param_ids(model)
    return {
        name: param.detach().clone()
        for name, param in model.named_parameters()
        if id(param) not in trainable
    }
