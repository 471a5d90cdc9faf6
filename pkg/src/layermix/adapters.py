"""Low-rank adapters over frozen linear layers.

Two flavors:

- `LoraLinear`: plain rank-r decomposition, W + (alpha/r) * B @ A, with B
  zeroed at init so a fresh adapter is an exact identity.
- `AdaLoraLinear`: SVD-style P @ diag(Lam) @ Q whose effective rank is
  pruned during training. Each singular direction carries an importance
  score (EMA-smoothed |w * grad| sensitivity times its EMA-smoothed
  uncertainty); a cubic budget schedule decides how many directions stay
  active, and `apply_rank_mask` keeps the globally top-scored ones.

Masking is soft: pruned singular values are zeroed in the forward pass but
their parameters survive, so a direction can be revived at a later refresh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
from torch import Tensor, nn

from .encoder import TransformerEncoder, seeded_dropout


@dataclass
class AdapterConfig:
    kind: str = "adalora"  # "adalora", "lora", or "none"
    init_r: int = 12
    target_r: int = 8
    alpha: float = 200.0
    dropout_rate: float = 0.4
    beta1: float = 0.85
    beta2: float = 0.85
    orth_coefficient: float = 0.1
    mask_interval: int = 50
    schedule_start_frac: float = 0.1
    schedule_end_frac: float = 0.8
    target_projections: Tuple[str, ...] = ("query", "value")
    target_layers: Optional[Tuple[int, ...]] = None  # None = every layer

    def __post_init__(self) -> None:
        if self.kind not in ("adalora", "lora", "none"):
            raise ValueError(f"unknown adapter kind {self.kind!r}")
        if self.init_r < 1:
            raise ValueError(f"init_r must be >= 1, got {self.init_r}")
        if not 1 <= self.target_r <= self.init_r:
            raise ValueError(f"target_r must be in [1, init_r], got {self.target_r}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {getattr(self, name)}")
        if not 0.0 <= self.schedule_start_frac < self.schedule_end_frac <= 1.0:
            raise ValueError("need 0 <= schedule_start_frac < schedule_end_frac <= 1")
        for proj in self.target_projections:
            if proj not in ("query", "key", "value", "output"):
                raise ValueError(f"unknown projection target {proj!r}")


@dataclass
class BudgetSchedule:
    """Total active-rank budget over training steps: cubic decay between
    t_start and t_end, flat at b_init before and b_target after."""

    b_init: int
    b_target: int
    t_start: int
    t_end: int

    def __post_init__(self) -> None:
        if self.b_target > self.b_init:
            raise ValueError(f"b_target {self.b_target} exceeds b_init {self.b_init}")
        if self.t_start >= self.t_end:
            raise ValueError(f"need t_start < t_end, got {self.t_start} >= {self.t_end}")


def budget_at(schedule: BudgetSchedule, t: int) -> int:
    if t < 0:
        raise ValueError(f"step must be >= 0, got {t}")
    if t <= schedule.t_start:
        return schedule.b_init
    if t >= schedule.t_end:
        return schedule.b_target
    frac = (t - schedule.t_start) / (schedule.t_end - schedule.t_start)
    b = schedule.b_target + (schedule.b_init - schedule.b_target) * (1.0 - frac) ** 3
    return round(b)  # round-half-to-even


class LoraLinear(nn.Module):
    """Frozen linear plus trainable rank-r update (alpha/r) * B @ A."""

    is_adapter = True

    def __init__(self, base: nn.Linear, rank: int, alpha: float, dropout_rate: float):
        super().__init__()
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        self.base = base
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)
        self.rank = rank
        self.alpha = alpha
        self.dropout_rate = dropout_rate
        out_features, in_features = base.weight.shape
        self.lora_a = nn.Parameter(torch.zeros(rank, in_features))
        self.lora_b = nn.Parameter(torch.zeros(out_features, rank))
        self.reset_parameters()

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def reset_parameters(self, generator: Optional[torch.Generator] = None) -> None:
        nn.init.normal_(self.lora_a, mean=0.0, std=0.01, generator=generator)
        nn.init.zeros_(self.lora_b)

    def forward(self, x: Tensor, train: bool = False, generator: Optional[torch.Generator] = None) -> Tensor:
        y = self.base(x)
        xd = seeded_dropout(x, self.dropout_rate, train, generator)
        return y + self.scaling * (xd @ self.lora_a.T @ self.lora_b.T)

    def delta_weight(self) -> Tensor:
        return self.scaling * (self.lora_b @ self.lora_a)

    def merged_weight(self) -> Tensor:
        return self.base.weight + self.delta_weight()


class AdaLoraLinear(nn.Module):
    """Frozen linear plus SVD-parameterized update with prunable rank.

    Delta = (alpha / init_r) * P @ diag(Lam * rank_mask) @ Q. Lam starts at
    zero (identity at init) and rank_mask starts all-ones. Importance EMAs
    are tracked per parameter entry and summarized per singular direction.
    """

    is_adapter = True

    def __init__(self, base: nn.Linear, init_r: int, alpha: float, dropout_rate: float):
        super().__init__()
        if init_r < 1:
            raise ValueError(f"init_r must be >= 1, got {init_r}")
        self.base = base
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)
        self.init_r = init_r
        self.alpha = alpha
        self.dropout_rate = dropout_rate
        out_features, in_features = base.weight.shape
        self.p = nn.Parameter(torch.zeros(out_features, init_r))
        self.lam = nn.Parameter(torch.zeros(init_r))
        self.q = nn.Parameter(torch.zeros(init_r, in_features))
        self.register_buffer("rank_mask", torch.ones(init_r))
        # Smoothed sensitivity / uncertainty, one entry per parameter entry.
        for name, shape in (("p", (out_features, init_r)), ("lam", (init_r,)), ("q", (init_r, in_features))):
            self.register_buffer(f"ipt_avg_{name}", torch.zeros(shape))
            self.register_buffer(f"ipt_unc_{name}", torch.zeros(shape))
        self.reset_parameters()

    @property
    def scaling(self) -> float:
        # Fixed at alpha / init_r so pruning never rescales the live directions.
        return self.alpha / self.init_r

    def reset_parameters(self, generator: Optional[torch.Generator] = None) -> None:
        nn.init.normal_(self.p, mean=0.0, std=0.01, generator=generator)
        nn.init.zeros_(self.lam)
        nn.init.normal_(self.q, mean=0.0, std=0.01, generator=generator)
        self.rank_mask.fill_(1.0)
        for name in ("p", "lam", "q"):
            getattr(self, f"ipt_avg_{name}").zero_()
            getattr(self, f"ipt_unc_{name}").zero_()

    def forward(self, x: Tensor, train: bool = False, generator: Optional[torch.Generator] = None) -> Tensor:
        y = self.base(x)
        xd = seeded_dropout(x, self.dropout_rate, train, generator)
        projected = (xd @ self.q.T) * (self.lam * self.rank_mask)
        return y + self.scaling * (projected @ self.p.T)

    def delta_weight(self) -> Tensor:
        return self.scaling * ((self.p * (self.lam * self.rank_mask)) @ self.q)

    def active_rank(self) -> int:
        return int(self.rank_mask.sum().item())

    def update_importance(self, beta1: float, beta2: float) -> None:
        """EMA update of per-entry sensitivity |w * grad| and its uncertainty.

        No-op for parameters that have no gradient this step.
        """
        with torch.no_grad():
            for name in ("p", "lam", "q"):
                param = getattr(self, name)
                if param.grad is None:
                    continue
                sensitivity = (param * param.grad).abs()
                avg = getattr(self, f"ipt_avg_{name}")
                unc = getattr(self, f"ipt_unc_{name}")
                avg.mul_(beta1).add_(sensitivity, alpha=1.0 - beta1)
                unc.mul_(beta2).add_((sensitivity - avg).abs(), alpha=1.0 - beta2)

    def direction_scores(self) -> Tensor:
        """Per-direction triplet score: score(Lam_k) + mean_i score(P_ik) + mean_j score(Q_kj)."""
        s_lam = self.ipt_avg_lam * self.ipt_unc_lam
        s_p = (self.ipt_avg_p * self.ipt_unc_p).mean(dim=0)
        s_q = (self.ipt_avg_q * self.ipt_unc_q).mean(dim=1)
        return s_lam + s_p + s_q


def update_importance(adapters: Sequence[AdaLoraLinear], beta1: float, beta2: float) -> None:
    for adapter in adapters:
        adapter.update_importance(beta1, beta2)


def apply_rank_mask(adapters: Sequence[AdaLoraLinear], budget: int) -> None:
    """Keep the `budget` globally top-scored singular directions active.

    Ties rank the earlier adapter (attachment order), then the lower
    direction index, first.
    """
    total = sum(a.init_r for a in adapters)
    if not 0 <= budget <= total:
        raise ValueError(f"budget {budget} outside [0, {total}]")
    entries = []
    for a_idx, adapter in enumerate(adapters):
        scores = adapter.direction_scores().tolist()
        for k, score in enumerate(scores):
            entries.append((-score, a_idx, k))
    entries.sort()
    keep = {(a_idx, k) for _, a_idx, k in entries[:budget]}
    with torch.no_grad():
        for a_idx, adapter in enumerate(adapters):
            new_mask = torch.tensor(
                [1.0 if (a_idx, k) in keep else 0.0 for k in range(adapter.init_r)],
                dtype=adapter.rank_mask.dtype,
                device=adapter.rank_mask.device,
            )
            adapter.rank_mask.copy_(new_mask)


def orth_penalty(adapter: AdaLoraLinear) -> Tensor:
    """Squared Frobenius distance of PtP and QQt from identity."""
    r = adapter.init_r
    eye = torch.eye(r, dtype=adapter.p.dtype, device=adapter.p.device)
    p_term = ((adapter.p.T @ adapter.p - eye) ** 2).sum()
    q_term = ((adapter.q @ adapter.q.T - eye) ** 2).sum()
    return p_term + q_term


def attach_adapters(encoder: TransformerEncoder, config: AdapterConfig) -> List[nn.Module]:
    """Wrap the configured attention projections of the encoder in adapters.

    Returns the adapters in attachment order (layer-major, then the order of
    config.target_projections); that order defines pruning tie-breaks.
    """
    if config.kind == "none":
        return []
    layer_indices = (
        config.target_layers
        if config.target_layers is not None
        else tuple(range(len(encoder.layers)))
    )
    adapters: List[nn.Module] = []
    for layer_idx in layer_indices:
        attn = encoder.layers[layer_idx].attn
        for proj_name in config.target_projections:
            base = getattr(attn, proj_name)
            if config.kind == "adalora":
                wrapped: nn.Module = AdaLoraLinear(base, config.init_r, config.alpha, config.dropout_rate)
            else:
                wrapped = LoraLinear(base, config.init_r, config.alpha, config.dropout_rate)
            setattr(attn, proj_name, wrapped)
            adapters.append(wrapped)
    return adapters
