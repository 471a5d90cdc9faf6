"""Training loop: Adam with decoupled weight decay, linear warmup/decay
schedule, dev-loss early stopping, and the adapter rank-budget cadence.

Every source of randomness is derived from TrainConfig.seed, so two runs
with the same config produce bit-identical histories and weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from .adapters import AdapterConfig, BudgetSchedule, apply_rank_mask, budget_at, orth_penalty, update_importance
from .data import (
    SUBTASK_A,
    TASKS,
    ExampleRecord,
    LabelScheme,
    build_label_scheme,
    derive_seed,
    make_batches,
)
from .encoder import EncoderConfig
from .metrics import MetricsReport, binary_metrics, confusion, micro_macro_metrics
from .model import ModelConfig, SequenceClassifier, set_trainable, trainable_parameters


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the run is aborted rather than continued."""


@dataclass
class TrainConfig:
    task: str
    learning_rate: float = 5e-4
    batch_size: int = 8
    weight_decay: float = 5e-5
    warmup_ratio: Optional[float] = None  # None = 0.1 for subtask_a, 0.01 for subtask_b
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    pooling: str = "scalar_mix"
    normalization_mode: str = "corrected"
    include_specials: bool = False
    softmax_layer_weights: bool = False
    head_hidden_dim: Optional[int] = None

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.warmup_ratio is not None and not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError(f"warmup_ratio must be in [0, 1), got {self.warmup_ratio}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")

    @property
    def resolved_warmup_ratio(self) -> float:
        if self.warmup_ratio is not None:
            return self.warmup_ratio
        return 0.1 if self.task == SUBTASK_A else 0.01


@dataclass
class TrainState:
    step: int = 0
    exp_avg: Dict[str, Tensor] = field(default_factory=dict)
    exp_avg_sq: Dict[str, Tensor] = field(default_factory=dict)
    best_dev_loss: float = math.inf
    epochs_since_improvement: int = 0
    budget: Optional[int] = None


@dataclass
class TrainResult:
    model: SequenceClassifier
    label_scheme: LabelScheme
    config: TrainConfig
    history: List[dict]
    best_epoch: int
    best_dev_loss: float
    best_report: MetricsReport
    epochs_run: int


def lr_at(config: TrainConfig, step: int, total_steps: int) -> float:
    """Linear ramp to the peak rate over the warmup window, then linear
    decay to zero at total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    peak = config.learning_rate
    warmup = config.resolved_warmup_ratio * total_steps
    if step <= warmup:
        return peak * step / warmup if warmup > 0 else peak
    return peak * (total_steps - step) / (total_steps - warmup)


def optimizer_step(
    params: Dict[str, Tensor],
    grads: Dict[str, Optional[Tensor]],
    state: TrainState,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with decoupled decay.

    Decay is applied to the pre-update parameter value, outside the moment
    accumulators: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
    Missing gradients count as zero so the moment recurrences stay honest.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = torch.zeros_like(p)
            m = state.exp_avg.setdefault(name, torch.zeros_like(p))
            v = state.exp_avg_sq.setdefault(name, torch.zeros_like(p))
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p -= lr * ((m / bc1) / ((v / bc2).sqrt() + eps) + weight_decay * p)


def build_model(config: TrainConfig, num_classes: int) -> SequenceClassifier:
    """Fresh, fully initialized model with the backbone frozen."""
    model_config = ModelConfig(
        encoder=config.encoder,
        adapter=config.adapter,
        num_classes=num_classes,
        pooling=config.pooling,
        normalization_mode=config.normalization_mode,
        include_specials=config.include_specials,
        softmax_layer_weights=config.softmax_layer_weights,
        head_hidden_dim=config.head_hidden_dim,
    )
    model = SequenceClassifier(model_config)
    model.initialize(derive_seed(config.seed, "init"))
    set_trainable(model)
    return model


def run_inference(
    model: SequenceClassifier,
    records: Sequence[ExampleRecord],
    scheme: Optional[LabelScheme],
    batch_size: int,
) -> Tuple[Tensor, Tensor]:
    """Forward every record in input order; returns (logits, labels)."""
    max_len = model.config.encoder.max_len
    batches = make_batches(records, batch_size, seed=0, max_len=max_len, scheme=scheme, shuffle=False)
    all_logits = []
    all_labels = []
    with torch.no_grad():
        for ids, mask, labels in batches:
            all_logits.append(model(ids, mask, train=False))
            all_labels.append(labels)
    return torch.cat(all_logits, dim=0), torch.cat(all_labels, dim=0)


def evaluate_records(
    model: SequenceClassifier,
    records: Sequence[ExampleRecord],
    scheme: LabelScheme,
    batch_size: int,
) -> Tuple[MetricsReport, float]:
    """Inference-mode metrics plus mean cross-entropy over the records."""
    logits, labels = run_inference(model, records, scheme, batch_size)
    loss = F.cross_entropy(logits, labels, reduction="sum").item() / len(records)
    predicted = logits.argmax(dim=-1).tolist()
    cm = confusion(labels.tolist(), predicted, scheme.num_classes)
    report = binary_metrics(cm) if scheme.num_classes == 2 else micro_macro_metrics(cm)
    return report, loss


def predict_probabilities(
    model: SequenceClassifier,
    records: Sequence[ExampleRecord],
    batch_size: int,
) -> Tensor:
    """Softmax class probabilities per record; labels in the records are
    ignored, so unlabeled text can be scored."""
    logits, _ = run_inference(model, records, None, batch_size)
    return torch.softmax(logits, dim=-1)


def _snapshot(model: SequenceClassifier) -> Dict[str, Tensor]:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def train(
    config: TrainConfig,
    train_records: Sequence[ExampleRecord],
    dev_records: Sequence[ExampleRecord],
    scheme: Optional[LabelScheme] = None,
) -> TrainResult:
    """Fit on `train_records`, early-stop on `dev_records` loss.

    Per step: forward with dropout, cross-entropy plus the adapter
    orthogonality penalty, backward, Adam update; on the mask-refresh
    cadence, fold fresh gradient importances into the running scores and
    reallocate the rank budget. Returns the best-dev-loss weights, not the
    last ones.
    """
    if not train_records or not dev_records:
        raise ValueError("train and dev sets must both be nonempty")
    if scheme is None:
        scheme = build_label_scheme(config.task, list(train_records) + list(dev_records))
    model = build_model(config, scheme.num_classes)

    adalora = config.adapter.kind == "adalora" and model.adapters
    steps_per_epoch = math.ceil(len(train_records) / config.batch_size)
    total_steps = steps_per_epoch * config.max_epochs
    schedule = None
    if adalora:
        n = len(model.adapters)
        t_start = round(config.adapter.schedule_start_frac * total_steps)
        t_end = max(round(config.adapter.schedule_end_frac * total_steps), t_start + 1)
        schedule = BudgetSchedule(
            b_init=config.adapter.init_r * n,
            b_target=config.adapter.target_r * n,
            t_start=t_start,
            t_end=t_end,
        )

    params = dict(trainable_parameters(model))
    state = TrainState(budget=schedule.b_init if schedule else None)
    max_len = config.encoder.max_len
    history: List[dict] = []
    best_state: Dict[str, Tensor] = {}
    best_report: Optional[MetricsReport] = None
    best_epoch = 0
    epochs_run = 0
    lr = 0.0

    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        batches = make_batches(
            train_records,
            config.batch_size,
            seed=derive_seed(config.seed, "batches", epoch),
            max_len=max_len,
            scheme=scheme,
            shuffle=True,
        )
        epoch_loss = 0.0
        for ids, mask, labels in batches:
            dropout_seed = derive_seed(config.seed, "dropout", state.step + 1)
            try:
                logits = model(ids, mask, train=True, dropout_seed=dropout_seed)
            except FloatingPointError as exc:
                raise TrainingDiverged(str(exc)) from exc
            loss = F.cross_entropy(logits, labels)
            if adalora and config.adapter.orth_coefficient > 0:
                penalty = sum(orth_penalty(a) for a in model.adapters) / len(model.adapters)
                loss = loss + config.adapter.orth_coefficient * penalty
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"loss is {loss.item()} at step {state.step + 1}")
            for p in params.values():
                p.grad = None
            loss.backward()
            lr = lr_at(config, state.step + 1, total_steps)
            grads = {name: p.grad for name, p in params.items()}
            optimizer_step(params, grads, state, lr, config.weight_decay)
            if adalora and state.step % config.adapter.mask_interval == 0:
                update_importance(model.adapters, config.adapter.beta1, config.adapter.beta2)
                state.budget = budget_at(schedule, state.step)
                apply_rank_mask(model.adapters, state.budget)
            epoch_loss += loss.item()

        report, dev_loss = evaluate_records(model, dev_records, scheme, config.batch_size)
        if not math.isfinite(dev_loss):
            raise TrainingDiverged(f"dev loss is {dev_loss} after epoch {epoch}")
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / len(batches),
                "dev_loss": dev_loss,
                "dev_accuracy": report.accuracy,
                "dev_micro_f1": report.micro_f1,
                "dev_macro_f1": report.macro_f1,
                "lr": lr,
                "step": state.step,
                "budget": state.budget,
                "active_ranks": model.active_ranks(),
            }
        )
        if dev_loss < state.best_dev_loss:
            state.best_dev_loss = dev_loss
            state.epochs_since_improvement = 0
            best_state = _snapshot(model)
            best_report = report
            best_epoch = epoch
        else:
            state.epochs_since_improvement += 1
            if state.epochs_since_improvement >= config.patience:
                break

    model.load_state_dict(best_state)
    return TrainResult(
        model=model,
        label_scheme=scheme,
        config=config,
        history=history,
        best_epoch=best_epoch,
        best_dev_loss=state.best_dev_loss,
        best_report=best_report,
        epochs_run=epochs_run,
    )
