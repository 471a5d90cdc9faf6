"""Machine-generated-text classification with trainable layer mixing and
adaptive-rank low-rank adapters on a small frozen transformer backbone."""

from .adapters import AdapterConfig, AdaLoraLinear, BudgetSchedule, LoraLinear, budget_at
from .data import ExampleRecord, LabelScheme, load_records, save_records, stratified_split, synth_corpus
from .encoder import EncoderConfig, TransformerEncoder
from .metrics import MetricsReport, binary_metrics, confusion, f1_score, micro_macro_metrics
from .model import ModelConfig, SequenceClassifier
from .pooling import ScalarMix, scalar_mix_pool
from .tokenizer import Vocab, decode, encode
from .trainer import TrainConfig, TrainResult, evaluate_records, train

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdaLoraLinear",
    "BudgetSchedule",
    "LoraLinear",
    "budget_at",
    "ExampleRecord",
    "LabelScheme",
    "load_records",
    "save_records",
    "stratified_split",
    "synth_corpus",
    "EncoderConfig",
    "TransformerEncoder",
    "MetricsReport",
    "binary_metrics",
    "confusion",
    "f1_score",
    "micro_macro_metrics",
    "ModelConfig",
    "SequenceClassifier",
    "ScalarMix",
    "scalar_mix_pool",
    "Vocab",
    "decode",
    "encode",
    "TrainConfig",
    "TrainResult",
    "evaluate_records",
    "train",
    "__version__",
]
