"""Dataset handling: JSONL records, stratified resplit, batching, synthesis.

Records follow the shared-task layout: id, text, label, generator model,
source domain. The resplit shuffles and splits every (model, source)
stratum independently with its own derived seed, so adding records to one
stratum never disturbs another.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch

from .tokenizer import encode

REQUIRED_FIELDS = ("id", "text", "label", "model", "source")

SUBTASK_A = "subtask_a"
SUBTASK_B = "subtask_b"
TASKS = (SUBTASK_A, SUBTASK_B)


class DataFormatError(ValueError):
    """Malformed input data; message carries the offending line number."""


class UnknownLabelError(ValueError):
    """A label outside the task's class set."""


@dataclass
class ExampleRecord:
    id: object
    text: str
    label: str
    model: str
    source: str


@dataclass
class LabelScheme:
    task: str
    classes: List[str]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def index_of(self, label: object) -> int:
        if self.task == SUBTASK_A:
            key = str(label).strip().lower()
            index = {c.lower(): i for i, c in enumerate(self.classes)}
        else:
            key = str(label)
            index = {c: i for i, c in enumerate(self.classes)}
        if key not in index:
            raise UnknownLabelError(f"unknown label {label!r} for {self.task}")
        return index[key]


def binary_label_scheme() -> LabelScheme:
    # Fixed encoding: 0 = human, 1 = machine.
    return LabelScheme(task=SUBTASK_A, classes=["human", "machine"])


def build_label_scheme(task: str, records: Sequence[ExampleRecord]) -> LabelScheme:
    if task == SUBTASK_A:
        scheme = binary_label_scheme()
        for r in records:
            scheme.index_of(r.label)
        return scheme
    if task == SUBTASK_B:
        classes = sorted({str(r.label) for r in records})
        if len(classes) < 2:
            raise DataFormatError(f"{task} needs at least 2 classes, found {classes}")
        return LabelScheme(task=task, classes=classes)
    raise ValueError(f"unknown task {task!r}")


def load_records(path: str | Path) -> List[ExampleRecord]:
    """Parse a JSON-Lines file of records; abort on the first bad line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataFormatError(f"{path}: line {lineno}: expected a JSON object")
            for fieldname in REQUIRED_FIELDS:
                if fieldname not in obj:
                    raise DataFormatError(f"{path}: line {lineno}: missing field '{fieldname}'")
            if not isinstance(obj["text"], str) or not obj["text"]:
                raise DataFormatError(f"{path}: line {lineno}: field 'text' must be a non-empty string")
            records.append(
                ExampleRecord(
                    id=obj["id"],
                    text=obj["text"],
                    label=obj["label"],
                    model=str(obj["model"]),
                    source=str(obj["source"]),
                )
            )
    return records


def save_records(records: Iterable[ExampleRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"id": r.id, "text": r.text, "label": r.label, "model": r.model, "source": r.source}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from the given parts (independent of hash salting)."""
    digest = hashlib.sha256("|".join(repr(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def stratified_split(
    records: Sequence[ExampleRecord], train_fraction: float = 0.8, seed: int = 0
) -> Tuple[List[ExampleRecord], List[ExampleRecord]]:
    """Split into (train, dev), stratified by (model, source).

    Each stratum is shuffled with its own seed derived from (seed, key) and
    split at round(train_fraction * k), clamped so no stratum of size >= 2
    lands entirely on one side. Singleton strata go to train.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if not records:
        raise ValueError("cannot split an empty record list")
    strata: Dict[Tuple[str, str], List[ExampleRecord]] = {}
    for r in records:
        strata.setdefault((r.model, r.source), []).append(r)
    train: List[ExampleRecord] = []
    dev: List[ExampleRecord] = []
    for key in sorted(strata):
        group = list(strata[key])
        rng = random.Random(derive_seed(seed, key[0], key[1]))
        rng.shuffle(group)
        k = len(group)
        n_train = round(train_fraction * k)
        if k >= 2:
            n_train = min(max(n_train, 1), k - 1)
        else:
            n_train = 1
        train.extend(group[:n_train])
        dev.extend(group[n_train:])
    return train, dev


def split_manifest(
    records: Sequence[ExampleRecord], train: Sequence[ExampleRecord], train_fraction: float, seed: int
) -> dict:
    counts: Dict[str, Dict[str, int]] = {}
    train_ids = {id(r) for r in train}
    for r in records:
        key = f"{r.model}/{r.source}"
        entry = counts.setdefault(key, {"train": 0, "dev": 0})
        entry["train" if id(r) in train_ids else "dev"] += 1
    return {"seed": seed, "train_fraction": train_fraction, "strata": counts}


def make_batches(
    records: Sequence[ExampleRecord],
    batch_size: int,
    seed: int,
    max_len: int,
    scheme: Optional[LabelScheme],
    shuffle: bool = True,
) -> List[Tuple[torch.Tensor, torch.Tensor, torch.Tensor]]:
    """Tokenize and batch records as (ids, mask, label) long tensors.

    Shuffles the whole epoch with `seed`; the final short batch is kept.
    With scheme=None (prediction on possibly unlabeled text) labels are -1.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(len(records)))
    if shuffle:
        random.Random(seed).shuffle(order)
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [records[i] for i in order[start : start + batch_size]]
        seqs = [encode(r.text, max_len) for r in chunk]
        ids = torch.tensor([s.ids for s in seqs], dtype=torch.long)
        mask = torch.tensor([s.attention_mask for s in seqs], dtype=torch.long)
        labels = torch.tensor(
            [scheme.index_of(r.label) if scheme is not None else -1 for r in chunk], dtype=torch.long
        )
        batches.append((ids, mask, labels))
    return batches


# --- synthetic corpus -------------------------------------------------------

_ALPHABET = "abcdefghijklmnopqrstuvwxyz "
_SOURCES = ("wiki_sim", "forum_sim")
_MACHINE_MODELS = ("mk1", "mk2")


def _class_chain(class_idx: int) -> Tuple[List[str], Dict[str, List[float]]]:
    """Order-1 character chain biased towards a class-specific letter block."""
    block = list(_ALPHABET[class_idx * 8 : class_idx * 8 + 8])
    favored = block + [" "]
    probs: Dict[str, List[float]] = {}
    for ch in _ALPHABET:
        row = []
        for nxt in _ALPHABET:
            p = 0.15 / len(_ALPHABET)
            if nxt in favored:
                p += 0.85 / len(favored)
            row.append(p)
        probs[ch] = row
    return favored, probs


def _sample_text(rng: random.Random, favored: List[str], probs: Dict[str, List[float]]) -> str:
    length = rng.randint(50, 90)
    chars = [rng.choice(favored)]
    for _ in range(length - 1):
        row = probs[chars[-1]]
        chars.append(rng.choices(_ALPHABET, weights=row, k=1)[0])
    return "".join(chars)


def _unigram_separability(texts: List[str], labels: List[int], num_classes: int) -> float:
    """Accuracy of a nearest-centroid classifier over character frequencies."""
    dim = len(_ALPHABET)
    index = {ch: i for i, ch in enumerate(_ALPHABET)}

    def freq(text: str) -> List[float]:
        v = [0.0] * dim
        for ch in text:
            v[index[ch]] += 1.0
        total = sum(v) or 1.0
        return [x / total for x in v]

    vectors = [freq(t) for t in texts]
    centroids = []
    for c in range(num_classes):
        members = [v for v, lab in zip(vectors, labels) if lab == c]
        centroids.append([sum(col) / len(members) for col in zip(*members)])
    correct = 0
    for v, lab in zip(vectors, labels):
        dists = [sum((a - b) ** 2 for a, b in zip(v, c)) for c in centroids]
        if dists.index(min(dists)) == lab:
            correct += 1
    return correct / len(texts)


def synth_corpus(seed: int, n_per_class: int, task: str, num_classes: int = 3) -> List[ExampleRecord]:
    """Generate a separable toy corpus of Markov-chain texts.

    subtask_a: one chain for "human", a distinct one for "machine".
    subtask_b: `num_classes` chains (>= 3), each its own class. Records
    rotate through two synthetic sources so the stratified splitter has
    work to do. Separability is verified at generation time with a
    unigram-frequency classifier (>= 0.90 required).
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if task == SUBTASK_A:
        class_names = ["human", "machine"]
    elif task == SUBTASK_B:
        if num_classes < 3:
            raise ValueError(f"subtask_b needs >= 3 classes, got {num_classes}")
        if num_classes > 3:
            raise ValueError("synthetic corpus supports at most 3 distinct chains")
        class_names = ["human", "mk1", "mk2"][:num_classes]
    else:
        raise ValueError(f"unknown task {task!r}")

    rng = random.Random(derive_seed(seed, "synth", task, n_per_class))
    records: List[ExampleRecord] = []
    labels: List[int] = []
    texts: List[str] = []
    counter = 0
    for class_idx, name in enumerate(class_names):
        favored, probs = _class_chain(class_idx)
        for j in range(n_per_class):
            text = _sample_text(rng, favored, probs)
            if task == SUBTASK_A:
                model = "human" if name == "human" else _MACHINE_MODELS[j % len(_MACHINE_MODELS)]
            else:
                model = name
            records.append(
                ExampleRecord(
                    id=f"synth-{counter:05d}",
                    text=text,
                    label=name,
                    model=model,
                    source=_SOURCES[j % len(_SOURCES)],
                )
            )
            labels.append(class_idx)
            texts.append(text)
            counter += 1
    accuracy = _unigram_separability(texts, labels, len(class_names))
    if accuracy < 0.90:
        raise RuntimeError(f"synthetic corpus not separable enough (unigram accuracy {accuracy:.3f})")
    return records
