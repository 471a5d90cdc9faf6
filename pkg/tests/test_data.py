import json
import random

import pytest
import torch

from layermix.data import (
    DataFormatError,
    ExampleRecord,
    UnknownLabelError,
    binary_label_scheme,
    build_label_scheme,
    derive_seed,
    load_records,
    make_batches,
    save_records,
    split_manifest,
    stratified_split,
    synth_corpus,
)
from layermix.tokenizer import Vocab


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def record_line(i, label="human", model="human", source="wikipedia", text="some text"):
    return json.dumps({"id": i, "text": text, "label": label, "model": model, "source": source})


def test_load_valid_lines(tmp_path):
    path = tmp_path / "data.jsonl"
    write_lines(path, [record_line(i) for i in range(3)])
    records = load_records(path)
    assert len(records) == 3
    assert records[0].id == 0
    assert records[2].source == "wikipedia"


def test_load_reports_malformed_line_number(tmp_path):
    path = tmp_path / "data.jsonl"
    write_lines(path, [record_line(0), "{not json", record_line(2)])
    with pytest.raises(DataFormatError, match="line 2"):
        load_records(path)


def test_load_reports_missing_field_line_number(tmp_path):
    path = tmp_path / "data.jsonl"
    bad = json.dumps({"id": 1, "label": "human", "model": "m", "source": "s"})
    write_lines(path, [record_line(0), bad])
    with pytest.raises(DataFormatError, match="line 2.*text"):
        load_records(path)


def test_load_rejects_empty_text(tmp_path):
    path = tmp_path / "data.jsonl"
    write_lines(path, [record_line(0, text="")])
    with pytest.raises(DataFormatError, match="line 1"):
        load_records(path)


def test_save_load_roundtrip_preserves_fields(tmp_path):
    records = [
        ExampleRecord(id="a1", text="first text", label="human", model="human", source="wikipedia"),
        ExampleRecord(id=7, text="second text", label="machine", model="dolly", source="reddit"),
    ]
    path = tmp_path / "out.jsonl"
    save_records(records, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert list(json.loads(lines[0])) == ["id", "text", "label", "model", "source"]
    loaded = load_records(path)
    assert loaded == records


def test_binary_scheme_mapping():
    scheme = binary_label_scheme()
    assert scheme.classes == ["human", "machine"]
    assert scheme.index_of("human") == 0
    assert scheme.index_of("Machine") == 1
    assert scheme.index_of(" HUMAN ") == 0
    with pytest.raises(UnknownLabelError):
        scheme.index_of("alien")


def test_multiclass_scheme_sorted_from_data():
    records = [
        ExampleRecord(id=i, text="t", label=lab, model=lab, source="s")
        for i, lab in enumerate(["zeta", "alpha", "mid", "alpha"])
    ]
    scheme = build_label_scheme("subtask_b", records)
    assert scheme.classes == ["alpha", "mid", "zeta"]
    assert scheme.index_of("mid") == 1
    with pytest.raises(UnknownLabelError):
        scheme.index_of("missing")


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, "x") == derive_seed(1, "x")
    assert derive_seed(1, "x") != derive_seed(2, "x")
    assert derive_seed(1, "x") != derive_seed(1, "y")
    assert 0 <= derive_seed(0) < 2**63


def make_strata(sizes, seed=0):
    records = []
    counter = 0
    for idx, size in enumerate(sizes):
        for _ in range(size):
            records.append(
                ExampleRecord(
                    id=counter,
                    text=f"text {counter}",
                    label="human",
                    model=f"model_{idx}",
                    source=f"source_{idx}",
                )
            )
            counter += 1
    return records


def test_split_is_a_partition():
    records = make_strata([10, 7, 5])
    train, dev = stratified_split(records, 0.8, seed=3)
    assert len(train) + len(dev) == len(records)
    ids = sorted([r.id for r in train] + [r.id for r in dev])
    assert ids == sorted(r.id for r in records)
    assert not {r.id for r in train} & {r.id for r in dev}


def test_split_proportions_and_rounding():
    train, dev = stratified_split(make_strata([10]), 0.8, seed=0)
    assert (len(train), len(dev)) == (8, 2)
    train5, dev5 = stratified_split(make_strata([5]), 0.8, seed=0)
    assert (len(train5), len(dev5)) == (4, 1)
    # round-half-to-even: round(0.8 * 7) = round(5.6) = 6
    train7, dev7 = stratified_split(make_strata([7]), 0.8, seed=0)
    assert (len(train7), len(dev7)) == (6, 1)


def test_split_singleton_goes_to_train():
    train, dev = stratified_split(make_strata([1]), 0.8, seed=0)
    assert len(train) == 1 and len(dev) == 0


def test_split_clamps_small_strata():
    # a stratum of 2 must land one on each side even though round(1.6) = 2
    train, dev = stratified_split(make_strata([2]), 0.8, seed=0)
    assert len(train) == 1 and len(dev) == 1


def test_split_determinism():
    records = make_strata([9, 6])
    a = stratified_split(records, 0.8, seed=5)
    b = stratified_split(records, 0.8, seed=5)
    assert [r.id for r in a[0]] == [r.id for r in b[0]]
    assert [r.id for r in a[1]] == [r.id for r in b[1]]
    c = stratified_split(records, 0.8, seed=6)
    assert [r.id for r in a[0]] != [r.id for r in c[0]]


def test_split_strata_are_independent():
    base = make_strata([8, 8])
    extra = base + [
        ExampleRecord(id=999, text="extra", label="human", model="model_0", source="source_0")
    ]
    train_a, dev_a = stratified_split(base, 0.8, seed=11)
    train_b, dev_b = stratified_split(extra, 0.8, seed=11)
    # stratum 1 membership is untouched by growth in stratum 0
    sel_a = {(r.id, "train") for r in train_a if r.model == "model_1"} | {
        (r.id, "dev") for r in dev_a if r.model == "model_1"
    }
    sel_b = {(r.id, "train") for r in train_b if r.model == "model_1"} | {
        (r.id, "dev") for r in dev_b if r.model == "model_1"
    }
    assert sel_a == sel_b


def test_split_rejects_bad_inputs():
    with pytest.raises(ValueError):
        stratified_split([], 0.8, seed=0)
    with pytest.raises(ValueError):
        stratified_split(make_strata([4]), 1.0, seed=0)


def test_split_manifest_counts():
    records = make_strata([10, 5])
    train, dev = stratified_split(records, 0.8, seed=2)
    manifest = split_manifest(records, train, 0.8, 2)
    assert manifest["seed"] == 2
    assert manifest["strata"]["model_0/source_0"] == {"train": 8, "dev": 2}
    assert manifest["strata"]["model_1/source_1"] == {"train": 4, "dev": 1}


def test_batches_sizes_and_final_short_batch():
    records = make_strata([10])
    scheme = binary_label_scheme()
    batches = make_batches(records, 8, seed=0, max_len=16, scheme=scheme)
    assert [b[0].shape[0] for b in batches] == [8, 2]
    assert all(b[0].shape[1] == 16 for b in batches)
    assert all(b[0].dtype == torch.long for b in batches)


def test_batches_deterministic_and_label_multiset_preserved():
    records = make_strata([7, 6])
    for i, r in enumerate(records):
        r.label = "machine" if i % 3 else "human"
    scheme = binary_label_scheme()
    a = make_batches(records, 4, seed=9, max_len=16, scheme=scheme)
    b = make_batches(records, 4, seed=9, max_len=16, scheme=scheme)
    for (ai, am, al), (bi, bm, bl) in zip(a, b):
        assert torch.equal(ai, bi) and torch.equal(am, bm) and torch.equal(al, bl)
    emitted = sorted(l for _, _, labels in a for l in labels.tolist())
    expected = sorted(scheme.index_of(r.label) for r in records)
    assert emitted == expected
    shuffled = make_batches(records, 4, seed=10, max_len=16, scheme=scheme)
    assert any(not torch.equal(x[0], y[0]) for x, y in zip(a, shuffled))


def test_batches_without_scheme_mark_labels_unusable():
    records = make_strata([3])
    batches = make_batches(records, 2, seed=0, max_len=8, scheme=None)
    assert all((labels == -1).all() for _, _, labels in batches)


def test_synth_corpus_counts_and_fields():
    records = synth_corpus(3, 50, "subtask_a")
    assert len(records) == 100
    labels = [r.label for r in records]
    assert labels.count("human") == 50 and labels.count("machine") == 50
    assert {r.source for r in records} == {"wiki_sim", "forum_sim"}
    machine_models = {r.model for r in records if r.label == "machine"}
    assert machine_models == {"mk1", "mk2"}
    assert all(r.text for r in records)


def test_synth_corpus_multiclass():
    records = synth_corpus(4, 30, "subtask_b")
    scheme = build_label_scheme("subtask_b", records)
    assert scheme.num_classes == 3
    assert len(records) == 90


def test_synth_corpus_seed_changes_texts():
    a = synth_corpus(1, 10, "subtask_a")
    b = synth_corpus(2, 10, "subtask_a")
    assert [r.text for r in a] != [r.text for r in b]
    again = synth_corpus(1, 10, "subtask_a")
    assert [r.text for r in a] == [r.text for r in again]


def test_synth_corpus_alphabet_fits_tokenizer():
    records = synth_corpus(5, 20, "subtask_a")
    for r in records:
        payload = r.text.encode("utf-8")
        assert all(0 <= b + Vocab.byte_offset < Vocab.size for b in payload)


def test_ten_thousand_record_split_is_fast():
    import time

    rng = random.Random(0)
    records = [
        ExampleRecord(
            id=i,
            text="t",
            label="human",
            model=f"model_{rng.randrange(5)}",
            source=f"source_{rng.randrange(4)}",
        )
        for i in range(10_000)
    ]
    start = time.monotonic()
    train, dev = stratified_split(records, 0.8, seed=1)
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    assert len(train) + len(dev) == 10_000
