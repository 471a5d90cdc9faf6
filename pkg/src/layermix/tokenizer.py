"""Byte-level tokenizer with a fixed 260-entry vocabulary.

Every UTF-8 byte maps to its own id, shifted past four reserved specials,
so any string is encodable and the vocabulary needs no training or
serialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List


class Vocab:
    """Fixed byte-level vocabulary: 4 specials + 256 byte ids."""

    pad_id = 0
    cls_id = 1
    sep_id = 2
    unk_id = 3
    byte_offset = 4
    size = byte_offset + 256


@dataclass
class TokenSequence:
    """Fixed-length id sequence: [CLS] payload [SEP] pad...

    attention_mask is 1 on the CLS..SEP prefix and 0 on the padding tail.
    """

    ids: List[int]
    attention_mask: List[int]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def num_unmasked(self) -> int:
        return sum(self.attention_mask)


def encode(text: str, max_len: int) -> TokenSequence:
    """Encode text as [CLS] + shifted UTF-8 bytes + [SEP], padded to max_len.

    The byte payload is silently truncated to max_len - 2 bytes; truncation
    may fall mid-codepoint, which decode() resolves with the replacement
    character.
    """
    if max_len < 3:
        raise ValueError(f"max_len must be >= 3, got {max_len}")
    payload = text.encode("utf-8")[: max_len - 2]
    ids = [Vocab.cls_id] + [b + Vocab.byte_offset for b in payload] + [Vocab.sep_id]
    n = len(ids)
    ids.extend([Vocab.pad_id] * (max_len - n))
    mask = [1] * n + [0] * (max_len - n)
    return TokenSequence(ids=ids, attention_mask=mask)


def decode(seq: TokenSequence) -> str:
    """Recover the text payload, dropping specials and padding.

    Invalid UTF-8 (possible after mid-codepoint truncation) is replaced
    with U+FFFD rather than raising.
    """
    payload = bytes(
        i - Vocab.byte_offset
        for i, m in zip(seq.ids, seq.attention_mask)
        if m == 1 and i >= Vocab.byte_offset
    )
    return payload.decode("utf-8", errors="replace")
