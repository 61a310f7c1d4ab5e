"""Deterministic tokenizers binding text to the token-id space of an index.

An index stores token ids, so it is only valid for the tokenizer that
produced them; both sides carry a fingerprint that is checked whenever a
model, engine, or index are combined. Two implementations are provided:

* ``ByteTokenizer`` — one token per UTF-8 byte. Universal, no training.
* ``VocabTokenizer`` — greedy longest-match over a piece vocabulary built
  from a corpus, with single-byte pieces as fallback so every string
  tokenizes.

Both are concatenative: decoding is the concatenation of piece bytes, so
``decode(encode(s)) == s`` for every string, and a token-level prefix
always decodes to a byte-level prefix.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

__all__ = [
    "Tokenizer",
    "ByteTokenizer",
    "VocabTokenizer",
    "load_tokenizer",
    "save_tokenizer",
    "tokenizer_from_spec",
]

# Splits corpus text into word-like pieces (optionally space-prefixed),
# digit runs, punctuation runs, and residual whitespace.
_PIECE_RE = re.compile(rb" ?[A-Za-z]+| ?[0-9]+| ?[^ A-Za-z0-9]+| +")


class Tokenizer:
    """Common interface; concrete classes fill in the piece table."""

    kind: str = "abstract"

    def __init__(self, pieces: list[bytes]):
        self._pieces = pieces
        self.eos_id = len(pieces)  # reserved, decodes to nothing
        self.vocab_size = len(pieces) + 1
        self._max_len = max((len(p) for p in pieces), default=1)
        self._table = {p: i for i, p in enumerate(pieces)}
        self.fingerprint = self._fingerprint()

    def _fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(b"\x00")
        for p in self._pieces:
            h.update(p)
            h.update(b"\x00")
        return h.hexdigest()[:16]

    def encode(self, text: str) -> list[int]:
        """Greedy longest-match tokenization of ``text``."""
        data = text.encode("utf-8")
        out: list[int] = []
        table = self._table
        i, n = 0, len(data)
        max_len = self._max_len
        while i < n:
            end = min(n, i + max_len)
            while end > i:
                tid = table.get(data[i:end])
                if tid is not None:
                    out.append(tid)
                    i = end
                    break
                end -= 1
            else:
                raise ValueError(f"byte {data[i]!r} not covered by vocabulary")
        return out

    def encode_fact(self, fact_text: str) -> list[int]:
        """Tokenize a fact standalone, with the single leading space under
        which all facts are indexed (keeps the index prompt-independent)."""
        return self.encode(" " + fact_text)

    def decode_bytes(self, ids: list[int] | tuple[int, ...]) -> bytes:
        pieces = self._pieces
        eos = self.eos_id
        return b"".join(pieces[i] for i in ids if i != eos)

    def decode(self, ids: list[int] | tuple[int, ...], errors: str = "strict") -> str:
        return self.decode_bytes(ids).decode("utf-8", errors=errors)

    def piece(self, token_id: int) -> bytes:
        if token_id == self.eos_id:
            return b""
        return self._pieces[token_id]

    def piece_repr(self, token_id: int) -> str:
        """Printable form of one piece, for tables and diagnostics."""
        if token_id == self.eos_id:
            return "<eos>"
        return self._pieces[token_id].decode("utf-8", errors="replace")

    def spec(self) -> dict:
        raise NotImplementedError


_BYTE_PIECES = [bytes([b]) for b in range(256)]


class ByteTokenizer(Tokenizer):
    """One token per byte; ids 0..255 are the byte values, 256 is EOS."""

    kind = "byte"

    def __init__(self):
        super().__init__(list(_BYTE_PIECES))

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def spec(self) -> dict:
        return {"kind": "byte", "version": 1}


class VocabTokenizer(Tokenizer):
    """Greedy longest-match over an explicit piece vocabulary.

    All 256 single-byte pieces are always present, so any string encodes;
    ids are assigned by sorted piece bytes, making the mapping a pure
    function of the vocabulary content.
    """

    kind = "vocab"

    def __init__(self, pieces: list[bytes]):
        merged = set(_BYTE_PIECES)
        merged.update(pieces)
        super().__init__(sorted(merged))

    @classmethod
    def from_corpus(cls, lines, max_piece_len: int = 32) -> "VocabTokenizer":
        """Build a vocabulary from every word-like piece found in ``lines``."""
        pieces: set[bytes] = set()
        for line in lines:
            data = line.encode("utf-8") if isinstance(line, str) else line
            for m in _PIECE_RE.finditer(data):
                p = m.group(0)
                if 1 < len(p) <= max_piece_len:
                    pieces.add(p)
        return cls(sorted(pieces))

    def spec(self) -> dict:
        return {
            "kind": "vocab",
            "version": 1,
            "pieces": [p.decode("latin-1") for p in self._pieces if len(p) > 1],
        }


def tokenizer_from_spec(spec: dict) -> Tokenizer:
    kind = spec.get("kind")
    if kind == "byte":
        return ByteTokenizer()
    if kind == "vocab":
        return VocabTokenizer([p.encode("latin-1") for p in spec.get("pieces", [])])
    raise ValueError(f"unknown tokenizer kind: {kind!r}")


def save_tokenizer(tok: Tokenizer, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tok.spec(), sort_keys=True), encoding="utf-8")


def load_tokenizer(path: str | Path) -> Tokenizer:
    return tokenizer_from_spec(json.loads(Path(path).read_text(encoding="utf-8")))
