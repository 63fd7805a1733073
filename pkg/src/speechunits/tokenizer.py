"""Shared multilingual subword vocabulary: deterministic BPE with a
word-boundary marker so text round-trips losslessly."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

MARKER = "▁"  # word-boundary marker, prefixed to every word

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


@dataclass
class Vocabulary:
    pieces: list[str]
    merges: list[tuple[str, str]]
    piece_to_id: dict[str, int] = field(default_factory=dict)
    _word_cache: dict[str, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.pieces[:4] != list(SPECIALS):
            raise ValueError("vocabulary must start with the four specials")
        if not self.piece_to_id:
            self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}

    def __len__(self) -> int:
        return len(self.pieces)


def _word_symbols(word: str) -> list[str]:
    return [MARKER, *word]


def train_bpe(lines: Iterable[str], vocab_size: int) -> Vocabulary:
    """Greedy highest-frequency pair merging over whitespace-split words.

    One shared vocabulary across all languages; frequency ties break to the
    lexicographically smallest pair so training is deterministic.
    """
    word_freq: Counter[str] = Counter()
    for line in lines:
        word_freq.update(line.split())
    if not word_freq:
        raise ValueError("empty corpus: no words to train on")

    segmentations: dict[str, list[str]] = {
        w: _word_symbols(w) for w in word_freq}
    alphabet = sorted({s for seg in segmentations.values() for s in seg})
    base = len(SPECIALS) + len(alphabet)
    if vocab_size < base:
        raise ValueError(
            f"vocab_size {vocab_size} below alphabet+specials ({base})")

    pieces = list(SPECIALS) + alphabet
    merges: list[tuple[str, str]] = []
    while len(pieces) < vocab_size:
        pair_freq: Counter[tuple[str, str]] = Counter()
        for word, seg in segmentations.items():
            f = word_freq[word]
            for a, b in zip(seg, seg[1:]):
                pair_freq[(a, b)] += f
        if not pair_freq:
            break
        best = min(pair_freq, key=lambda p: (-pair_freq[p], p))
        merged = best[0] + best[1]
        for word, seg in segmentations.items():
            segmentations[word] = _apply_merge(seg, best, merged)
        merges.append(best)
        pieces.append(merged)

    return Vocabulary(pieces=pieces, merges=merges)


def _apply_merge(symbols: list[str], pair: tuple[str, str],
                 merged: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if (i + 1 < len(symbols)
                and symbols[i] == pair[0] and symbols[i + 1] == pair[1]):
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _encode_word(vocab: Vocabulary, word: str) -> list[int]:
    cached = vocab._word_cache.get(word)
    if cached is not None:
        return cached
    symbols = _word_symbols(word)
    for pair in vocab.merges:
        symbols = _apply_merge(symbols, pair, pair[0] + pair[1])
    ids = [vocab.piece_to_id.get(s, UNK_ID) for s in symbols]
    vocab._word_cache[word] = ids
    return ids


def encode(vocab: Vocabulary, text: str) -> list[int]:
    """BOS + merged subword ids + EOS. Unknown characters become UNK."""
    ids = [BOS_ID]
    for word in text.split():
        ids.extend(_encode_word(vocab, word))
    ids.append(EOS_ID)
    return ids


def decode(vocab: Vocabulary, tokens: Sequence[int]) -> str:
    """Concatenate pieces, expand boundary markers into spaces, drop
    specials."""
    chunks: list[str] = []
    for t in tokens:
        t = int(t)
        if t < 0 or t >= len(vocab.pieces):
            raise IndexError(f"token id {t} outside vocabulary of {len(vocab)}")
        if t in (PAD_ID, BOS_ID, EOS_ID, UNK_ID):
            continue
        chunks.append(vocab.pieces[t])
    return "".join(chunks).replace(MARKER, " ").lstrip(" ")


def save_vocabulary(path: str | Path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"bpe-vocab 1 {len(vocab.pieces)} {len(vocab.merges)}\n")
        for piece in vocab.pieces:
            fh.write(piece + "\n")
        for a, b in vocab.merges:
            fh.write(f"{a} {b}\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "bpe-vocab" or header[1] != "1":
            raise ValueError(f"{path}: bad vocabulary header {header}")
        n_pieces, n_merges = int(header[2]), int(header[3])
        pieces = [fh.readline().rstrip("\n") for _ in range(n_pieces)]
        merges = []
        for _ in range(n_merges):
            a, b = fh.readline().rstrip("\n").split(" ")
            merges.append((a, b))
    return Vocabulary(pieces=pieces, merges=merges)
