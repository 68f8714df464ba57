"""Corpus ingestion, cleaning, hashed featurization, splitting and partitioning."""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ValidationError


@dataclass(frozen=True, eq=False)
class LabeledCorpus:
    """Ordered texts with 0-based category labels.

    ``label_names[c]`` is the original label string of category ``c``.
    """

    texts: tuple[str, ...]
    labels: np.ndarray
    num_categories: int
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        labels.setflags(write=False)
        if len(self.texts) == 0:
            raise ValidationError("corpus must contain at least one example")
        if len(self.texts) != len(labels):
            raise ValidationError("texts and labels differ in length")
        if self.num_categories < 2:
            raise ValidationError("num_categories must be >= 2")
        if labels.min() < 0 or labels.max() >= self.num_categories:
            raise ValidationError("label outside [0, num_categories)")
        if not self.label_names:
            object.__setattr__(
                self, "label_names", tuple(str(c) for c in range(self.num_categories))
            )

    def __len__(self) -> int:
        return len(self.texts)

    def subset(self, indices: Sequence[int]) -> "LabeledCorpus":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledCorpus(
            texts=tuple(self.texts[i] for i in idx),
            labels=self.labels[idx],
            num_categories=self.num_categories,
            label_names=self.label_names,
        )

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_categories)


@dataclass(frozen=True)
class PartitionSpec:
    mode: str = "iid"
    num_clients: int = 10
    num_shards: int = 10
    shard_size: int = 240
    shards_per_client: int = 1
    seed: int = 0

    def validate(self, corpus_size: int | None = None) -> None:
        if self.mode not in ("iid", "noniid"):
            raise ValidationError(f"unknown partition mode {self.mode!r}")
        if self.num_clients < 1:
            raise ValidationError("num_clients must be >= 1")
        if self.mode == "noniid":
            if min(self.num_shards, self.shard_size, self.shards_per_client) < 1:
                raise ValidationError("shard parameters must be positive")
            if self.num_shards != self.num_clients * self.shards_per_client:
                raise ValidationError(
                    f"num_shards={self.num_shards} != num_clients*shards_per_client="
                    f"{self.num_clients * self.shards_per_client}"
                )
            if corpus_size is not None and self.num_shards * self.shard_size > corpus_size:
                raise ValidationError(
                    f"{self.num_shards} shards of {self.shard_size} exceed corpus size {corpus_size}"
                )


@dataclass(frozen=True, eq=False)
class ClientShard:
    client_id: int
    indices: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.indices)


# --------------------------------------------------------------------------- ingestion


def load_corpus(
    path: str | Path,
    text_column: str = "text",
    label_column: str = "label",
    delimiter: str = ",",
) -> LabeledCorpus:
    """Read a delimited UTF-8 file with a header row.

    Labels are mapped to category indices in order of first appearance.
    """
    raw = Path(path).read_bytes()
    try:
        content = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw[: exc.start].count(b"\n") + 1
        raise ValidationError(f"{path}: line {line}: invalid UTF-8") from exc
    if content.startswith("\ufeff"):
        content = content[1:]

    reader = csv.reader(io.StringIO(content, newline=""), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError(f"{path}: empty file") from None
    for col in (text_column, label_column):
        if col not in header:
            raise ConfigError(f"{path}: column {col!r} not in header {header}")
    ti, li = header.index(text_column), header.index(label_column)

    texts: list[str] = []
    labels: list[int] = []
    mapping: dict[str, int] = {}
    try:
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            texts.append(row[ti])
            labels.append(mapping.setdefault(row[li], len(mapping)))
    except csv.Error as exc:
        raise ValidationError(f"{path}: line {reader.line_num}: {exc}") from exc

    if not texts:
        raise ValidationError(f"{path}: no data rows")
    if len(mapping) < 2:
        raise ValidationError(f"{path}: need at least 2 distinct labels, found {len(mapping)}")
    return LabeledCorpus(tuple(texts), np.array(labels), len(mapping), tuple(mapping))


def write_label_mapping(corpus: LabeledCorpus, path: str | Path) -> None:
    lines = [f"{i}\t{name}\n" for i, name in enumerate(corpus.label_names)]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")


# --------------------------------------------------------------------------- text

_URL = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_MENTION = re.compile(r"@\w+")


def clean_text(raw: str) -> str:
    """Lowercase, drop URLs, @-mentions and '#', collapse whitespace.

    Removed spans become spaces so that deleting one never glues its
    neighbours into a new URL or mention; this keeps the function idempotent.
    """
    text = raw.lower().replace("#", " ")
    text = _URL.sub(" ", text)
    text = _MENTION.sub(" ", text)
    return " ".join(text.split())


@functools.lru_cache(maxsize=1 << 16)
def _hash64(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


_SIGN_BIT = 63
_LOW_MASK = (1 << _SIGN_BIT) - 1


def word_ngrams(text: str, ngram_max: int) -> list[str]:
    words = text.split()
    grams = []
    for n in range(1, ngram_max + 1):
        grams.extend(" ".join(words[i : i + n]) for i in range(len(words) - n + 1))
    return grams


def featurize(text: str, feature_dim: int, ngram_max: int = 1) -> np.ndarray:
    """Signed hashing-trick bag of word n-grams, L2-normalized.

    Bit 63 of the 64-bit BLAKE2b digest picks the sign; the low 63 bits
    modulo ``feature_dim`` pick the index.
    """
    if feature_dim < 2:
        raise ValidationError("feature_dim must be >= 2")
    if ngram_max not in (1, 2):
        raise ValidationError("ngram_max must be 1 or 2")
    vec = np.zeros(feature_dim, dtype=np.float64)
    for gram in word_ngrams(text, ngram_max):
        h = _hash64(gram)
        sign = -1.0 if (h >> _SIGN_BIT) & 1 else 1.0
        vec[(h & _LOW_MASK) % feature_dim] += sign
    norm = math.sqrt(math.fsum(v * v for v in vec if v))
    if norm > 0:
        vec /= norm
    return vec


def featurize_corpus(corpus: LabeledCorpus, feature_dim: int, ngram_max: int = 1) -> np.ndarray:
    """Clean and featurize every text; returns an (n, feature_dim) matrix."""
    return np.stack([featurize(clean_text(t), feature_dim, ngram_max) for t in corpus.texts])


# --------------------------------------------------------------------------- split / partition


def split_train_test(
    corpus: LabeledCorpus, train_fraction: float = 0.8, seed: int = 0
) -> tuple[LabeledCorpus, LabeledCorpus]:
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must lie in (0, 1)")
    n = len(corpus)
    # guard against 0.57*100 == 56.99999999999999
    n_train = math.floor(n * train_fraction + 1e-9)
    if n_train == 0 or n_train == n:
        raise ValidationError(f"split of {n} examples at {train_fraction} leaves a side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return corpus.subset(perm[:n_train]), corpus.subset(perm[n_train:])


def partition_iid(train: LabeledCorpus | int, num_clients: int, seed: int = 0) -> list[ClientShard]:
    """Shuffle, then deal indices round-robin. ``train`` may be a corpus or its size."""
    n = train if isinstance(train, int) else len(train)
    if num_clients < 1:
        raise ValidationError("num_clients must be >= 1")
    if num_clients > n:
        raise ValidationError(f"{num_clients} clients exceed {n} examples")
    perm = np.random.default_rng(seed).permutation(n)
    return [ClientShard(c, np.sort(perm[c::num_clients])) for c in range(num_clients)]


def partition_noniid(train: LabeledCorpus, spec: PartitionSpec) -> list[ClientShard]:
    """Label-sorted shards dealt to clients by a seeded permutation.

    Examples beyond ``num_shards * shard_size`` are appended one per shard,
    starting from shard 0, so nothing is dropped.
    """
    if spec.mode != "noniid":
        raise ValidationError("partition_noniid requires mode='noniid'")
    spec.validate(len(train))
    order = np.argsort(train.labels, kind="stable")
    cut = spec.num_shards * spec.shard_size
    shards = [list(order[s * spec.shard_size : (s + 1) * spec.shard_size]) for s in range(spec.num_shards)]
    for j, idx in enumerate(order[cut:]):
        shards[j % spec.num_shards].append(idx)

    perm = np.random.default_rng(spec.seed).permutation(spec.num_shards)
    k = spec.shards_per_client
    out = []
    for c in range(spec.num_clients):
        idx = np.concatenate([shards[s] for s in perm[c * k : (c + 1) * k]]).astype(np.int64)
        out.append(ClientShard(c, np.sort(idx)))
    return out


def partition(train: LabeledCorpus, spec: PartitionSpec) -> list[ClientShard]:
    spec.validate(len(train))
    if spec.mode == "iid":
        return partition_iid(train, spec.num_clients, spec.seed)
    return partition_noniid(train, spec)


# --------------------------------------------------------------------------- synthetic data


def synth_corpus(
    num_examples: int,
    num_categories: int = 2,
    feature_dim: int = 16,
    separation: float = 5.0,
    seed: int = 0,
) -> LabeledCorpus:
    """Gaussian blobs rendered as pseudo-token texts.

    Each example is a latent point ``mean[label] + N(0, I)`` in ``feature_dim``
    dimensions; class means lie along random orthonormal directions,
    ``separation`` apart. Coordinate ``j`` is
    written as token ``p{j}`` (positive) or ``n{j}`` (negative) repeated
    ``round(2*|x_j|)`` times, so texts go through the normal clean/featurize path.
    """
    if num_examples < num_categories:
        raise ValidationError("num_examples must be >= num_categories")
    if separation < 0:
        raise ValidationError("separation must be >= 0")
    if num_categories < 2 or feature_dim < 1:
        raise ValidationError("need num_categories >= 2 and feature_dim >= 1")
    rng = np.random.default_rng(seed)
    if feature_dim >= num_categories:
        # dense orthonormal directions: the signal is spread over every coordinate
        q, _ = np.linalg.qr(rng.normal(size=(feature_dim, num_categories)))
        directions = q.T
    else:
        directions = rng.normal(size=(num_categories, feature_dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * (separation / math.sqrt(2.0))

    labels = rng.permutation(np.arange(num_examples) % num_categories)
    latent = means[labels] + rng.normal(size=(num_examples, feature_dim))

    texts = []
    for row in latent:
        tokens = []
        for j, x in enumerate(row):
            tokens.extend([("p" if x > 0 else "n") + str(j)] * int(round(2 * abs(x))))
        texts.append(" ".join(tokens))
    names = tuple(f"c{c}" for c in range(num_categories))
    return LabeledCorpus(tuple(texts), labels, num_categories, names)
