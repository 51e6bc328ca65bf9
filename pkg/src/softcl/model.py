"""Toy trainable student encoder and frozen teacher oracle.

The student embeds a sentence as ``projection @ mean(token_table[ids])``.
The teacher is either a lookup table loaded from disk or a seeded
generator that hashes (language, sentence) to a fixed unit vector.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, DomainError, ShapeError

log = logging.getLogger(__name__)

UNK = "<unk>"


def tokenize(text: str) -> list:
    return text.lower().split()


@dataclass
class Vocab:
    tokens: list = field(default_factory=lambda: [UNK])

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNK:
            raise DataError("vocab must reserve id 0 for the unknown token")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("vocab has duplicate tokens")

    def __len__(self):
        return len(self.tokens)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index.get(t, 0) for t in tokens], dtype=np.int64)


@dataclass
class StudentEncoder:
    vocab: Vocab
    token_table: np.ndarray
    projection: np.ndarray

    def __post_init__(self):
        self.token_table = np.asarray(self.token_table, dtype=np.float64)
        self.projection = np.asarray(self.projection, dtype=np.float64)
        v, d = self.token_table.shape
        if v != len(self.vocab):
            raise ShapeError(f"token table has {v} rows for a vocab of {len(self.vocab)}")
        if d < 2 or self.projection.shape != (d, d):
            raise ShapeError(f"projection must be {d}x{d} with d >= 2, got {self.projection.shape}")

    @classmethod
    def init(cls, vocab: Vocab, dim: int, seed: int = 0, std: float = 0.1):
        rng = np.random.default_rng(seed)
        table = rng.normal(0.0, std, size=(len(vocab), dim))
        proj = rng.normal(0.0, std, size=(dim, dim))
        return cls(vocab, table, proj)

    @property
    def dim(self) -> int:
        return self.token_table.shape[1]

    def params(self) -> dict:
        return {"token_table": self.token_table, "projection": self.projection}

    def with_params(self, params: dict) -> "StudentEncoder":
        return StudentEncoder(self.vocab, params["token_table"], params["projection"])

    def copy(self) -> "StudentEncoder":
        return StudentEncoder(self.vocab, self.token_table.copy(), self.projection.copy())

    def sentence_ids(self, sentence) -> np.ndarray:
        tokens = tokenize(sentence) if isinstance(sentence, str) else list(sentence)
        if not tokens:
            raise DomainError("cannot encode an empty sentence")
        return self.vocab.ids(tokens)


def _pooled(enc: StudentEncoder, batch_ids) -> np.ndarray:
    return np.stack([enc.token_table[ids].mean(axis=0) for ids in batch_ids])


def embed_ids(enc: StudentEncoder, batch_ids) -> np.ndarray:
    # elementwise product + sum rather than a BLAS matmul, so a row's value
    # does not depend on how many other rows share the batch
    pooled = _pooled(enc, batch_ids)
    return np.sum(pooled[:, None, :] * enc.projection[None, :, :], axis=2)


def encode(enc: StudentEncoder, sentence) -> np.ndarray:
    """Embed one sentence, given as a token list or raw text."""
    return embed_ids(enc, [enc.sentence_ids(sentence)])[0]


def encode_batch(enc: StudentEncoder, sentences) -> np.ndarray:
    return embed_ids(enc, [enc.sentence_ids(s) for s in sentences])


def parameter_gradients(enc: StudentEncoder, batch_ids, grad_emb) -> dict:
    """Chain embedding gradients through the projection and the mean pooling."""
    grad_emb = np.asarray(grad_emb, dtype=np.float64)
    if grad_emb.shape != (len(batch_ids), enc.dim):
        raise ShapeError(f"embedding gradient {grad_emb.shape} does not match "
                         f"{len(batch_ids)} sentences of dim {enc.dim}")
    pooled = _pooled(enc, batch_ids)
    g_proj = grad_emb.T @ pooled
    g_pooled = grad_emb @ enc.projection
    g_table = np.zeros_like(enc.token_table)
    for ids, g in zip(batch_ids, g_pooled):
        np.add.at(g_table, ids, g / len(ids))
    return {"token_table": g_table, "projection": g_proj}


def batch_parameter_gradients(enc, src_ids, tgt_ids, grad_src, grad_tgt) -> dict:
    gs = parameter_gradients(enc, src_ids, grad_src)
    gt = parameter_gradients(enc, tgt_ids, grad_tgt)
    return {k: gs[k] + gt[k] for k in gs}


def encoder_gradient_step(enc: StudentEncoder, grad_src, grad_tgt, src_ids, tgt_ids,
                          update: Callable[[dict, dict], dict]) -> StudentEncoder:
    """Return a new encoder with ``update(params, param_grads)`` applied."""
    grads = batch_parameter_gradients(enc, src_ids, tgt_ids, grad_src, grad_tgt)
    return enc.with_params(update(enc.params(), grads))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(v @ v)


class TeacherOracle:
    """Frozen sentence-embedding provider keyed by (language, sentence).

    ``table`` maps language -> {sentence: unit vector}. Without a table the
    oracle runs in synthetic mode: every (language, sentence) pair is hashed
    together with ``seed`` into a deterministic Gaussian draw.
    """

    def __init__(self, table: dict | None = None, *, dim: int | None = None,
                 languages: Iterable[str] | None = None, seed: int = 0):
        if table is None:
            if dim is None or not languages:
                raise DataError("synthetic teacher needs a dim and a language set")
            self._table = None
            self._dim = int(dim)
            self._languages = frozenset(languages)
        else:
            self._table = {lang: dict(rows) for lang, rows in table.items()}
            dims = {v.shape[0] for rows in self._table.values() for v in rows.values()}
            if len(dims) != 1:
                raise DataError(f"teacher table mixes vector widths {sorted(dims)}")
            self._dim = dims.pop()
            self._languages = frozenset(self._table)
        self.seed = int(seed)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def languages(self) -> frozenset:
        return self._languages

    @property
    def synthetic(self) -> bool:
        return self._table is None

    def require(self, *langs: str):
        for lang in langs:
            if lang not in self._languages:
                raise DomainError(
                    f"teacher does not cover language {lang!r} (covers {sorted(self._languages)})")

    def embed(self, sentence: str, lang: str) -> np.ndarray:
        self.require(lang)
        key = sentence.strip()
        if self._table is not None:
            try:
                return self._table[lang][key].copy()
            except KeyError:
                raise DataError(f"sentence not in teacher table for {lang!r}: {key!r}") from None
        digest = hashlib.blake2b(f"{lang}\t{key}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng([self.seed, int.from_bytes(digest, "little")])
        return _unit(rng.normal(size=self._dim))

    def embed_batch(self, sentences: Sequence[str], lang: str) -> np.ndarray:
        return np.stack([self.embed(s, lang) for s in sentences])


def format_vector(v) -> str:
    return " ".join(repr(float(x)) for x in v)


def write_teacher_table(path, records: Iterable[tuple]):
    """Write (language, sentence, vector) records in the teacher table format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lang, sentence, vec in records:
            fh.write(f"{lang}\t{sentence}\t{format_vector(vec)}\n")


def load_teacher_table(path) -> TeacherOracle:
    table: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            lang, sentence, values = parts
            try:
                vec = np.array([float(x) for x in values.split()], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad float ({exc})") from None
            if vec.size == 0 or not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: empty or non-finite vector")
            norm = float(np.sqrt(vec @ vec))
            if abs(norm - 1.0) > 0.5:
                raise DataError(f"{path}:{lineno}: vector norm {norm:.6g} is far from 1")
            if abs(norm - 1.0) > 1e-6:
                log.warning("%s:%d: teacher vector norm %.9g renormalized", path, lineno, norm)
            table.setdefault(lang, {})[sentence.strip()] = vec / norm
    if not table:
        raise DataError(f"{path}: teacher table is empty")
    return TeacherOracle(table)
