"""Parallel corpora, STS files, sampling, overlap filtering and synthetic data.

Random sampling uses numpy's ``default_rng(seed)``, i.e. the PCG64 bit
generator seeded through ``SeedSequence`` with a 64-bit integer. Splits are
therefore reproducible across machines for a given numpy major version.
"""

import logging
import os
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DomainError
from .model import Vocab, UNK, tokenize, write_teacher_table

log = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.10


@dataclass
class ParallelCorpus:
    src_lang: str
    tgt_lang: str
    pairs: list = field(default_factory=list)
    dropped: int = 0

    def __post_init__(self):
        if self.src_lang == self.tgt_lang:
            raise DataError(f"corpus languages must differ, got {self.src_lang!r} twice")
        for i, (s, t) in enumerate(self.pairs):
            if not s.strip() or not t.strip():
                raise DataError(f"pair {i} has an empty side")

    def __len__(self):
        return len(self.pairs)

    @property
    def sources(self) -> list:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list:
        return [t for _, t in self.pairs]

    def subset(self, indices) -> "ParallelCorpus":
        return ParallelCorpus(self.src_lang, self.tgt_lang, [self.pairs[i] for i in indices])


@dataclass(frozen=True)
class StsRecord:
    sentence_a: str
    sentence_b: str
    gold: float

    def __post_init__(self):
        if not 0.0 <= self.gold <= 5.0:
            raise DataError(f"STS gold score {self.gold} outside [0, 5]")


def load_tsv(path, src_lang: str = "src", tgt_lang: str = "tgt") -> ParallelCorpus:
    """Read ``src<TAB>tgt`` lines. Malformed lines are skipped and counted."""
    pairs, bad, seen = [], 0, 0
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from None
    for line in lines:
        if not line.strip():
            continue
        seen += 1
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            bad += 1
            continue
        pairs.append((parts[0].strip(), parts[1].strip()))
    if seen == 0:
        log.warning("corpus %s is empty", path)
    elif bad:
        log.warning("corpus %s: skipped %d malformed of %d lines", path, bad, seen)
        if bad > MAX_MALFORMED_FRACTION * seen:
            raise DataError(f"corpus {path}: {bad}/{seen} malformed lines exceeds 10%")
    return ParallelCorpus(src_lang, tgt_lang, pairs, dropped=bad)


def write_tsv(path, rows: Iterable[Sequence]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write("\t".join(str(x) for x in row) + "\n")


def load_gold(path, n: int | None = None) -> np.ndarray:
    """Read an ``i<TAB>j`` alignment file into an index array ``gold[i] = j``."""
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                i, j = (int(x) for x in line.split("\t"))
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected 'i<TAB>j'") from None
            entries[i] = j
    size = len(entries) if n is None else n
    if sorted(entries) != list(range(size)):
        raise DataError(f"{path}: gold must list every source index 0..{size - 1} exactly once")
    return np.array([entries[i] for i in range(size)], dtype=np.int64)


def load_sts(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 'a<TAB>b<TAB>score'")
            try:
                score = float(parts[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad score {parts[2]!r}") from None
            records.append(StsRecord(parts[0], parts[1], score))
    return records


def sample_split(corpus: ParallelCorpus, n_total: int, n_train: int, seed: int = 0):
    """Draw ``n_total`` pairs without replacement; the first ``n_train`` train."""
    if not 0 <= n_train <= n_total:
        raise DomainError(f"need 0 <= n_train <= n_total, got {n_train}, {n_total}")
    if n_total > len(corpus):
        raise DomainError(f"cannot sample {n_total} pairs from a corpus of {len(corpus)}")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(corpus), size=n_total, replace=False)
    return corpus.subset(picked[:n_train]), corpus.subset(picked[n_train:])


def sample_split_many(corpora: Sequence[ParallelCorpus], n_total: int, n_train: int, seed: int = 0):
    """Split each bilingual corpus on its own, with a per-corpus seed offset."""
    trains, valids = [], []
    for k, corpus in enumerate(corpora):
        tr, va = sample_split(corpus, min(n_total, len(corpus)),
                              min(n_train, len(corpus)), seed + k)
        trains.append(tr)
        valids.append(va)
    return trains, valids


_WS = re.compile(r"\s+")


def normalize_sentence(text: str) -> str:
    return _WS.sub(" ", unicodedata.normalize("NFC", text).strip())


def filter_overlap(train: ParallelCorpus, test_sentences: Iterable[str]) -> ParallelCorpus:
    """Drop pairs whose source or target matches a test sentence after normalization."""
    test = {normalize_sentence(s) for s in test_sentences}
    kept = [(s, t) for s, t in train.pairs
            if normalize_sentence(s) not in test and normalize_sentence(t) not in test]
    removed = len(train) - len(kept)
    if removed:
        log.info("overlap filter removed %d of %d pairs", removed, len(train))
    return ParallelCorpus(train.src_lang, train.tgt_lang, kept, dropped=train.dropped + removed)


def build_vocab(corpora: Sequence[ParallelCorpus], min_count: int = 1) -> Vocab:
    if min_count < 1:
        raise DomainError("min_count must be >= 1")
    counts = Counter()
    for corpus in corpora:
        for s, t in corpus.pairs:
            counts.update(tokenize(s))
            counts.update(tokenize(t))
    counts.pop(UNK, None)
    kept = sorted((tok for tok, c in counts.items() if c >= min_count),
                  key=lambda tok: (-counts[tok], tok))
    return Vocab([UNK] + kept)


@dataclass
class SyntheticSpec:
    concepts: int = 20
    pairs: int = 600
    vocab_per_concept: int = 8
    noise: float = 0.05
    teacher_dim: int = 96
    topics: int = 5
    topic_spread: float = 0.5
    seed: int = 7
    src_lang: str = "en"
    tgt_lang: str = "ko"
    min_len: int = 3
    max_len: int = 8
    teacher_langs: str = "both"

    def validate(self):
        if self.concepts < 2:
            raise DomainError("need at least 2 concepts")
        if self.pairs < self.concepts:
            raise DomainError(f"pairs ({self.pairs}) must be >= concepts ({self.concepts})")
        if not 1 <= self.min_len <= self.max_len <= self.vocab_per_concept:
            raise DomainError("need 1 <= min_len <= max_len <= vocab_per_concept")
        if self.noise < 0 or self.teacher_dim < 2:
            raise DomainError("noise must be >= 0 and teacher_dim >= 2")
        if self.topics < 0 or self.topic_spread <= 0:
            raise DomainError("topics must be >= 0 and topic_spread > 0")
        if self.src_lang == self.tgt_lang:
            raise DomainError("source and target language must differ")
        if self.teacher_langs not in ("both", "src"):
            raise DomainError("teacher_langs must be 'both' or 'src'")


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def generate_synthetic(spec: SyntheticSpec):
    """Build a bilingual toy corpus with a concept-structured teacher.

    Concepts are unit vectors in teacher space; with ``topics > 0`` they are
    grouped around shared topic directions so that related concepts have
    graded similarity. Each concept owns a block of ``vocab_per_concept``
    word slots per language, and a slot's words in the two languages are
    translations of each other. A pair picks a concept and 3-8 distinct
    slots; the target side uses the same slots in shuffled order.

    The teacher embedding of a sentence is ``normalize(concept + noise * n)``
    where ``n`` is the sum of one Gaussian vector per word slot (shared by
    both sides of the pair) plus one independent Gaussian draw per sentence.

    Returns ``(corpus, teacher_records, gold)`` where ``teacher_records`` is a
    list of ``(lang, sentence, unit vector)``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    K, V, dt = spec.concepts, spec.vocab_per_concept, spec.teacher_dim
    concept_vecs = _unit_rows(rng.normal(size=(K, dt)))
    if spec.topics:
        topic_vecs = _unit_rows(rng.normal(size=(spec.topics, dt)))
        concept_vecs = _unit_rows(topic_vecs[np.arange(K) % spec.topics]
                                  + spec.topic_spread * concept_vecs)
    slot_vecs = rng.normal(size=(K, V, dt))
    assignment = rng.permutation(np.arange(spec.pairs) % K)

    def word(lang, c, k):
        return f"{lang}{c:02d}w{k:02d}"

    pairs, records, seen = [], [], set()
    for c in assignment:
        while True:
            length = int(rng.integers(spec.min_len, spec.max_len + 1))
            slots = rng.choice(V, size=length, replace=False)
            key = (int(c), tuple(sorted(slots.tolist())))
            if key not in seen:
                seen.add(key)
                break
        tgt_slots = slots[rng.permutation(length)]
        src = " ".join(word(spec.src_lang, c, k) for k in slots)
        tgt = " ".join(word(spec.tgt_lang, c, k) for k in tgt_slots)
        meaning = slot_vecs[c, slots].sum(axis=0)
        for lang, sent in ((spec.src_lang, src), (spec.tgt_lang, tgt)):
            n = meaning + rng.normal(size=dt)
            vec = concept_vecs[c] + spec.noise * n
            if spec.teacher_langs == "both" or lang == spec.src_lang:
                records.append((lang, sent, vec / np.sqrt(vec @ vec)))
        pairs.append((src, tgt))
    corpus = ParallelCorpus(spec.src_lang, spec.tgt_lang, pairs)
    return corpus, records, np.arange(spec.pairs, dtype=np.int64)


def write_synthetic(out_dir, spec: SyntheticSpec) -> dict:
    corpus, records, gold = generate_synthetic(spec)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "corpus": os.path.join(out_dir, "corpus.tsv"),
        "teacher": os.path.join(out_dir, "teacher.tsv"),
        "gold": os.path.join(out_dir, "gold.tsv"),
    }
    write_tsv(paths["corpus"], corpus.pairs)
    write_teacher_table(paths["teacher"], records)
    write_tsv(paths["gold"], ((i, j) for i, j in enumerate(gold)))
    return paths
