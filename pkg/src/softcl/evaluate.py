"""Bitext retrieval accuracy, xSIM error rate, Spearman STS and teacher agreement."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError, ShapeError, UndefinedCorrelation
from .model import encode_batch
from .simcore import normalize_rows, row_softmax

RATIO = "ratio"
COSINE = "cosine"


@dataclass
class EvalReport:
    acc_src2tgt: float | None = None
    acc_tgt2src: float | None = None
    acc_avg: float | None = None
    xsim_error: float | None = None
    spearman: float | None = None
    count: int = 0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _cosines(src, tgt):
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    if src.ndim != 2 or src.shape != tgt.shape:
        raise ShapeError(f"embedding matrices differ in shape: {src.shape} vs {tgt.shape}")
    return normalize_rows(src) @ normalize_rows(tgt).T


def check_gold(gold, n: int) -> np.ndarray:
    gold = np.asarray(gold)
    if gold.shape != (n,) or not np.issubdtype(gold.dtype, np.integer):
        raise ShapeError(f"gold must be an integer index of length {n}")
    if np.any(gold < 0) or np.any(gold >= n) or len(np.unique(gold)) != n:
        raise DomainError(f"gold is not a permutation of 0..{n - 1}")
    return gold


def retrieval_accuracy(src, tgt, gold=None):
    """Nearest-neighbour accuracy in both directions and their mean.

    ``gold[i]`` is the target row that source row ``i`` should retrieve.
    Ties resolve to the lowest index.
    """
    cos = _cosines(src, tgt)
    n = cos.shape[0]
    gold = np.arange(n) if gold is None else check_gold(gold, n)
    inverse = np.empty(n, dtype=np.int64)
    inverse[gold] = np.arange(n)
    fwd = float(np.mean(np.argmax(cos, axis=1) == gold))
    bwd = float(np.mean(np.argmax(cos, axis=0) == inverse))
    return fwd, bwd, (fwd + bwd) / 2.0


def _topk_mean(cos, k, axis):
    part = -np.partition(-cos, k - 1, axis=axis)
    part = part[:, :k] if axis == 1 else part[:k, :]
    return part.mean(axis=axis)


def xsim_error_rate(src, tgt, gold=None, k: int = 4, margin: str = RATIO) -> float:
    """Fraction of sources whose best-scoring target is not the gold one.

    With ``margin="ratio"`` a candidate's cosine is divided by the mean of
    the two sides' average cosine to their ``k`` nearest neighbours; with
    ``margin="cosine"`` the raw cosine is used. A ratio with a non-positive
    denominator is meaningless and scores ``-inf``.
    """
    cos = _cosines(src, tgt)
    n = cos.shape[0]
    if n < 2:
        raise DomainError("xSIM needs at least two sentences")
    gold = np.arange(n) if gold is None else check_gold(gold, n)
    if margin == RATIO:
        if k < 1:
            raise DomainError("k must be >= 1")
        k = min(k, n - 1)
        fwd = _topk_mean(cos, k, axis=1)
        bwd = _topk_mean(cos, k, axis=0)
        denom = (fwd[:, None] + bwd[None, :]) / 2.0
        scores = np.full_like(cos, -np.inf)
        np.divide(cos, denom, out=scores, where=denom > 0)
    elif margin == COSINE:
        scores = cos
    else:
        raise DomainError(f"unknown margin mode {margin!r}")
    return float(np.mean(np.argmax(scores, axis=1) != gold))


def spearman(pred, gold) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gold = np.asarray(gold, dtype=np.float64).ravel()
    if pred.shape != gold.shape:
        raise ShapeError(f"length mismatch: {pred.size} vs {gold.size}")
    if pred.size < 2:
        raise DomainError("spearman needs at least two observations")
    if np.all(pred == pred[0]) or np.all(gold == gold[0]):
        raise UndefinedCorrelation("spearman correlation is undefined for a constant input")
    rp = rankdata(pred) - (pred.size + 1) / 2.0
    rg = rankdata(gold) - (gold.size + 1) / 2.0
    r = float(rp @ rg / np.sqrt((rp @ rp) * (rg @ rg)))
    return max(-1.0, min(1.0, r))


def sts_eval(encoder, records) -> float:
    if not records:
        raise DomainError("no STS records")
    a = encode_batch(encoder, [r.sentence_a for r in records])
    b = encode_batch(encoder, [r.sentence_b for r in records])
    pred = np.einsum("ij,ij->i", normalize_rows(a), normalize_rows(b))
    return spearman(pred, [r.gold for r in records])


def off_diagonal(m) -> np.ndarray:
    m = np.asarray(m)
    return m[~np.eye(m.shape[0], dtype=bool)]


def teacher_agreement(student_sim, teacher_labels) -> float:
    """Spearman between off-diagonal student softmax entries and teacher labels."""
    student_sim = np.asarray(student_sim, dtype=np.float64)
    labels = np.asarray(teacher_labels, dtype=np.float64)
    if student_sim.shape != labels.shape or student_sim.ndim != 2 \
            or student_sim.shape[0] != student_sim.shape[1]:
        raise ShapeError(f"shapes differ: {student_sim.shape} vs {labels.shape}")
    if student_sim.shape[0] < 3:
        raise DomainError("teacher agreement needs N >= 3")
    return spearman(off_diagonal(row_softmax(student_sim)), off_diagonal(labels))
