"""Target matrices w(i, j) for the contrastive loss.

Hard labels are the identity. Priority labels apply a row softmax to the
teacher similarities of the anchor-language sentences. Average labels apply
it to the mean of the source- and target-language teacher similarities and
therefore need a teacher that covers both languages.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeError
from .simcore import row_softmax, scaled_similarity_matrix

HARD = "hard"
PRIORITY = "priority"
AVERAGE = "average"
LABEL_MODES = (HARD, PRIORITY, AVERAGE)

DEFAULT_PRIORITY = ("en", "ru", "ja", "fr", "ko")


@dataclass(frozen=True)
class LabelMatrix:
    values: np.ndarray
    mode: str

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def check_priority(priority: Sequence[str]) -> tuple:
    priority = tuple(priority)
    if not priority:
        raise DomainError("language priority list is empty")
    if len(set(priority)) != len(priority):
        raise DomainError(f"language priority list has duplicates: {list(priority)}")
    return priority


def hard_labels(n: int) -> LabelMatrix:
    if n < 1:
        raise DomainError(f"label matrix needs n >= 1, got {n}")
    return LabelMatrix(np.eye(n), HARD)


def select_anchor(lang_a: str, lang_b: str, priority: Sequence[str] = DEFAULT_PRIORITY) -> str:
    """Return whichever of the two languages sits earlier in ``priority``."""
    priority = check_priority(priority)
    if lang_a == lang_b:
        raise DomainError(f"anchor selection needs two different languages, got {lang_a!r} twice")
    for lang in (lang_a, lang_b):
        if lang not in priority:
            raise DomainError(f"language {lang!r} missing from priority order {list(priority)}")
    return lang_a if priority.index(lang_a) < priority.index(lang_b) else lang_b


def priority_labels(anchor_teacher, tau: float) -> LabelMatrix:
    sims = scaled_similarity_matrix(anchor_teacher, anchor_teacher, tau)
    return LabelMatrix(row_softmax(sims), PRIORITY)


def average_labels(src_teacher, tgt_teacher, tau: float) -> LabelMatrix:
    src_teacher = np.asarray(src_teacher, dtype=np.float64)
    tgt_teacher = np.asarray(tgt_teacher, dtype=np.float64)
    if src_teacher.shape != tgt_teacher.shape:
        raise ShapeError(
            f"teacher matrices differ in shape: {src_teacher.shape} vs {tgt_teacher.shape}")
    s = scaled_similarity_matrix(src_teacher, src_teacher, tau)
    t = scaled_similarity_matrix(tgt_teacher, tgt_teacher, tau)
    return average_from_similarities(s, t)


def average_from_similarities(sim_src, sim_tgt) -> LabelMatrix:
    """Average labels from two mono-lingual similarity matrices (1/tau applied)."""
    sim_src = np.asarray(sim_src, dtype=np.float64)
    sim_tgt = np.asarray(sim_tgt, dtype=np.float64)
    if sim_src.shape != sim_tgt.shape:
        raise ShapeError(f"similarity matrices differ in shape: {sim_src.shape} vs {sim_tgt.shape}")
    return LabelMatrix(row_softmax((sim_src + sim_tgt) / 2.0), AVERAGE)
