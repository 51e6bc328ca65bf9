import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from softcl.data import SyntheticSpec, build_vocab, generate_synthetic, sample_split  # noqa: E402
from softcl.model import StudentEncoder, TeacherOracle  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class SyntheticTask:
    """The default desk-scale task: 500 train / 100 valid pairs, student d=16."""

    def __init__(self, seed=7, **spec):
        self.spec = SyntheticSpec(seed=seed, **spec)
        corpus, records, _ = generate_synthetic(self.spec)
        table = {}
        for lang, sent, vec in records:
            table.setdefault(lang, {})[sent] = vec
        self.teacher = TeacherOracle(table)
        self.corpus = corpus
        self.train, self.valid = sample_split(corpus, 600, 500, seed=seed)
        self.vocab = build_vocab([self.train])
        self.seed = seed

    def student(self, dim=16):
        return StudentEncoder.init(self.vocab, dim, seed=self.seed)


@pytest.fixture(scope="session")
def task():
    return SyntheticTask()
