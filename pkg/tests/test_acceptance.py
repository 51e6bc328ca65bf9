"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (shown even under output
capture) before asserting. Run on its own with

    python3 -m pytest tests/test_acceptance.py -v
"""

import glob
import json
import os
import subprocess
import sys
import time
import unicodedata

import numpy as np
import pytest

from softcl.data import ParallelCorpus, filter_overlap, sample_split
from softcl.evaluate import retrieval_accuracy, spearman, teacher_agreement, xsim_error_rate
from softcl.labels import average_labels, hard_labels, priority_labels
from softcl.loss import LossConfig, total_loss
from softcl.model import embed_ids
from softcl.simcore import scaled_similarity_matrix
from softcl.trainer import TrainerConfig, fit

import oracles
from conftest import SyntheticTask

TAU = 0.1
SINGLE_THREAD = {"OMP_NUM_THREADS": "1", "OPENBLAS_NUM_THREADS": "1", "MKL_NUM_THREADS": "1"}


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}")
        assert ok, detail
    return emit


def random_labels(rng, mode, n, d):
    t_src, t_tgt = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    if mode == "hard":
        return hard_labels(n)
    if mode == "priority":
        return priority_labels(t_src, TAU)
    return average_labels(t_src, t_tgt, TAU)


def test_c01_gradient_correctness(verdict):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, count = 0.0, 0
    for mode in ("hard", "priority", "average"):
        for tcm in (False, True):
            for lam in (0.0, 0.1, 1.0):
                cfg = LossConfig(temperature=TAU, lam=lam, mode=mode, tcm=tcm)
                for _ in range(6):
                    n, d = int(rng.integers(2, 9)), int(rng.integers(2, 17))
                    src, tgt = rng.normal(size=(n, d)), rng.normal(size=(n, d))
                    w = random_labels(rng, mode, n, int(rng.integers(2, 17)))
                    b = total_loss(src, tgt, w, cfg)
                    num_s = oracles.central_diff(lambda x: total_loss(x, tgt, w, cfg).total, src)
                    num_t = oracles.central_diff(lambda x: total_loss(src, x, w, cfg).total, tgt)
                    worst = max(worst, oracles.max_rel_error(b.grad_src, num_s),
                                oracles.max_rel_error(b.grad_tgt, num_t))
                    count += 1
    elapsed = time.perf_counter() - start
    ok = count >= 100 and worst <= 1e-4 and elapsed < 30
    verdict(1, "gradient correctness", ok,
            f"{count} instances, max rel error {worst:.2e} (<= 1e-4), {elapsed:.1f}s (< 30s)")


def test_c02_hard_label_reduction(verdict):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(50):
        n, d = int(rng.integers(2, 9)), int(rng.integers(2, 17))
        src, tgt = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        got = total_loss(src, tgt, hard_labels(n), LossConfig(tcm=False)).total
        worst = max(worst, abs(got - oracles.info_nce(src.tolist(), tgt.tolist(), TAU)))
    verdict(2, "hard-label reduction", worst <= 1e-10,
            f"50 instances, max |soft - direct InfoNCE| = {worst:.1e} (<= 1e-10)")


def test_c03_label_invariants(verdict):
    rng = np.random.default_rng(303)
    row_dev = avg_dev = 0.0
    for _ in range(100):
        n, d = int(rng.integers(1, 11)), int(rng.integers(2, 17))
        tau = float(rng.uniform(0.02, 2.0))
        a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        for w in (hard_labels(n), priority_labels(a, tau), average_labels(a, b, tau)):
            row_dev = max(row_dev, float(np.max(np.abs(w.values.sum(axis=1) - 1))))
        avg_dev = max(avg_dev, float(np.max(np.abs(average_labels(a, a, tau).values
                                                   - priority_labels(a, tau).values))))
    limit_dev, checked = 0.0, 0
    while checked < 50:
        n = int(rng.integers(2, 9))
        e = rng.normal(size=(n, n + 4))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        gap = 1 - np.max((e @ e.T)[~np.eye(n, dtype=bool)])
        if gap * 1e3 < np.log(1e6 * n):
            continue  # rows too close for tau=1e-3 to separate them
        limit_dev = max(limit_dev, float(np.max(np.abs(priority_labels(e, 1e-3).values - np.eye(n)))))
        checked += 1
    ok = row_dev <= 1e-12 and avg_dev <= 1e-12 and limit_dev < 1e-6
    verdict(3, "label invariants", ok,
            f"row-sum dev {row_dev:.1e}, average-vs-priority dev {avg_dev:.1e} (<= 1e-12), "
            f"tau=1e-3 identity dev {limit_dev:.1e} (< 1e-6)")


def test_c04_metric_oracles(verdict):
    rng = np.random.default_rng(404)
    mismatches = 0
    rho_dev = 0.0
    for _ in range(120):
        n, d = int(rng.integers(2, 11)), int(rng.integers(2, 6))
        src = rng.normal(size=(n, d))
        tgt = src[rng.permutation(n)] + rng.normal(scale=rng.uniform(0.1, 2.0), size=(n, d))
        gold = rng.permutation(n)
        fwd, bwd, _ = retrieval_accuracy(src, tgt, gold)
        if (round(fwd * n), round(bwd * n)) != oracles.retrieval(src.tolist(), tgt.tolist(), gold.tolist()):
            mismatches += 1
        k = int(rng.integers(1, 6))
        if round(xsim_error_rate(src, tgt, gold, k=k) * n) != \
                oracles.xsim_errors(src.tolist(), tgt.tolist(), gold.tolist(), k):
            mismatches += 1
        p, g = np.round(rng.normal(size=n + 2), 1), np.round(rng.normal(size=n + 2), 1)
        if len(set(p)) > 1 and len(set(g)) > 1:
            rho_dev = max(rho_dev, abs(spearman(p, g) - oracles.spearman(p.tolist(), g.tolist())))
    hand = spearman([1, 2, 2, 3], [1, 2, 3, 4])
    ok = mismatches == 0 and rho_dev <= 1e-10 and abs(hand - 0.94868) <= 1e-5
    verdict(4, "metric oracles", ok,
            f"120 instances, {mismatches} count mismatches, spearman dev {rho_dev:.1e}, "
            f"tied example {hand:.5f} (0.94868 +- 1e-5)")


def _cli(args, cwd):
    env = dict(os.environ, **SINGLE_THREAD)
    return subprocess.run([sys.executable, "-m", "softcl.cli", *args], cwd=cwd, env=env,
                          capture_output=True, text=True)


CLI_CONFIG = """\
corpus = en-ko:data/corpus.tsv
split_total = 600
split_train = 500
teacher = data/teacher.tsv
label_mode = priority
seed = 7
"""


@pytest.fixture(scope="module")
def cli_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    done = _cli(["sample-data", "--out", "data"], root)
    assert done.returncode == 0, done.stderr
    (root / "run.cfg").write_text(CLI_CONFIG, encoding="utf-8")
    return root


def _train(root, out):
    start = time.perf_counter()
    done = _cli(["train", "--config", "run.cfg", "--out", out], root)
    elapsed = time.perf_counter() - start
    assert done.returncode == 0, done.stderr
    (run,) = glob.glob(str(root / out / "train-*"))
    return run, elapsed


def test_c05_end_to_end_training(verdict, cli_root):
    run, elapsed = _train(cli_root, "runs-a")
    hist = json.load(open(os.path.join(run, "history.json")))
    best = hist["best_val_acc"]
    epoch1, step0 = hist["epochs"][0]["total"], hist["step0_loss"]
    ok = best >= 0.90 and len(hist["epochs"]) <= 30 and elapsed < 120 and epoch1 < step0
    verdict(5, "end-to-end synthetic training", ok,
            f"best valid acc_avg {best:.3f} (>= 0.90) after {len(hist['epochs'])} epochs, "
            f"{elapsed:.1f}s single-threaded (< 120s), epoch-1 loss {epoch1:.3f} < step-0 loss {step0:.3f}")


@pytest.fixture(scope="module")
def task():
    return SyntheticTask()


def _heldout_agreement(enc, task, cross=True):
    """Mean teacher agreement over the full held-out batches of 32."""
    valid = task.valid
    vals = {"cross": [], "en": [], "ko": []}
    for start in range(0, len(valid) - 31, 32):
        pairs = valid.pairs[start:start + 32]
        s = embed_ids(enc, [enc.sentence_ids(p[0]) for p in pairs])
        t = embed_ids(enc, [enc.sentence_ids(p[1]) for p in pairs])
        w = priority_labels(task.teacher.embed_batch([p[0] for p in pairs], "en"), TAU)
        vals["cross"].append(teacher_agreement(scaled_similarity_matrix(s, t, TAU), w))
        vals["en"].append(teacher_agreement(scaled_similarity_matrix(s, s, TAU), w))
        vals["ko"].append(teacher_agreement(scaled_similarity_matrix(t, t, TAU), w))
    return {k: float(np.mean(v)) for k, v in vals.items()}


def test_c06_soft_beats_hard_on_agreement(verdict, task):
    scores = {}
    for mode in ("priority", "hard"):
        cfg = TrainerConfig(seed=task.seed, loss=LossConfig(mode=mode))
        enc, _ = fit(task.student(), [task.train], task.teacher, task.valid, cfg)
        scores[mode] = _heldout_agreement(enc, task)["cross"]
    gap = scores["priority"] - scores["hard"]
    verdict(6, "soft vs hard teacher agreement", gap >= 0.05,
            f"priority {scores['priority']:.3f} vs hard {scores['hard']:.3f}, gap {gap:.3f} (>= 0.05)")


def test_c07_tcm_mono_agreement(verdict, task):
    student = task.student()
    before = _heldout_agreement(student, task)
    cfg = TrainerConfig(seed=task.seed, loss=LossConfig(mode="priority", tcm=True, lam=0.1))
    enc, hist = fit(student, [task.train], task.teacher, task.valid, cfg)
    after = _heldout_agreement(enc, task)
    ok = after["en"] >= before["en"] and after["ko"] >= before["ko"]
    verdict(7, "TCM mono-lingual agreement", ok,
            f"en {before['en']:.3f} -> {after['en']:.3f}, ko {before['ko']:.3f} -> {after['ko']:.3f} "
            f"(epoch 0 -> best epoch {hist.best_epoch}), cross {before['cross']:.3f} -> {after['cross']:.3f}")


def _all_measures(src, tgt, task, pairs):
    out = {}
    out["acc"] = retrieval_accuracy(src, tgt)
    out["xsim_ratio"] = xsim_error_rate(src, tgt)
    out["xsim_cosine"] = xsim_error_rate(src, tgt, margin="cosine")
    w = priority_labels(task.teacher.embed_batch([p[0] for p in pairs], "en"), TAU)
    out["agreement"] = teacher_agreement(scaled_similarity_matrix(src, tgt, TAU), w)
    pair_cos = np.einsum("ij,ij->i", src, tgt) / (np.linalg.norm(src, axis=1) * np.linalg.norm(tgt, axis=1))
    out["spearman"] = spearman(pair_cos, np.arange(len(pairs)))
    for mode in ("hard", "priority", "average"):
        labels = {"hard": hard_labels(len(pairs)), "priority": w,
                  "average": average_labels(task.teacher.embed_batch([p[0] for p in pairs], "en"),
                                            task.teacher.embed_batch([p[1] for p in pairs], "ko"), TAU)}[mode]
        comps = total_loss(src, tgt, labels, LossConfig(mode=mode, tcm=True)).components()
        for name, value in comps.items():
            out[f"{mode}_{name}"] = value
    return out


def test_c08_scale_invariance(verdict, task):
    enc = task.student()
    pairs = task.valid.pairs[:32]
    src = embed_ids(enc, [enc.sentence_ids(p[0]) for p in pairs])
    tgt = embed_ids(enc, [enc.sentence_ids(p[1]) for p in pairs])
    base = _all_measures(src, tgt, task, pairs)
    scaled = _all_measures(3.7 * src, 3.7 * tgt, task, pairs)
    worst = max(float(np.max(np.abs(np.subtract(base[k], scaled[k])))) for k in base)
    verdict(8, "scale invariance", worst < 1e-9,
            f"{len(base)} metrics and losses, max change {worst:.1e} (< 1e-9)")


def test_c09_determinism(verdict, cli_root):
    run_a, _ = _train(cli_root, "runs-b")
    run_b, _ = _train(cli_root, "runs-c")
    a = json.load(open(os.path.join(run_a, "history.json")))
    b = json.load(open(os.path.join(run_b, "history.json")))
    verdict(9, "determinism", a == b,
            f"two single-threaded train runs, {len(a['epochs'])} epochs each, histories "
            f"{'identical' if a == b else 'differ'}")


def test_c10_data_pipeline(verdict):
    pairs = [(f"source sentence {i}", f"target sentence {i}") for i in range(30000)]
    corpus = ParallelCorpus("en", "fr", pairs)
    train, valid = sample_split(corpus, 25000, 20000, seed=0)
    sizes = (len(train), len(valid))
    disjoint = not set(train.pairs) & set(valid.pairs)

    rng = np.random.default_rng(10)
    planted = sorted(rng.choice(len(train), size=250, replace=False).tolist())
    test_sentences = []
    for k, i in enumerate(planted):
        s, t = train.pairs[i]
        text = s if k % 2 == 0 else t
        if k % 3 == 0:
            text = "  " + text.replace(" ", "\t ")  # whitespace variants must still match
        test_sentences.append(unicodedata.normalize("NFD", text))
    test_sentences.append("no such sentence")
    once = filter_overlap(train, test_sentences)
    twice = filter_overlap(once, test_sentences)
    expected = [p for i, p in enumerate(train.pairs) if i not in set(planted)]
    exact = once.pairs == expected
    idempotent = twice.pairs == once.pairs
    ok = sizes == (20000, 5000) and disjoint and exact and idempotent
    verdict(10, "data pipeline", ok,
            f"split sizes {sizes} (20000, 5000), disjoint {disjoint}, removed "
            f"{len(train) - len(once)} of 250 planted, exact {exact}, idempotent {idempotent}")
