"""Mini-batch training loop with shard pooling, AdamW and early stopping."""

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import ParallelCorpus
from .errors import DataError, DomainError, NumericalError, ShapeError
from .labels import (AVERAGE, DEFAULT_PRIORITY, HARD, LabelMatrix,
                     average_labels, check_priority, hard_labels, priority_labels,
                     select_anchor)
from .loss import MSE, LossConfig, mse_distill_loss, total_loss
from .model import (StudentEncoder, TeacherOracle, Vocab, batch_parameter_gradients,
                    embed_ids)
from .evaluate import retrieval_accuracy

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class AdamWParams:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class TrainerConfig:
    max_epochs: int = 30
    global_batch: int = 32
    shards: int = 2
    lr0: float = 5e-3
    adamw: AdamWParams = field(default_factory=AdamWParams)
    patience: int = 3
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    priority: tuple = DEFAULT_PRIORITY

    def __post_init__(self):
        if self.shards < 1 or self.global_batch < 1 or self.global_batch % self.shards:
            raise DomainError(
                f"global_batch ({self.global_batch}) must be a positive multiple of shards ({self.shards})")
        if self.patience < 1:
            raise DomainError("patience must be >= 1")
        if self.max_epochs < 0 or self.lr0 < 0:
            raise DomainError("max_epochs and lr0 must be nonnegative")
        self.priority = check_priority(self.priority)


@dataclass
class ParallelBatch:
    src: list
    tgt: list
    src_lang: str
    tgt_lang: str
    index: list = field(default_factory=list)

    def __len__(self):
        return len(self.src)


def pool_shards(shard_batches: Sequence[ParallelBatch]) -> ParallelBatch:
    """Concatenate equally sized shard batches in shard order."""
    if not shard_batches:
        raise ShapeError("no shards to pool")
    size = len(shard_batches[0])
    langs = (shard_batches[0].src_lang, shard_batches[0].tgt_lang)
    for b in shard_batches:
        if len(b) != size or len(b.tgt) != size:
            raise ShapeError(f"ragged shards: sizes {[len(b) for b in shard_batches]}")
        if (b.src_lang, b.tgt_lang) != langs:
            raise ShapeError("shards mix language pairs")
    return ParallelBatch(
        src=[s for b in shard_batches for s in b.src],
        tgt=[t for b in shard_batches for t in b.tgt],
        src_lang=langs[0], tgt_lang=langs[1],
        index=[i for b in shard_batches for i in b.index],
    )


def lr_schedule(step: int, total_steps: int, lr0: float) -> float:
    if total_steps < 1:
        raise DomainError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise DomainError(f"step {step} outside [0, {total_steps}]")
    return lr0 * (1.0 - step / total_steps)


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, grads: dict, state: AdamWState, lr: float,
               hp: AdamWParams = AdamWParams()):
    """One decoupled-weight-decay Adam update. Inputs are not modified."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.sum(~np.isfinite(g)))
            raise NumericalError(
                f"non-finite gradient for {name} at step {state.step + 1}: {bad} of {g.size} entries")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = hp.beta1 * state.m.get(name, np.zeros_like(p)) + (1 - hp.beta1) * g
        v = hp.beta2 * state.v.get(name, np.zeros_like(p)) + (1 - hp.beta2) * g * g
        m_hat = m / (1 - hp.beta1 ** t)
        v_hat = v / (1 - hp.beta2 ** t)
        p = p * (1 - lr * hp.weight_decay)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + hp.eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamWState(t, new_m, new_v)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    total: float
    l_row: float
    l_col: float
    l_cross: float
    l_mono: float
    val_acc: float


@dataclass
class TrainHistory:
    initial_val_acc: float | None = None
    step0_loss: float | None = None
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float | None = None
    stopped_early: bool = False
    total_steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def required_teacher_langs(corpus: ParallelCorpus, cfg: TrainerConfig) -> tuple:
    if cfg.loss.objective == MSE:
        return (corpus.src_lang,)
    if cfg.loss.mode == HARD:
        return ()
    if cfg.loss.mode == AVERAGE:
        return (corpus.src_lang, corpus.tgt_lang)
    return (select_anchor(corpus.src_lang, corpus.tgt_lang, cfg.priority),)


class _CorpusCache:
    """Token ids and frozen teacher vectors for one corpus, computed once."""

    def __init__(self, corpus: ParallelCorpus, enc: StudentEncoder, teacher, langs):
        self.corpus = corpus
        self.src_ids = [enc.sentence_ids(s) for s in corpus.sources]
        self.tgt_ids = [enc.sentence_ids(t) for t in corpus.targets]
        self.teacher = {}
        for lang in langs:
            side = corpus.sources if lang == corpus.src_lang else corpus.targets
            self.teacher[lang] = teacher.embed_batch(side, lang)


def batch_labels(cache: _CorpusCache, index, cfg: TrainerConfig) -> LabelMatrix:
    corpus = cache.corpus
    tau = cfg.loss.temperature
    if cfg.loss.mode == HARD:
        return hard_labels(len(index))
    if cfg.loss.mode == AVERAGE:
        return average_labels(cache.teacher[corpus.src_lang][index],
                              cache.teacher[corpus.tgt_lang][index], tau)
    anchor = select_anchor(corpus.src_lang, corpus.tgt_lang, cfg.priority)
    return priority_labels(cache.teacher[anchor][index], tau)


def epoch_batches(sizes: Sequence[int], batch: int, rng: np.random.Generator) -> list:
    """Shuffled full batches per corpus, interleaved round-robin.

    Returns a list of ``(corpus_index, row_indices)``. Trailing partial
    batches are dropped so every step sees the same number of negatives.
    """
    per_corpus = []
    for size in sizes:
        order = rng.permutation(size)
        per_corpus.append([order[i:i + batch] for i in range(0, size - batch + 1, batch)])
    out = []
    for r in range(max((len(b) for b in per_corpus), default=0)):
        for c, batches in enumerate(per_corpus):
            if r < len(batches):
                out.append((c, batches[r]))
    return out


def steps_per_epoch(sizes: Sequence[int], batch: int) -> int:
    return sum(size // batch for size in sizes)


def shard_batches(cache: _CorpusCache, index, shards: int) -> list:
    corpus = cache.corpus
    per = len(index) // shards
    out = []
    for k in range(shards):
        part = [int(i) for i in index[k * per:(k + 1) * per]]
        out.append(ParallelBatch([corpus.pairs[i][0] for i in part],
                                 [corpus.pairs[i][1] for i in part],
                                 corpus.src_lang, corpus.tgt_lang, part))
    return out


def step_loss(enc: StudentEncoder, cache: _CorpusCache, pooled: ParallelBatch,
              cfg: TrainerConfig, shards: int = 1):
    """Loss bundle for one pooled batch plus the ids used to build it.

    Each shard is embedded separately and the results are concatenated in
    shard order before any cross-sentence math.
    """
    index = pooled.index
    src_ids = [cache.src_ids[i] for i in index]
    tgt_ids = [cache.tgt_ids[i] for i in index]
    per = len(index) // shards
    with np.errstate(over="ignore", invalid="ignore"):
        e_src = np.concatenate([embed_ids(enc, src_ids[k * per:(k + 1) * per]) for k in range(shards)])
        e_tgt = np.concatenate([embed_ids(enc, tgt_ids[k * per:(k + 1) * per]) for k in range(shards)])
    if not (np.all(np.isfinite(e_src)) and np.all(np.isfinite(e_tgt))):
        raise NumericalError("student embeddings became non-finite")
    if cfg.loss.objective == MSE:
        teacher_src = cache.teacher[cache.corpus.src_lang][index]
        loss, g_src, g_tgt = mse_distill_loss(e_src, e_tgt, teacher_src)
        comps = {"total": loss, "l_row": 0.0, "l_col": 0.0, "l_cross": 0.0, "l_mono": 0.0}
    else:
        w = batch_labels(cache, index, cfg)
        try:
            bundle = total_loss(e_src, e_tgt, w, cfg.loss)
        except DomainError as exc:
            raise NumericalError(f"loss evaluation failed: {exc}") from None
        comps, g_src, g_tgt = bundle.components(), bundle.grad_src, bundle.grad_tgt
    if not np.isfinite(comps["total"]):
        raise NumericalError(f"non-finite training loss {comps['total']}")
    return comps, src_ids, tgt_ids, g_src, g_tgt


def validation_accuracy(enc: StudentEncoder, valid: Sequence[ParallelCorpus]) -> float:
    accs = []
    for corpus in valid:
        with np.errstate(over="ignore", invalid="ignore"):
            src = embed_ids(enc, [enc.sentence_ids(s) for s in corpus.sources])
            tgt = embed_ids(enc, [enc.sentence_ids(t) for t in corpus.targets])
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(tgt))):
            raise NumericalError("validation embeddings became non-finite")
        accs.append(retrieval_accuracy(src, tgt)[2])
    return float(np.mean(accs))


def fit(student: StudentEncoder, corpora: Sequence[ParallelCorpus], teacher: TeacherOracle | None,
        valid, cfg: TrainerConfig):
    """Train ``student`` and return the best-validation encoder with its history."""
    if isinstance(valid, ParallelCorpus):
        valid = [valid]
    corpora = list(corpora)
    history = TrainHistory()
    if cfg.max_epochs == 0:
        return student.copy(), history
    if not corpora or any(len(c) == 0 for c in corpora):
        raise DataError("training needs at least one non-empty corpus")
    if not valid or any(len(v) == 0 for v in valid):
        raise DataError("validation corpus is empty")

    caches = []
    for corpus in corpora:
        langs = required_teacher_langs(corpus, cfg)
        if langs:
            if teacher is None:
                raise DomainError(f"label mode {cfg.loss.mode!r} needs a teacher")
            teacher.require(*langs)
        if cfg.loss.objective == MSE and teacher.dim != student.dim:
            raise DomainError(f"MSE needs teacher dim {teacher.dim} == student dim {student.dim}")
        caches.append(_CorpusCache(corpus, student, teacher, langs))

    per_epoch = steps_per_epoch([len(c) for c in corpora], cfg.global_batch)
    if per_epoch == 0:
        raise DataError(f"no corpus holds a full batch of {cfg.global_batch} pairs")
    total_steps = cfg.max_epochs * per_epoch
    history.total_steps = total_steps

    rng = np.random.default_rng(cfg.seed)
    enc = student.copy()
    state = AdamWState()
    history.initial_val_acc = validation_accuracy(enc, valid)
    best_enc, best_acc, bad = enc.copy(), -np.inf, 0
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        epoch_lr = lr_schedule(step, total_steps, cfg.lr0)
        sums = {}
        for c, index in epoch_batches([len(c) for c in corpora], cfg.global_batch, rng):
            cache = caches[c]
            pooled = pool_shards(shard_batches(cache, index, cfg.shards))
            comps, src_ids, tgt_ids, g_src, g_tgt = step_loss(enc, cache, pooled, cfg, cfg.shards)
            if history.step0_loss is None:
                history.step0_loss = comps["total"]
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + v
            grads = batch_parameter_gradients(enc, src_ids, tgt_ids, g_src, g_tgt)
            lr = lr_schedule(step, total_steps, cfg.lr0)
            with np.errstate(over="ignore", invalid="ignore"):
                params, state = adamw_step(enc.params(), grads, state, lr, cfg.adamw)
            enc = enc.with_params(params)
            step += 1
        acc = validation_accuracy(enc, valid)
        means = {k: v / per_epoch for k, v in sums.items()}
        history.epochs.append(EpochRecord(epoch=epoch, lr=epoch_lr, val_acc=acc, **means))
        log.info("epoch %d loss %.6f val_acc %.4f", epoch, means["total"], acc)
        if acc > best_acc:
            best_acc, best_enc, bad = acc, enc.copy(), 0
            history.best_epoch = epoch
        else:
            bad += 1
            if bad >= cfg.patience:
                history.stopped_early = epoch < cfg.max_epochs
                break
    history.best_val_acc = float(best_acc)
    return best_enc, history


def save_checkpoint(path, enc: StudentEncoder, config: dict | None = None, rng_state: dict | None = None):
    """Write an ``.npz`` checkpoint; see the README for the field layout."""
    meta = {
        "format": "softcl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": config or {},
        "rng_state": rng_state or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh,
                 token_table=enc.token_table,
                 projection=enc.projection,
                 vocab=np.array(json.dumps(enc.vocab.tokens, ensure_ascii=False)),
                 meta=np.array(json.dumps(meta, sort_keys=True, default=str)))


def load_checkpoint(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != "softcl-checkpoint":
                raise DataError(f"{path} is not a softcl checkpoint")
            if meta.get("version") != CHECKPOINT_VERSION:
                raise DataError(f"{path}: unsupported checkpoint version {meta.get('version')}")
            vocab = Vocab(json.loads(str(z["vocab"])))
            enc = StudentEncoder(vocab, z["token_table"].copy(), z["projection"].copy())
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"cannot load checkpoint {path}: {exc}") from None
    return enc, meta


def config_echo(cfg: TrainerConfig) -> dict:
    d = asdict(cfg)
    d["priority"] = list(cfg.priority)
    return copy.deepcopy(d)
