"""Soft-label contrastive losses and their analytic gradients.

All terms are cross-entropies between a label matrix ``W`` and a softmax of
temperature-scaled student cosines:

* ``l_row``  softmax over targets for each source (second index)
* ``l_col``  softmax over sources for each target (first index)
* ``l_mono`` column-softmax terms on the source/source and target/target
  similarity matrices, as written for the mono-lingual objective

``total_loss`` combines them and backpropagates through the cosine map to
the raw student embeddings.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .labels import PRIORITY, LABEL_MODES
from .simcore import log_softmax, row_norms, scaled_similarity_matrix

CONTRASTIVE = "contrastive"
MSE = "mse"


@dataclass
class LossConfig:
    temperature: float = 0.1
    lam: float = 0.1
    mode: str = PRIORITY
    tcm: bool = False
    objective: str = CONTRASTIVE

    def __post_init__(self):
        if not self.temperature > 0:
            raise DomainError(f"temperature must be positive, got {self.temperature}")
        if not self.lam >= 0:
            raise DomainError(f"lambda must be nonnegative, got {self.lam}")
        if self.mode not in LABEL_MODES:
            raise DomainError(f"unknown label mode {self.mode!r}; expected one of {LABEL_MODES}")
        if self.objective not in (CONTRASTIVE, MSE):
            raise DomainError(f"unknown objective {self.objective!r}")


@dataclass
class LossBundle:
    l_row: float
    l_col: float
    l_cross: float
    l_mono: float
    total: float
    grad_src: np.ndarray = field(repr=False)
    grad_tgt: np.ndarray = field(repr=False)

    def components(self) -> dict:
        return {"l_row": self.l_row, "l_col": self.l_col, "l_cross": self.l_cross,
                "l_mono": self.l_mono, "total": self.total}


def _check_square(sim, w):
    sim = np.asarray(sim, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1] or sim.shape != w.shape:
        raise ShapeError(f"similarity {sim.shape} and labels {w.shape} must be equal square matrices")
    return sim, w


def _row_term(sim, w):
    n = sim.shape[0]
    logp = log_softmax(sim, axis=1)
    loss = -float(np.sum(w * logp)) / n
    dsim = (np.exp(logp) * w.sum(axis=1, keepdims=True) - w) / n
    return loss, dsim


def _col_term(sim, w):
    n = sim.shape[0]
    logp = log_softmax(sim, axis=0)
    loss = -float(np.sum(w * logp)) / n
    dsim = (np.exp(logp) * w.sum(axis=0, keepdims=True) - w) / n
    return loss, dsim


def l_row(sim_f, w) -> float:
    return _row_term(*_check_square(sim_f, w))[0]


def l_col(sim_f, w) -> float:
    return _col_term(*_check_square(sim_f, w))[0]


def l_mono(sim_ss, sim_tt, w) -> float:
    sim_ss, w = _check_square(sim_ss, w)
    sim_tt, _ = _check_square(sim_tt, w)
    return _col_term(sim_ss, w)[0] + _col_term(sim_tt, w)[0]


def _unit_rows(x):
    norms = row_norms(x)
    return x / norms[:, None], norms


def _through_normalization(g_hat, x_hat, norms):
    # d/dx of x/|x| applied to an upstream gradient
    radial = np.einsum("ij,ij->i", g_hat, x_hat)
    return (g_hat - radial[:, None] * x_hat) / norms[:, None]


def _check_pair(student_src, student_tgt, w):
    src = np.asarray(student_src, dtype=np.float64)
    tgt = np.asarray(student_tgt, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if src.ndim != 2 or src.shape != tgt.shape:
        raise ShapeError(f"student embeddings differ in shape: {src.shape} vs {tgt.shape}")
    if w.shape != (src.shape[0], src.shape[0]):
        raise ShapeError(f"labels {w.shape} do not match batch size {src.shape[0]}")
    return src, tgt, w


def total_loss(student_src, student_tgt, w, cfg: LossConfig) -> LossBundle:
    """Loss components and gradients w.r.t. both student embedding matrices."""
    src, tgt, w = _check_pair(student_src, student_tgt, w)
    tau = cfg.temperature
    s_hat, s_norm = _unit_rows(src)
    t_hat, t_norm = _unit_rows(tgt)

    sim_st = scaled_similarity_matrix(src, tgt, tau)
    row, d_row = _row_term(sim_st, w)
    col, d_col = _col_term(sim_st, w)
    cross = row + col
    d_st = d_row + d_col

    if cfg.tcm:
        sim_ss = scaled_similarity_matrix(src, src, tau)
        sim_tt = scaled_similarity_matrix(tgt, tgt, tau)
        mono_s, d_ss = _col_term(sim_ss, w)
        mono_t, d_tt = _col_term(sim_tt, w)
        mono = mono_s + mono_t
        total = cfg.lam * cross + mono
        d_st = cfg.lam * d_st
    else:
        mono = 0.0
        total = cross

    g_s_hat = d_st @ t_hat / tau
    g_t_hat = d_st.T @ s_hat / tau
    if cfg.tcm:
        g_s_hat += (d_ss + d_ss.T) @ s_hat / tau
        g_t_hat += (d_tt + d_tt.T) @ t_hat / tau

    return LossBundle(
        l_row=row, l_col=col, l_cross=cross, l_mono=mono, total=total,
        grad_src=_through_normalization(g_s_hat, s_hat, s_norm),
        grad_tgt=_through_normalization(g_t_hat, t_hat, t_norm),
    )


def loss_gradients(student_src, student_tgt, w, cfg: LossConfig):
    bundle = total_loss(student_src, student_tgt, w, cfg)
    return bundle.grad_src, bundle.grad_tgt


def mse_distill_loss(student_src, student_tgt, teacher_src):
    """Mean-squared distillation toward the teacher's source-language embeddings.

    Both student sides are pulled toward the same teacher vector, so the
    teacher width has to equal the student width.
    """
    src = np.asarray(student_src, dtype=np.float64)
    tgt = np.asarray(student_tgt, dtype=np.float64)
    teacher = np.asarray(teacher_src, dtype=np.float64)
    if not (src.shape == tgt.shape == teacher.shape):
        raise ShapeError(
            f"MSE operands must share a shape: {src.shape}, {tgt.shape}, {teacher.shape}")
    count = src.size
    ds = src - teacher
    dt = tgt - teacher
    loss = float(np.sum(ds * ds) / count + np.sum(dt * dt) / count)
    return loss, 2.0 * ds / count, 2.0 * dt / count
