"""Dense similarity and softmax kernels used by labels, loss and eval."""

import numpy as np

from .errors import DomainError, ShapeError


def _as_matrix(x, name="matrix"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} has non-finite entries")
    return x


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"cosine needs two vectors of equal length, got {u.shape} and {v.shape}")
    nu = float(np.sqrt(u @ u))
    nv = float(np.sqrt(v @ v))
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine of a zero-norm vector is undefined")
    return float(np.clip((u @ v) / (nu * nv), -1.0, 1.0))


def row_norms(x) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if np.any(norms == 0.0):
        bad = np.flatnonzero(norms == 0.0).tolist()
        raise DomainError(f"zero-norm rows at indices {bad}")
    return norms


def normalize_rows(x) -> np.ndarray:
    x = _as_matrix(x)
    return x / row_norms(x)[:, None]


def scaled_similarity_matrix(a, b, tau: float) -> np.ndarray:
    """Pairwise cosine(a_i, b_j) / tau.

    The two inputs must have the same number of rows (the batch size) and
    the same width.
    """
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    if a.shape != b.shape:
        raise ShapeError(f"similarity operands differ in shape: {a.shape} vs {b.shape}")
    an = a / row_norms(a)[:, None]
    bn = b / row_norms(b)[:, None]
    return np.clip(an @ bn.T, -1.0, 1.0) / tau


def log_softmax(m, axis: int = 1) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise DomainError("softmax input has non-finite entries")
    shifted = m - m.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def row_softmax(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"row_softmax expects a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("softmax input has non-finite entries")
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def col_softmax(m) -> np.ndarray:
    return row_softmax(np.asarray(m, dtype=np.float64).T).T
