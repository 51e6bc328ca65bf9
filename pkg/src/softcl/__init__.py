"""Soft-contrastive distillation for cross-lingual sentence embeddings."""

from .errors import DataError, DomainError, NumericalError, ShapeError, UndefinedCorrelation
from .simcore import cosine, row_softmax, scaled_similarity_matrix
from .labels import (LabelMatrix, average_labels, hard_labels, priority_labels,
                     select_anchor, DEFAULT_PRIORITY)
from .loss import LossBundle, LossConfig, l_col, l_mono, l_row, loss_gradients, mse_distill_loss, total_loss
from .model import StudentEncoder, TeacherOracle, Vocab, encode, encode_batch
from .data import ParallelCorpus, StsRecord, SyntheticSpec, generate_synthetic, load_tsv
from .trainer import TrainerConfig, TrainHistory, adamw_step, fit, lr_schedule, pool_shards
from .evaluate import (EvalReport, retrieval_accuracy, spearman, sts_eval, teacher_agreement,
                       xsim_error_rate)

__version__ = "0.1.0"
