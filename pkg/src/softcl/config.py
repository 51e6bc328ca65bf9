"""Flat ``key = value`` run configuration.

Lines starting with ``#`` and blank lines are ignored. Relative paths are
resolved against the directory holding the config file. Unknown keys are
rejected so that typos fail loudly.
"""

import hashlib
import os
from dataclasses import dataclass, field

from .errors import DataError
from .labels import DEFAULT_PRIORITY, LABEL_MODES
from .loss import CONTRASTIVE, MSE

# key -> (type, default)
KEYS = {
    "corpus": (str, ""),
    "valid": (str, ""),
    "split_total": (int, 0),
    "split_train": (int, 0),
    "test_sentences": (str, ""),
    "teacher": (str, ""),
    "teacher_dim": (int, 96),
    "teacher_langs": (str, ""),
    "teacher_seed": (int, 0),
    "label_mode": (str, "priority"),
    "objective": (str, CONTRASTIVE),
    "tcm": (bool, False),
    "temperature": (float, 0.1),
    "lambda": (float, 0.1),
    "lr0": (float, 5e-3),
    "global_batch": (int, 32),
    "shards": (int, 2),
    "max_epochs": (int, 30),
    "patience": (int, 3),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "eps": (float, 1e-8),
    "weight_decay": (float, 0.01),
    "dim": (int, 16),
    "init_std": (float, 0.1),
    "min_count": (int, 1),
    "priority": (str, ",".join(DEFAULT_PRIORITY)),
    "seed": (int, 0),
    "sts": (str, ""),
    "out": (str, "runs"),
}
PATH_KEYS = ("test_sentences", "sts", "out")


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key, raw):
    typ, _ = KEYS[key]
    try:
        if typ is bool:
            return _parse_bool(raw)
        if typ is int:
            value = int(raw)
            if key == "seed" and not 0 <= value < 2 ** 64:
                raise ValueError("seed must fit in 64 unsigned bits")
            return value
        return typ(raw)
    except ValueError as exc:
        raise DataError(f"config key {key!r}: {exc}") from None


@dataclass
class CorpusSpec:
    src_lang: str
    tgt_lang: str
    path: str


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    base_dir: str = "."

    def __getitem__(self, key):
        return self.values[key]

    def resolve(self, path: str) -> str:
        return path if not path or os.path.isabs(path) else os.path.normpath(
            os.path.join(self.base_dir, path))

    def corpora(self, key: str = "corpus") -> list:
        specs = []
        for item in filter(None, (x.strip() for x in self.values[key].split(","))):
            pair, sep, path = item.partition(":")
            langs = pair.split("-")
            if not sep or len(langs) != 2 or not all(langs) or not path:
                raise DataError(f"config key {key!r}: expected 'src-tgt:path', got {item!r}")
            specs.append(CorpusSpec(langs[0], langs[1], self.resolve(path)))
        return specs

    @property
    def priority(self) -> tuple:
        return tuple(x.strip() for x in self.values["priority"].split(",") if x.strip())

    def digest(self) -> str:
        text = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]

    def validate(self):
        v = self.values
        if v["label_mode"] not in LABEL_MODES:
            raise DataError(f"label_mode must be one of {LABEL_MODES}, got {v['label_mode']!r}")
        if v["objective"] not in (CONTRASTIVE, MSE):
            raise DataError(f"objective must be {CONTRASTIVE!r} or {MSE!r}")
        corpora = self.corpora("corpus")
        if not corpora:
            raise DataError("config needs at least one 'corpus' entry")
        valid = self.corpora("valid")
        if not valid and not (v["split_total"] and v["split_train"]):
            raise DataError("config needs 'valid' corpora or split_total/split_train")
        for spec in corpora + valid:
            if not os.path.isfile(spec.path):
                raise DataError(f"corpus file not found: {spec.path}")
        for key in ("test_sentences", "sts"):
            if v[key] and not os.path.isfile(self.resolve(v[key])):
                raise DataError(f"{key} file not found: {self.resolve(v[key])}")
        teacher = v["teacher"]
        if teacher and teacher != "synthetic" and not os.path.isfile(self.resolve(teacher)):
            raise DataError(f"teacher table not found: {self.resolve(teacher)}")
        if not teacher and (v["label_mode"] != "hard" or v["objective"] == MSE):
            raise DataError(f"label_mode {v['label_mode']!r} needs a 'teacher' entry")
        return self


def parse_config(text: str, base_dir: str = ".", overrides: dict | None = None) -> RunConfig:
    values = {k: d for k, (_, d) in KEYS.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise DataError(f"config line {lineno}: expected 'key = value'")
        if key not in KEYS:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw.strip())
    for key, raw in (overrides or {}).items():
        if key not in KEYS:
            raise DataError(f"unknown override key {key!r}")
        values[key] = raw if not isinstance(raw, str) else _convert(key, raw)
    return RunConfig(values, base_dir)


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    if path is None:
        return parse_config("", ".", overrides)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)), overrides)


def render_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {cfg.values[k]}\n" for k in KEYS)
