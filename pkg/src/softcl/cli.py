"""Command-line entry points.

    softcl sample-data --out data/
    softcl train --config run.cfg
    softcl eval-bitext --checkpoint ckpt.npz --corpus valid.tsv --gold gold.tsv
    softcl eval-sts --checkpoint ckpt.npz --sts sts.tsv
    softcl inspect-labels --config run.cfg --batch 0:8

Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, fields


from . import plotting
from .config import load_config, render_config
from .data import (ParallelCorpus, SyntheticSpec, build_vocab, filter_overlap, load_gold,
                   load_sts, load_tsv, sample_split, write_synthetic)
from .errors import DataError, DomainError, NumericalError, ShapeError, UndefinedCorrelation
from .evaluate import EvalReport, retrieval_accuracy, sts_eval, xsim_error_rate
from .labels import average_labels, hard_labels, priority_labels, select_anchor
from .loss import LossConfig
from .model import StudentEncoder, TeacherOracle, encode_batch, load_teacher_table
from .simcore import normalize_rows
from .trainer import (AdamWParams, TrainerConfig, config_echo, fit, load_checkpoint,
                      save_checkpoint)

log = logging.getLogger("softcl")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _run_dir(base: str, command: str, digest: str) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%S")
    path = os.path.join(base, f"{command}-{digest}-{stamp}")
    k = 1
    while os.path.exists(path):
        k += 1
        path = os.path.join(base, f"{command}-{digest}-{stamp}-{k}")
    os.makedirs(path)
    return path


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _overrides(args) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise DataError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    if args.seed is not None:
        out["seed"] = str(args.seed)
    if args.out is not None:
        out["out"] = os.path.abspath(args.out)
    return out


def _teacher_from_config(cfg, languages) -> TeacherOracle | None:
    src = cfg["teacher"]
    if not src:
        return None
    if src == "synthetic":
        langs = [x.strip() for x in cfg["teacher_langs"].split(",") if x.strip()] or languages
        return TeacherOracle(dim=cfg["teacher_dim"], languages=langs, seed=cfg["teacher_seed"])
    return load_teacher_table(cfg.resolve(src))


def _read_test_sentences(path) -> list:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            sentences.extend(x for x in line.rstrip("\n").split("\t") if x.strip())
    return sentences


def _load_corpora(cfg):
    corpora = [load_tsv(s.path, s.src_lang, s.tgt_lang) for s in cfg.corpora("corpus")]
    valid = [load_tsv(s.path, s.src_lang, s.tgt_lang) for s in cfg.corpora("valid")]
    if cfg["split_total"] and cfg["split_train"]:
        train, held = [], []
        for k, corpus in enumerate(corpora):
            tr, va = sample_split(corpus, cfg["split_total"], cfg["split_train"], cfg["seed"] + k)
            train.append(tr)
            held.append(va)
        corpora = train
        if not valid:
            valid = held
    if cfg["test_sentences"]:
        test = _read_test_sentences(cfg.resolve(cfg["test_sentences"]))
        corpora = [filter_overlap(c, test) for c in corpora]
    return corpora, valid


def trainer_config(cfg) -> TrainerConfig:
    return TrainerConfig(
        max_epochs=cfg["max_epochs"], global_batch=cfg["global_batch"], shards=cfg["shards"],
        lr0=cfg["lr0"], patience=cfg["patience"], seed=cfg["seed"], priority=cfg.priority,
        adamw=AdamWParams(cfg["beta1"], cfg["beta2"], cfg["eps"], cfg["weight_decay"]),
        loss=LossConfig(temperature=cfg["temperature"], lam=cfg["lambda"],
                        mode=cfg["label_mode"], tcm=cfg["tcm"], objective=cfg["objective"]),
    )


def _bitext_report(enc, corpus: ParallelCorpus, gold, k, margin, extra=None) -> EvalReport:
    src = encode_batch(enc, corpus.sources)
    tgt = encode_batch(enc, corpus.targets)
    fwd, bwd, avg = retrieval_accuracy(src, tgt, gold)
    xsim = xsim_error_rate(src, tgt, gold, k=k, margin=margin) if len(corpus) >= 2 else None
    config = {"k": k, "margin": margin, "src_lang": corpus.src_lang, "tgt_lang": corpus.tgt_lang}
    config.update(extra or {})
    return EvalReport(acc_src2tgt=fwd, acc_tgt2src=bwd, acc_avg=avg, xsim_error=xsim,
                      count=len(corpus), config=config)


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args)).validate()
    corpora, valid = _load_corpora(cfg)
    languages = sorted({c.src_lang for c in corpora} | {c.tgt_lang for c in corpora})
    teacher = _teacher_from_config(cfg, languages)
    tcfg = trainer_config(cfg)
    vocab = build_vocab(corpora, cfg["min_count"])
    student = StudentEncoder.init(vocab, cfg["dim"], seed=cfg["seed"], std=cfg["init_std"])
    enc, history = fit(student, corpora, teacher, valid, tcfg)

    out = _run_dir(cfg.resolve(cfg["out"]), "train", cfg.digest())
    save_checkpoint(os.path.join(out, "checkpoint.npz"), enc,
                    config={"run": cfg.values, "trainer": config_echo(tcfg)},
                    rng_state={"bit_generator": "PCG64", "seed": cfg["seed"],
                               "epochs_completed": len(history.epochs)})
    _write_json(os.path.join(out, "history.json"), history.to_dict())
    with open(os.path.join(out, "config.cfg"), "w", encoding="utf-8") as fh:
        fh.write(render_config(cfg))
    reports = [asdict(_bitext_report(enc, v, None, 4, "ratio")) for v in valid]
    if cfg["sts"]:
        sts = sts_eval(enc, load_sts(cfg.resolve(cfg["sts"])))
        for r in reports:
            r["spearman"] = sts
    _write_json(os.path.join(out, "report.json"), {"valid": reports})
    plotting.plot_history(history, os.path.join(out, "history.png"))

    lines = [f"run directory: {out}",
             f"label mode: {cfg['label_mode']}  tcm: {cfg['tcm']}  objective: {cfg['objective']}",
             f"train pairs: {sum(len(c) for c in corpora)}  valid pairs: {sum(len(v) for v in valid)}",
             f"epochs run: {len(history.epochs)}  best epoch: {history.best_epoch}",
             f"validation acc: initial {history.initial_val_acc:.4f}  best {history.best_val_acc:.4f}"
             if history.epochs else "no training steps run"]
    for r in reports:
        lines.append(f"{r['config']['src_lang']}-{r['config']['tgt_lang']}: acc_avg {r['acc_avg']:.4f}"
                     f"  xsim_error {r['xsim_error']:.4f}")
    summary = "\n".join(lines) + "\n"
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary)
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_eval_bitext(args) -> int:
    enc, _ = load_checkpoint(args.checkpoint)
    corpus = load_tsv(args.corpus, args.src_lang, args.tgt_lang)
    if len(corpus) == 0:
        raise DataError(f"{args.corpus} holds no sentence pairs")
    gold = load_gold(args.gold) if args.gold else None
    if gold is not None and len(gold) != len(corpus):
        raise DataError(f"gold has {len(gold)} entries for {len(corpus)} pairs")
    report = _bitext_report(enc, corpus, gold, args.k, args.margin,
                            {"checkpoint": os.path.abspath(args.checkpoint),
                             "corpus": os.path.abspath(args.corpus)})
    _emit_report(args, "eval-bitext", report)
    if args.out:
        n = min(len(corpus), 64)
        cos = normalize_rows(encode_batch(enc, corpus.sources[:n])) @ \
            normalize_rows(encode_batch(enc, corpus.targets[:n])).T
        plotting.plot_similarity(cos, os.path.join(args.report_dir, "similarity.png"))
    return EXIT_OK


def cmd_eval_sts(args) -> int:
    enc, _ = load_checkpoint(args.checkpoint)
    records = load_sts(args.sts)
    rho = sts_eval(enc, records)
    report = EvalReport(spearman=rho, count=len(records),
                        config={"checkpoint": os.path.abspath(args.checkpoint),
                                "sts": os.path.abspath(args.sts)})
    _emit_report(args, "eval-sts", report)
    return EXIT_OK


def _emit_report(args, command, report: EvalReport):
    text = report.to_json()
    if args.out:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]
        args.report_dir = _run_dir(os.path.abspath(args.out), command, digest)
        with open(os.path.join(args.report_dir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    sys.stdout.write(text + "\n")


def _format_matrix(m, width=7):
    return [" ".join(f"{x:{width}.4f}" for x in row) for row in m]


def cmd_inspect_labels(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    specs = cfg.corpora("corpus")
    if not specs:
        raise DataError("config needs a 'corpus' entry")
    spec = specs[0]
    corpus = load_tsv(spec.path, spec.src_lang, spec.tgt_lang)
    start, _, size = args.batch.partition(":")
    start, size = int(start), int(size or 8)
    rows = corpus.pairs[start:start + size]
    if len(rows) < 1:
        raise DataError(f"batch {args.batch} is empty for a corpus of {len(corpus)} pairs")
    teacher = _teacher_from_config(cfg, [spec.src_lang, spec.tgt_lang])
    if teacher is None:
        raise DataError("inspect-labels needs a teacher")
    tau = cfg["temperature"]
    src = [s for s, _ in rows]
    tgt = [t for _, t in rows]
    anchor = select_anchor(spec.src_lang, spec.tgt_lang, cfg.priority)
    teacher.require(anchor)
    anchor_side = src if anchor == spec.src_lang else tgt
    mats = {"hard": hard_labels(len(rows)).values,
            f"priority (anchor {anchor})": priority_labels(teacher.embed_batch(anchor_side, anchor), tau).values}
    teacher.require(spec.src_lang, spec.tgt_lang)
    mats["average"] = average_labels(teacher.embed_batch(src, spec.src_lang),
                                     teacher.embed_batch(tgt, spec.tgt_lang), tau).values

    n = len(rows)
    width = 8 * n - 1
    blocks = [_format_matrix(m) for m in mats.values()]
    sums = [m.sum(axis=1) for m in mats.values()]
    print(" | ".join(f"{name:<{width}}" for name in mats) + " | row sums")
    for i in range(n):
        cells = " | ".join(b[i] for b in blocks)
        print(cells + " | " + " ".join(f"{s[i]:.6f}" for s in sums))
    if args.out:
        out = _run_dir(os.path.abspath(args.out), "inspect-labels", cfg.digest())
        plotting.plot_label_matrices(mats, os.path.join(out, "labels.png"))
        _write_json(os.path.join(out, "labels.json"),
                    {name: m.tolist() for name, m in mats.items()})
        print(f"wrote {out}")
    return EXIT_OK


def cmd_sample_data(args) -> int:
    values = {}
    if args.config:
        cfg_text = open(args.config, encoding="utf-8").read()
        names = {f.name: f.type for f in fields(SyntheticSpec)}
        for line in cfg_text.splitlines():
            key, sep, raw = line.partition("=")
            if sep and key.strip() in names:
                values[key.strip()] = raw.strip()
    for f in fields(SyntheticSpec):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    spec = SyntheticSpec()
    for name, raw in values.items():
        current = getattr(spec, name)
        setattr(spec, name, type(current)(raw))
    if args.seed is not None:
        spec.seed = args.seed
    paths = write_synthetic(args.out or "data", spec)
    for kind, path in paths.items():
        print(f"{kind}\t{path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softcl", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value run config")
        p.add_argument("--seed", type=int, help="64-bit seed; overrides the config")
        p.add_argument("--out", help="output directory")
        return p

    p = common(sub.add_parser("train", help="train a student encoder"))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval-bitext", help="retrieval accuracy and xSIM error"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True, help="src<TAB>tgt file")
    p.add_argument("--gold", help="i<TAB>j alignment; identity when omitted")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--margin", choices=("ratio", "cosine"), default="ratio")
    p.add_argument("--src-lang", default="src")
    p.add_argument("--tgt-lang", default="tgt")
    p.set_defaults(func=cmd_eval_bitext)

    p = common(sub.add_parser("eval-sts", help="Spearman correlation on an STS file"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sts", required=True, help="a<TAB>b<TAB>score file")
    p.set_defaults(func=cmd_eval_sts)

    p = common(sub.add_parser("inspect-labels", help="print hard/priority/average labels"))
    p.add_argument("--batch", default="0:8", help="START:SIZE rows of the first corpus")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_inspect_labels)

    p = common(sub.add_parser("sample-data", help="write a synthetic corpus and teacher"))
    for f in fields(SyntheticSpec):
        flag = "--" + f.name.replace("_", "-")
        if f.name != "seed":
            p.add_argument(flag, dest=f.name, type=type(f.default), default=None)
    p.set_defaults(func=cmd_sample_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UndefinedCorrelation as exc:
        print(f"error: undefined correlation: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
