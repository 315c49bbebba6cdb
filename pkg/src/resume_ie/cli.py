"""Command-line interface.

Subcommands: parse, train-head, eval-text, eval-detect, augment, split,
export-report. Exit code 0 on success, 1 on stage/config failures, 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import corpus, detect, metrics, textprep
from .classify import EncodedDataset, TrainConfig, load_head, predict, save_head, train_head
from .pipeline import (
    ConfigError,
    PipelineConfig,
    StageError,
    load_config_file,
    resolve_artifact,
    run_pipeline,
    validate_extraction,
)
from .ports import load_embedding_port
from .tokenizers import build_tokenizer


def _dump(obj: dict, path: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _add_parse_command(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("parse", help="run the full pipeline over documents")
    p.add_argument("documents", nargs="+", type=Path)
    p.add_argument("--config", type=Path, help="key=value file mirroring these flags")
    p.add_argument("--detector", type=Path)
    p.add_argument("--recognizer", type=Path)
    p.add_argument("--backbone", type=Path)
    p.add_argument("--head", type=Path)
    p.add_argument("--vocab", type=Path)
    p.add_argument("--merges", type=Path)
    p.add_argument("--charset", type=Path)
    p.add_argument("--tokenizer", choices=sorted(("bert", "distilbert", "roberta", "xlnet")))
    p.add_argument("--pooling", choices=("cls", "mean", "last"))
    p.add_argument("--conf", type=float, dest="conf_threshold")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")
    p.add_argument("--margin", type=int)
    p.add_argument("--dpi", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--prefer-mined", action="store_true", default=None)
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--merge-labels", action="store_true", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, help="output file (single document)")
    p.add_argument("--out-dir", type=Path, help="output directory (one file per document)")


_CONFIG_CASTS = {
    "conf_threshold": float,
    "nms_iou": float,
    "margin": int,
    "dpi": int,
    "seed": int,
    "prefer_mined": lambda v: v.lower() in ("1", "true", "yes"),
    "deterministic": lambda v: v.lower() in ("1", "true", "yes"),
    "merge_labels": lambda v: v.lower() in ("1", "true", "yes"),
}
_CONFIG_PATHS = ("detector", "recognizer", "backbone", "head", "vocab", "merges", "charset")


def _build_pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    values: dict = {}
    if args.config is not None:
        for key, raw in load_config_file(args.config).items():
            if key in _CONFIG_PATHS:
                values[key] = Path(raw)
            elif key in _CONFIG_CASTS:
                values[key] = _CONFIG_CASTS[key](raw)
            elif key in ("tokenizer", "pooling"):
                values[key] = raw
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key in (*_CONFIG_PATHS, "tokenizer", "pooling", *_CONFIG_CASTS):
        arg = getattr(args, key, None)
        if arg is not None:
            values[key] = arg
    missing = [k for k in ("detector", "recognizer", "backbone", "head", "vocab", "charset")
               if k not in values]
    if missing:
        raise ConfigError(f"missing required artifacts: {', '.join(missing)}")
    return PipelineConfig(**values)


def _cmd_parse(args: argparse.Namespace) -> int:
    config = _build_pipeline_config(args)
    if len(args.documents) > 1 and args.out_dir is None:
        raise ConfigError("multiple documents need --out-dir")

    def one(doc: Path) -> dict:
        extraction = run_pipeline(doc, config).as_dict()
        validate_extraction(extraction)
        return extraction

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, args.documents))
    else:
        results = [one(doc) for doc in args.documents]

    for doc, extraction in zip(args.documents, results):
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            _dump(extraction, args.out_dir / f"{doc.stem}.json")
        else:
            _dump(extraction, args.out)
    return 0


def _load_encoded(path: Path, tokenizer) -> EncodedDataset:
    records = corpus.load_text_dataset(path)
    sequences = [tokenizer.encode(textprep.normalize(r.text)) for r in records]
    return EncodedDataset(sequences=sequences, labels=[r.label.id for r in records])


def _cmd_train_head(args: argparse.Namespace) -> int:
    merges = resolve_artifact(args.merges) if args.merges else None
    tokenizer = build_tokenizer(args.tokenizer, resolve_artifact(args.vocab), merges)
    port = load_embedding_port(resolve_artifact(args.backbone), pooling=args.pooling)
    train = _load_encoded(args.train, tokenizer)
    val = _load_encoded(args.val, tokenizer)
    config = TrainConfig(
        lr=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        hidden_dim=args.hidden,
        dropout_p=args.dropout,
    )
    head, history = train_head(train, val, port, config)
    save_head(head, args.out)
    summary = {
        "epochs": len(history),
        "best_val_f1_macro": max(h["val_f1_macro"] for h in history),
        "head": str(args.out),
    }
    if args.history is not None:
        _dump({"history": history}, args.history)
    _dump(summary, None)
    return 0


def _cmd_eval_text(args: argparse.Namespace) -> int:
    merges = resolve_artifact(args.merges) if args.merges else None
    tokenizer = build_tokenizer(args.tokenizer, resolve_artifact(args.vocab), merges)
    port = load_embedding_port(resolve_artifact(args.backbone), pooling=args.pooling)
    head = load_head(resolve_artifact(args.head))
    records = corpus.load_text_dataset(args.records)
    y_true = [r.label.id for r in records]
    y_pred = [predict(r.text, tokenizer, port, head)[0].id for r in records]
    cm = metrics.confusion(y_true, y_pred, corpus.NUM_CLASSES)
    report = metrics.f1_report(cm)
    out = {
        "confusion_matrix": cm.tolist(),
        "classes": list(corpus.CLASS_NAMES),
        **report.as_dict(),
    }
    _dump(out, args.out)
    if args.out is not None:
        sys.stdout.write(metrics.format_f1_report(report, corpus.CLASS_NAMES) + "\n")
    return 0


def _cmd_eval_detect(args: argparse.Namespace) -> int:
    preds = metrics.load_predictions(args.pred)
    gts: list[metrics.GroundTruth] = []
    image_ids = []
    for label_file in sorted(Path(args.gt_dir).glob("*.txt")):
        image_id = label_file.stem
        image_ids.append(image_id)
        for class_id, box in detect.load_detection_labels(label_file):
            gts.append(metrics.GroundTruth(image_id=image_id, class_id=class_id, box=box))
    ev = metrics.map_eval(preds, gts, image_ids=image_ids)
    _dump(ev.as_dict(), args.out)
    if args.out is not None:
        sys.stdout.write(metrics.format_detection_eval(ev) + "\n")
    return 0


def _cmd_augment(args: argparse.Namespace) -> int:
    records = corpus.load_text_dataset(args.infile)
    if not args.augment_raw:
        normalized = []
        for rec in records:
            clean = textprep.normalize(rec.text)
            normalized.append(replace(rec, text=clean) if clean else rec)
        records = normalized
    mix = tuple(float(w) for w in args.mix.split(",")) if args.mix else None
    plan = textprep.AugmentPlan(factor=args.factor, seed=args.seed)
    if mix is not None:
        plan = replace(plan, strategy_mix=mix)
    out = textprep.augment_dataset(records, plan)
    corpus.save_text_dataset(out, args.out)
    _dump({"input": len(records), "output": len(out), "factor": args.factor}, None)
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    if args.by != "person":
        raise ConfigError("only person-disjoint splitting is supported (--by person)")
    records = corpus.load_text_dataset(args.infile)
    assignment = corpus.split_by_person(
        records, ratios=(args.train, args.val, args.test), seed=args.seed
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {r.record_id: r for r in records}
    summary = {"ratios": list(assignment.ratios), "seed": args.seed, "splits": {}}
    for name in ("train", "val", "test"):
        ids = sorted(getattr(assignment, name))
        split_records = [by_id[i] for i in ids]
        corpus.save_text_dataset(split_records, args.out_dir / f"{name}.jsonl")
        summary["splits"][name] = {
            "records": len(ids),
            "persons": len({r.person_id for r in split_records}),
        }
    _dump(summary, args.out_dir / "assignment.json")
    _dump(summary, None)
    return 0


def _cmd_export_report(args: argparse.Namespace) -> int:
    data = json.loads(Path(args.infile).read_text("utf-8"))
    if "map50" in data:
        per_class = {
            int(c): {float(t): ap for t, ap in by_thr.items()}
            for c, by_thr in data["per_class"].items()
        }
        ev = metrics.DetectionEval(
            per_class=per_class, map50=data["map50"], map50_95=data["map50_95"]
        )
        text = metrics.format_detection_eval(ev)
    elif "micro" in data:
        per_class = data["per_class"]
        report = metrics.F1Report(
            precision=tuple(c["precision"] for c in per_class),
            recall=tuple(c["recall"] for c in per_class),
            f1=tuple(c["f1"] for c in per_class),
            support=tuple(c["support"] for c in per_class),
            micro=data["micro"],
            macro=data["macro"],
            weighted=data["weighted"],
        )
        names = data.get("classes", [str(i) for i in range(len(per_class))])
        text = metrics.format_f1_report(report, names)
    else:
        raise ConfigError(f"{args.infile}: not a recognized report document")
    if args.out is None:
        sys.stdout.write(text + "\n")
    else:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resume-ie",
        description="Resume information extraction pipeline and training harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_parse_command(sub)

    p = sub.add_parser("train-head", help="train the classification head on a frozen backbone")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--val", type=Path, required=True)
    p.add_argument("--backbone", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--merges", type=Path)
    p.add_argument("--tokenizer", default="distilbert",
                   choices=("bert", "distilbert", "roberta", "xlnet"))
    p.add_argument("--pooling", choices=("cls", "mean", "last"))
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--history", type=Path)

    p = sub.add_parser("eval-text", help="classification metrics on a labeled dataset")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--backbone", type=Path, required=True)
    p.add_argument("--head", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--merges", type=Path)
    p.add_argument("--tokenizer", default="distilbert",
                   choices=("bert", "distilbert", "roberta", "xlnet"))
    p.add_argument("--pooling", choices=("cls", "mean", "last"))
    p.add_argument("--out", type=Path)

    p = sub.add_parser("eval-detect", help="mAP metrics for detector predictions")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt-dir", type=Path, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("augment", help="expand a dataset with augmented copies")
    p.add_argument("--in", dest="infile", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--factor", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mix", help="comma-separated strategy weights "
                                 f"({', '.join(textprep.STRATEGIES)})")
    p.add_argument("--augment-raw", action="store_true",
                   help="augment raw text instead of normalizing first")

    p = sub.add_parser("split", help="person-disjoint train/val/test split")
    p.add_argument("--in", dest="infile", type=Path, required=True)
    p.add_argument("--train", type=float, default=0.70)
    p.add_argument("--val", type=float, default=0.15)
    p.add_argument("--test", type=float, default=0.15)
    p.add_argument("--by", default="person")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("export-report", help="format a JSON report as text")
    p.add_argument("--in", dest="infile", type=Path, required=True)
    p.add_argument("--out", type=Path)

    return parser


_COMMANDS = {
    "parse": _cmd_parse,
    "train-head": _cmd_train_head,
    "eval-text": _cmd_eval_text,
    "eval-detect": _cmd_eval_detect,
    "augment": _cmd_augment,
    "split": _cmd_split,
    "export-report": _cmd_export_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StageError as e:
        report = {
            "status": "error",
            "stage": e.stage,
            "page": e.page,
            "region": e.region,
            "message": str(e),
        }
        sys.stderr.write(json.dumps(report, sort_keys=True) + "\n")
        return 1
    except (ConfigError, corpus.DatasetError, ValueError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
