"""Command-line interface: ``protoseg {gen-data,train,eval,episode,ablate}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pseg
from .config import RunConfig
from .data import EpisodicDataset, generate_synthetic_dataset, sample_episode, tree_digest
from .embedder import EmbedderParams
from .estimator import PrototypeSegmenter
from .exceptions import DataError, IoError, ProtosegError
from .metrics import binary_iou, confusion, mean_iou
from .protocol import TRAINING_KEY, VARIANTS, RunReport, VariantReport

logger = logging.getLogger("protoseg")

ABLATION_ORDER = ("cos", "f", "f-srp", "f-iqi", "f-srp-iqi")


def build_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "variant", None):
        cfg = cfg.with_variant(args.variant)
    if getattr(args, "dataset", None):
        cfg.paths.dataset = args.dataset
    if getattr(args, "checkpoints", None):
        cfg.paths.checkpoints = args.checkpoints
    if getattr(args, "reports", None):
        cfg.paths.reports = args.reports
    for flag, section, key in (
        ("way", cfg.episode, "way"), ("shot", cfg.episode, "shot"), ("n_query", cfg.episode, "n_query"),
        ("alpha", cfg.inference, "alpha"), ("metric", cfg.inference, "metric"),
        ("eta", cfg.iqi, "eta"), ("n_prototypes", cfg.iqi, "n_prototypes"),
        ("w_s", cfg.loss, "w_s"), ("w_q", cfg.loss, "w_q"),
        ("lr", cfg.train, "lr"), ("iterations", cfg.train, "iterations"), ("train_seed", cfg.train, "seed"),
        ("episodes", cfg.eval, "episodes"), ("seeds", cfg.eval, "seeds"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(section, key, value)
    if getattr(args, "runs", None) is not None:
        cfg.eval.seeds = list(range(args.runs))
    cfg.validate()
    return cfg


def manifest_path(cfg: RunConfig) -> Path:
    return Path(cfg.paths.dataset) / "manifest.json"


def load_dataset(cfg: RunConfig) -> EpisodicDataset:
    path = manifest_path(cfg)
    if not path.exists():
        raise DataError(f"no manifest at {path}; run gen-data first")
    return EpisodicDataset.from_manifest(path)


def _mkdir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {path}: {e}") from e


def _write_text(path: Path, text: str) -> None:
    _mkdir(path.parent)
    try:
        path.write_text(text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def cmd_gen_data(args) -> int:
    cfg = build_config(args)
    syn = cfg.synthetic
    if args.seed is not None:
        syn = replace(syn, seed=args.seed)
    out = Path(args.out or cfg.paths.dataset)
    manifest = generate_synthetic_dataset(syn, out)
    print(f"wrote {len(manifest['items'])} images to {out}")
    print(f"classes: {[c['name'] for c in manifest['classes']]}")
    print(f"seen: {manifest['seen']}  unseen: {manifest['unseen']}")
    print(f"sha256: {tree_digest(out)}")
    return 0


def _write_train_log(log, path: Path) -> None:
    lines = ["iteration,total,l_sup,l_que,pixel_count"]
    lines += [f"{i},{r.total!r},{r.l_sup!r},{r.l_que!r},{r.pixel_count}" for i, r in enumerate(log)]
    _write_text(path, "\n".join(lines) + "\n")


def train_variant(cfg: RunConfig, dataset: EpisodicDataset, checkpoint: Path) -> PrototypeSegmenter:
    model = PrototypeSegmenter(**cfg.segmenter_params())
    model.fit(dataset)
    _mkdir(checkpoint.parent)
    model.params_.save(checkpoint)
    _write_train_log(model.training_log_, checkpoint.with_suffix(".log.csv"))
    return model


def cmd_train(args) -> int:
    cfg = build_config(args)
    dataset = load_dataset(cfg)
    checkpoint = Path(args.checkpoint) if args.checkpoint else cfg.checkpoint_path()
    model = train_variant(cfg, dataset, checkpoint)
    log = model.training_log_
    if log:
        print(f"final loss {log[-1].total:.6f} after {len(log)} iterations")
    print(f"checkpoint: {checkpoint}")
    return 0


def load_model(cfg: RunConfig, checkpoint: Path) -> PrototypeSegmenter:
    if not checkpoint.exists():
        raise DataError(f"no checkpoint at {checkpoint}; run train first")
    return PrototypeSegmenter(**cfg.segmenter_params()).set_embedder(EmbedderParams.load(checkpoint))


def _mask_dumper(mask_dir: Path, run: int):
    def dump(e, ep, seg):
        _mkdir(mask_dir)
        _, support_masks = ep.flat_support()
        for i, (p, g) in enumerate(zip(seg.query_predictions, ep.query_masks)):
            pseg.save_mask(p, mask_dir / f"run{run}_ep{e:04d}_query{i}_pred.pseg")
            pseg.save_mask(g, mask_dir / f"run{run}_ep{e:04d}_query{i}_gt.pseg")
        for i, (p, g) in enumerate(zip(seg.support_predictions, support_masks)):
            pseg.save_mask(p, mask_dir / f"run{run}_ep{e:04d}_support{i}_pred.pseg")
            pseg.save_mask(g, mask_dir / f"run{run}_ep{e:04d}_support{i}_gt.pseg")

    return dump


def evaluate_variant(cfg: RunConfig, model: PrototypeSegmenter, dataset: EpisodicDataset, dump_dir: Path | None = None):
    report = VariantReport(cfg.variant, cfg.eval.split)
    for r, seed in enumerate(cfg.eval.seeds):
        hook = _mask_dumper(dump_dir, r) if dump_dir is not None else None
        part = model.evaluate(dataset, seeds=[seed], episodes=cfg.eval.episodes, split=cfg.eval.split,
                              name=cfg.variant, on_episode=hook)
        report.runs.extend(part.runs)
    return report


def write_report(report: RunReport, reports_dir: Path) -> None:
    _write_text(reports_dir / "run.json", report.to_json())
    _write_text(reports_dir / "run.csv", report.to_csv())


def cmd_eval(args) -> int:
    cfg = build_config(args)
    dataset = load_dataset(cfg)
    checkpoint = Path(args.checkpoint) if args.checkpoint else cfg.checkpoint_path()
    model = load_model(cfg, checkpoint)
    reports = Path(cfg.paths.reports)
    dump = reports.parent / "masks" if args.dump_masks else None
    if args.dump_masks and args.mask_dir:
        dump = Path(args.mask_dir)
    vr = evaluate_variant(cfg, model, dataset, dump)
    report = RunReport([vr], cfg.to_dict())
    write_report(report, reports)
    s = vr.summary()
    print(f"{cfg.variant}: query mIoU {100 * s['query_miou']['mean']:.2f} +- {100 * s['query_miou']['std']:.2f}, "
          f"support mIoU {100 * s['support_miou']['mean']:.2f}")
    return 0


def cmd_episode(args) -> int:
    cfg = build_config(args)
    dataset = load_dataset(cfg)
    checkpoint = Path(args.checkpoint) if args.checkpoint else cfg.checkpoint_path()
    model = load_model(cfg, checkpoint)
    ep = sample_episode(dataset, cfg.eval.split, cfg.episode.way, cfg.episode.shot, cfg.episode.n_query, args.seed)
    seg = model.predict_episode(ep)
    _, support_masks = ep.flat_support()
    out = {
        "classes": ep.class_ids,
        "support_items": ep.support_items,
        "query_items": ep.query_items,
        "query_miou": mean_iou([confusion(p, g, ep.way) for p, g in zip(seg.query_predictions, ep.query_masks)]),
        "query_binary_iou": [binary_iou(p, g) for p, g in zip(seg.query_predictions, ep.query_masks)],
        "support_miou": mean_iou([confusion(p, g, ep.way) for p, g in zip(seg.support_predictions, support_masks)]),
    }
    if seg.trace is not None:
        out["iterates"] = [{"rho": it.rho, "support_loss": it.support_loss} for it in seg.trace.iterates]
        out["warnings"] = list(seg.trace.warnings)
    if args.dump_masks:
        _mask_dumper(Path(args.mask_dir or Path(cfg.paths.reports).parent / "masks"), 0)(0, ep, seg)
    print(json.dumps(out, indent=1, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    cfg = build_config(args)
    dataset = load_dataset(cfg)
    models = {}
    failures = {}
    report = RunReport(config=cfg.to_dict())
    for name in ABLATION_ORDER:
        vcfg = cfg.with_variant(name)
        key = TRAINING_KEY[name]
        ckpt = vcfg.checkpoint_path()
        try:
            if key not in models:
                if args.reuse and ckpt.exists():
                    models[key] = load_model(vcfg, ckpt).params_
                    logger.info("reusing %s", ckpt)
                else:
                    logger.info("training %s", key)
                    models[key] = train_variant(vcfg, dataset, ckpt).params_
            model = PrototypeSegmenter(**vcfg.segmenter_params()).set_embedder(models[key])
            report.variants.append(evaluate_variant(vcfg, model, dataset))
        except ProtosegError as e:
            failures[name] = str(e)
            logger.error("variant %s failed: %s", name, e)
    report.config["failures"] = failures
    reports = Path(cfg.paths.reports)
    write_report(report, reports)
    table = report.table()
    _write_text(reports / "ablation.txt", table + "\n")
    print(table)
    for name, msg in failures.items():
        print(f"{name}: FAILED ({msg})")
    return 3 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protoseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=True):
        p.add_argument("--config", help="JSON run config; flags override it")
        p.add_argument("--dataset", help="dataset directory containing manifest.json")
        p.add_argument("--checkpoints", help="checkpoint directory")
        p.add_argument("--reports", help="report directory")
        if variant:
            p.add_argument("--variant", choices=sorted(VARIANTS))
        p.add_argument("--way", type=int)
        p.add_argument("--shot", type=int)
        p.add_argument("--n-query", dest="n_query", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--metric", choices=["fidelity", "cosine", "sq_euclidean"])
        p.add_argument("--eta", type=float)
        p.add_argument("--n-prototypes", dest="n_prototypes", type=int)
        p.add_argument("--w-s", dest="w_s", type=float)
        p.add_argument("--w-q", dest="w_q", type=float)

    p = sub.add_parser("gen-data", help="write the synthetic shape dataset")
    p.add_argument("--config")
    p.add_argument("--out", help="output directory (default: paths.dataset)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the embedder for one variant")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--iterations", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", dest="train_seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on unseen-class episodes")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--runs", type=int, help="use seeds 0..runs-1")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--dump-masks", action="store_true")
    p.add_argument("--mask-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("episode", help="segment and inspect a single episode")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-masks", action="store_true")
    p.add_argument("--mask-dir")
    p.set_defaults(func=cmd_episode)

    p = sub.add_parser("ablate", help="train and evaluate all five variants")
    common(p, variant=False)
    p.add_argument("--iterations", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", dest="train_seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--reuse", action="store_true", help="reuse existing checkpoints")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ProtosegError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: IoError: {e}", file=sys.stderr)
        return IoError.exit_code


if __name__ == "__main__":
    sys.exit(main())
