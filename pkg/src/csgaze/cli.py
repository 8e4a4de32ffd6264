"""Command-line entry point: ``csgaze <command> [options]``.

Every command writes into ``--out`` (refusing a non-empty directory unless
``--force``) and leaves a ``run_manifest.json`` there.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .provenance import RunManifest, digest_inputs

log = logging.getLogger("csgaze")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------- config

def load_config(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a mapping")
    return data


def _model_config(cfg: dict, n_classes=None):
    from .model import DESK_CONFIG, ModelConfig

    mc = ModelConfig.from_dict({**DESK_CONFIG.to_dict(), **cfg.get("model", {})})
    return replace(mc, n_classes=n_classes) if n_classes else mc


def _train_config(cfg: dict, phase: str, args, **extra):
    from .training import TrainConfig

    section = dict(cfg.get("pretrain" if phase == "pretrain" else "train", {}))
    section.update(extra)
    return TrainConfig(phase=phase, seed=args.seed, **section)


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path, what):
    if path is None:
        raise UsageError(f"{what} is required")
    if not Path(path).exists():
        raise UsageError(f"{what} {path} does not exist")
    return Path(path)


def _binary_label(label) -> int:
    from .types import GazeClass

    if isinstance(label, bool):
        return int(label)
    return int(GazeClass(label) == GazeClass.MUTUAL)


def _load_dyads(args, config, binary: bool):
    from .datasets import dyad_tensors
    from .manifest import load_manifest

    path = _require(args.manifest, "--manifest")
    samples = load_manifest(path, "dyad")
    contexts = None
    if getattr(args, "contexts", None):
        from .context import read_records

        contexts = {r.sample_id: r.text for r in read_records(_require(args.contexts, "--contexts"))}
    root = Path(args.root) if args.root else path.parent
    data = dyad_tensors(samples, config, root=root, contexts=contexts)
    if binary:
        import torch

        data.labels = torch.tensor([-1 if s.label is None else _binary_label(s.label) for s in samples])
    return data


def _class_names(mode):
    from .types import GazeClass

    return ["no-LAEO", "LAEO"] if mode == "binary" else [c.tag for c in GazeClass]


# ----------------------------------------------------------------- commands

def cmd_synth_gen(args, cfg, manifest):
    from .synth import SynthConfig, export_dataset

    synth = SynthConfig.from_dict(cfg.get("synth", {}))
    n = args.n if args.n is not None else int(cfg.get("n", 100))
    manifest.config.update(synth=synth.to_dict(), n=n)
    out = _out_dir(args)
    hist = export_dataset(out, n, args.seed, synth)
    (out / "histogram.json").write_text(json.dumps(hist, indent=2) + "\n", encoding="utf-8")
    for tag, count in hist.items():
        print(f"{tag:<7} {count}")
    print(f"total   {sum(hist.values())}")
    return out


def cmd_pretrain(args, cfg, manifest):
    from .datasets import gazefollow_tensors
    from .manifest import load_manifest
    from .model import build_model, save_checkpoint
    from .training import pretrain_phase1

    model_cfg = _model_config(cfg)
    tc = _train_config(cfg, "pretrain", args)
    manifest.config.update(model=model_cfg.to_dict(), pretrain=tc.to_dict())
    if args.print_config:
        print(json.dumps(manifest.config, indent=2, sort_keys=True))
        return None
    path = _require(args.manifest, "--manifest")
    out = _out_dir(args)
    manifest.inputs.update(digest_inputs([path]))
    data = gazefollow_tensors(load_manifest(path, "gazefollow"), model_cfg,
                              root=Path(args.root) if args.root else path.parent)
    model, tlog = pretrain_phase1(data, build_model(model_cfg, args.seed), tc)
    save_checkpoint(model, out / "pretrain.npz", "pretrain-complete", step=len(tlog.epochs),
                    meta={"train_log": tlog.to_dict(), "seed": args.seed})
    (out / "pretrain_log.jsonl").write_text(tlog.to_jsonl(), encoding="utf-8")
    print(f"final validation peak error {tlog.epochs[-1].val_metric:.2f} cells")
    return out


def cmd_train(args, cfg, manifest):
    from .model import build_model, read_checkpoint, save_checkpoint, transfer_encoders
    from .training import train_phase2

    binary = args.mode == "binary"
    model_cfg = _model_config(cfg, 2 if binary else None)
    extra = {"fixed_equal": args.fixed_equal_alpha, "modalities": args.modalities,
             "from_scratch": args.from_scratch}
    if binary:
        extra["loss"] = "binary_ce"
    tc = _train_config(cfg, "classify", args, **extra)
    manifest.config.update(model=model_cfg.to_dict(), train=tc.to_dict(), mode=args.mode)
    if args.print_config:
        print(json.dumps(manifest.config, indent=2, sort_keys=True))
        return None
    if args.checkpoint is None and not args.from_scratch:
        raise UsageError("train needs --checkpoint from pretrain, or --from-scratch")
    out = _out_dir(args)
    data = _load_dyads(args, model_cfg, binary)
    manifest.inputs.update(digest_inputs([args.manifest, args.contexts, args.checkpoint]))
    if args.checkpoint:
        model = transfer_encoders(read_checkpoint(_require(args.checkpoint, "--checkpoint")),
                                  model_cfg, args.seed)
    else:
        model = build_model(model_cfg, args.seed)
    model, tlog = train_phase2(data, model, tc, pretrained=args.checkpoint is not None)
    meta = {"mode": args.mode, "modalities": args.modalities,
            "fixed_equal": args.fixed_equal_alpha, "train_log": tlog.to_dict(), "seed": args.seed}
    save_checkpoint(model, out / "model.npz", "classify-complete", step=len(tlog.epochs), meta=meta)
    (out / "train_log.jsonl").write_text(tlog.to_jsonl(), encoding="utf-8")
    print(f"stopped after {len(tlog.epochs)} epochs ({tlog.stop_reason}); best epoch {tlog.best_epoch}")
    return out


def _load_model(args):
    from .model import load_checkpoint

    model, ckpt = load_checkpoint(_require(args.checkpoint, "--checkpoint"), args.seed)
    meta = ckpt.meta
    mode = "binary" if model.config.n_classes == 2 else "multiclass"
    return model, meta, mode


def cmd_eval(args, cfg, manifest):
    from .evaluation import (
        ap_over_runs,
        class_subset_eval,
        export_report,
        read_predictions,
        report_from_probabilities,
        subsample_ap_run,
        subset_preset,
        write_predictions,
    )
    from .inference import records_from_outputs
    from .training import predict

    out = _out_dir(args)
    if args.predictions:
        ids, labels, probs = read_predictions(_require(args.predictions, "--predictions"))
        mode = "binary" if probs.shape[1] == 2 else "multiclass"
        manifest.inputs.update(digest_inputs([args.predictions]))
    else:
        model, meta, mode = _load_model(args)
        data = _load_dyads(args, model.config, mode == "binary")
        manifest.inputs.update(digest_inputs([args.checkpoint, args.manifest, args.contexts]))
        res = predict(model, data, fixed_equal=bool(meta.get("fixed_equal", args.fixed_equal_alpha)),
                      modalities=meta.get("modalities", "FSC"))
        labels, probs = data.labels.numpy(), res["probabilities"]
        write_predictions(records_from_outputs(res, data.sample_ids), labels, out / "predictions.jsonl")
    keep = labels >= 0
    if not keep.any():
        raise UsageError("no labelled samples to evaluate")
    labels, probs = labels[keep], probs[keep]
    report = report_from_probabilities(probs, labels, _class_names(mode))
    if mode == "binary" and args.ap_runs:
        report.ap_mean, report.ap_std = ap_over_runs(subsample_ap_run(probs[:, 1], labels == 1),
                                                     args.ap_runs)
    export_report(report, out, "metrics", plot=args.plot)
    print(report.table(), end="")
    for name in args.subset or []:
        sub = class_subset_eval(probs, labels, subset_preset(name), _class_names(mode)
                                if mode == "binary" else None)
        export_report(sub, out, "subset_" + name.replace(":", "_").replace("+", "-"), plot=args.plot)
    manifest.config.update(mode=mode, subsets=args.subset or [], ap_runs=args.ap_runs)
    return out


def cmd_explain(args, cfg, manifest):
    from .evaluation import attention_report, export_report
    from .training import predict

    out = _out_dir(args)
    model, meta, mode = _load_model(args)
    data = _load_dyads(args, model.config, mode == "binary")
    manifest.inputs.update(digest_inputs([args.checkpoint, args.manifest, args.contexts]))
    res = predict(model, data, fixed_equal=bool(meta.get("fixed_equal", False)),
                  modalities=meta.get("modalities", "FSC"))
    labels = data.labels.numpy()
    keep = labels >= 0
    summary = attention_report(zip(res["merge_attention"][keep], labels[keep]), _class_names(mode))
    export_report(summary, out, "attention", plot=args.plot)
    print(summary.table(), end="")
    return out


def cmd_ablate(args, cfg, manifest):
    from .evaluation import ABLATION_CONFIGS, ablation_matrix, export_report, report_from_probabilities
    from .experiment import CLASS_NAMES, ToyConfig, build_split
    from .model import build_model
    from .training import predict, pretrain_phase1, train_phase2

    toy = ToyConfig.from_dict(cfg.get("experiment", {}))
    if "model" in cfg:
        toy.model = _model_config(cfg)
    manifest.config.update(experiment=toy.to_dict())
    out = _out_dir(args)
    train = build_split(toy.n_train, toy.train_data_seed, toy.synth, toy.model, "train")
    test = build_split(toy.n_test, toy.test_data_seed, toy.synth, toy.model, "test").dyads
    model, _ = pretrain_phase1(train.gazefollow, build_model(toy.model, args.seed),
                               replace(toy.pretrain, seed=args.seed))
    encoders = {k: v.clone() for k, v in model.encoder_state().items()}
    y = test.labels.numpy()

    def run(mods):
        m = build_model(toy.model, args.seed)
        m.load_state_dict(encoders, strict=False)
        m, _ = train_phase2(train.dyads, m, replace(toy.classify, seed=args.seed, modalities=mods))
        return report_from_probabilities(predict(m, test, modalities=mods)["probabilities"], y,
                                         CLASS_NAMES)

    table = ablation_matrix(run, ABLATION_CONFIGS)
    export_report(table, out, "ablation", plot=args.plot)
    print(table.table(), end="")
    return out


def cmd_toy(args, cfg, manifest):
    from .experiment import ToyConfig, run_toy_experiment

    toy = ToyConfig.from_dict(cfg.get("experiment", {}))
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    manifest.config.update(experiment=toy.to_dict(), seeds=seeds)
    out = _out_dir(args)
    summary = run_toy_experiment(toy, seeds, out)
    summary.pop("results")
    summary.pop("wall_time")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return out


def cmd_label_pairs(args, cfg, manifest):
    from .geometry import derive_pair_labels
    from .types import HeadBox

    def read(path):
        rows = {}
        for lineno, line in enumerate(_require(path, "input").read_text(encoding="utf-8").splitlines(), 1):
            if line.strip():
                d = json.loads(line)
                rows[str(d.get("sample_id", f"{Path(path).stem}:{lineno}"))] = d
        return rows

    points = read(args.gaze_points)
    boxes = read(args.head_boxes)
    missing = sorted(set(points) ^ set(boxes))
    if missing:
        raise UsageError(f"sample ids not present in both files: {missing[:5]}")
    out = _out_dir(args)
    manifest.inputs.update(digest_inputs([args.gaze_points, args.head_boxes]))
    allow = not args.no_regions
    with open(out / "pair_labels.jsonl", "w", encoding="utf-8") as fh:
        for sid, b in boxes.items():
            heads = [HeadBox.from_seq(v) for v in b["head_boxes"]]
            regions = [HeadBox.from_seq(v) for v in b.get("regions", [])]
            lab = derive_pair_labels([tuple(p) for p in points[sid]["gaze_points"]], heads, regions,
                                     allow_regions=allow, pair=tuple(b.get("pair", (0, 1))))
            fh.write(json.dumps({"sample_id": sid, "lah_p_to_a": lab.lah_p_to_a,
                                 "lah_a_to_p": lab.lah_a_to_p, "laeo": lab.laeo, "sa": lab.sa}) + "\n")
    manifest.config.update(allow_regions=allow)
    return out


def cmd_context_cache(args, cfg, manifest):
    from .context import ContextCache, export_cache, import_cache

    out = _out_dir(args)
    if args.action == "export":
        cache = ContextCache(_require(args.cache, "--cache"))
        n = export_cache(cache, out / "contexts.jsonl")
        manifest.inputs.update(digest_inputs([args.cache]))
    else:
        src = _require(args.file, "--file")
        if args.cache is None:
            raise UsageError("--cache is required for import")
        manifest.inputs.update(digest_inputs([src, args.cache]))
        n = import_cache(src, ContextCache(args.cache))
    print(f"{args.action}ed {n} records")
    manifest.config.update(action=args.action)
    return out


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    common.add_argument("--mode", choices=("multiclass", "binary"), default="multiclass")
    common.add_argument("--fixed-equal-alpha", action="store_true",
                        help="freeze the face weights at (0.5, 0.5)")
    common.add_argument("--print-config", action="store_true",
                        help="print the resolved config and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="csgaze", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_synth_gen)

    data_args = argparse.ArgumentParser(add_help=False)
    data_args.add_argument("--manifest", help="sample manifest (JSONL)")
    data_args.add_argument("--root", help="image root (default: manifest directory)")
    data_args.add_argument("--contexts", help="context cache file overriding manifest text")

    s = sub.add_parser("pretrain", parents=[common, data_args], help="phase-1 heatmap pretraining")
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("train", parents=[common, data_args], help="phase-2 gaze-class training")
    s.add_argument("--checkpoint", help="pretrain checkpoint")
    s.add_argument("--from-scratch", action="store_true")
    s.add_argument("--modalities", default="FSC")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common, data_args], help="evaluate a model or prediction file")
    s.add_argument("--checkpoint")
    s.add_argument("--predictions", help="prediction file instead of a checkpoint")
    s.add_argument("--subset", action="append", help="class-subset preset (repeatable)")
    s.add_argument("--ap-runs", type=int, default=0, help="subsample AP runs (binary mode)")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("explain", parents=[common, data_args], help="per-class merge attention")
    s.add_argument("--checkpoint")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("ablate", parents=[common], help="seven-row modality ablation")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("toy", parents=[common], help="toy reproduction over several seeds")
    s.add_argument("--seeds", help="comma-separated seeds (default: --seed)")
    s.set_defaults(func=cmd_toy)

    s = sub.add_parser("label-pairs", parents=[common], help="LAH / LAEO / SA flags from gaze points")
    s.add_argument("--gaze-points", required=True)
    s.add_argument("--head-boxes", required=True)
    s.add_argument("--no-regions", action="store_true", help="ignore auxiliary regions for SA")
    s.set_defaults(func=cmd_label_pairs)

    s = sub.add_parser("context-cache", parents=[common], help="export or import context caches")
    s.add_argument("action", choices=("export", "import"))
    s.add_argument("--cache", help="cache file")
    s.add_argument("--file", help="records to import")
    s.set_defaults(func=cmd_context_cache)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if "seed" in cfg and "--seed" not in argv:
            args.seed = int(cfg["seed"])
        manifest = RunManifest(args.command, {}, args.seed, argv=argv)
        if args.config:
            manifest.inputs.update(digest_inputs([args.config]))
        out = args.func(args, cfg, manifest)
        if out is not None:
            manifest.outputs = sorted(p.name + ("/" if p.is_dir() else "") for p in Path(out).iterdir()
                                      if p.name != "run_manifest.json")
            manifest.finish(out)
    except UsageError as e:
        print(f"csgaze {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - surface every failure as a nonzero exit
        if args.verbose:
            raise
        print(f"csgaze {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
