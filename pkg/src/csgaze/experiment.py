"""The toy reproduction: synthetic data, two-phase training, ablations and
the attention report, written as deterministic metric files."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .datasets import DyadTensors, GazeFollowTensors, dyad_tensors, gazefollow_tensors
from .evaluation import (
    AttentionSummary,
    MetricsReport,
    attention_report,
    report_from_probabilities,
    write_predictions,
)
from .inference import records_from_outputs
from .model import DESK_CONFIG, ModelConfig, build_model
from .synth import SynthConfig, describe_scene, render_scene, sample_scenes, scene_to_dyad, scene_to_gazefollow
from .training import TrainConfig, predict, pretrain_phase1, train_phase2
from .types import GazeClass

log = logging.getLogger(__name__)

CLASS_NAMES = [c.tag for c in GazeClass]


@dataclass
class ToyConfig:
    """Everything that defines one toy run besides the training seed."""

    n_train: int = 2000
    n_test: int = 400
    train_data_seed: int = 0
    test_data_seed: int = 1
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(describe_noise=0.12))
    model: ModelConfig = DESK_CONFIG
    pretrain: TrainConfig = field(
        default_factory=lambda: TrainConfig(phase="pretrain", aux_gaze_weight=1.0))
    classify: TrainConfig = field(default_factory=TrainConfig)
    modalities: tuple = ("F", "FC", "FSC")

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train, "n_test": self.n_test,
            "train_data_seed": self.train_data_seed, "test_data_seed": self.test_data_seed,
            "synth": self.synth.to_dict(), "model": self.model.to_dict(),
            "pretrain": self.pretrain.to_dict(), "classify": self.classify.to_dict(),
            "modalities": list(self.modalities),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyConfig":
        d = dict(d)
        kw = {k: d[k] for k in ("n_train", "n_test", "train_data_seed", "test_data_seed") if k in d}
        if "synth" in d:
            kw["synth"] = SynthConfig.from_dict(d["synth"])
        if "model" in d:
            kw["model"] = ModelConfig.from_dict(d["model"])
        if "pretrain" in d:
            kw["pretrain"] = TrainConfig(**{"phase": "pretrain", **d["pretrain"]})
        if "classify" in d:
            kw["classify"] = TrainConfig(**{"phase": "classify", **d["classify"]})
        if "modalities" in d:
            kw["modalities"] = tuple(d["modalities"])
        return cls(**kw)


@dataclass
class ToySplit:
    dyads: DyadTensors
    gazefollow: GazeFollowTensors


def build_split(n: int, seed: int, synth: SynthConfig, model: ModelConfig, prefix: str) -> ToySplit:
    """Render ``n`` scenes in memory; one gaze-following sample (the
    principal) per scene."""
    images, dyads, follows = {}, [], []
    for i, scene in enumerate(sample_scenes(n, seed, synth)):
        sid = f"{prefix}-{i:06d}"
        images[sid] = render_scene(scene)
        dyads.append(scene_to_dyad(scene, sid, sid, describe_scene(scene, synth.describe_noise)))
        follows.append(scene_to_gazefollow(scene, sid, sid)[0])
    return ToySplit(dyad_tensors(dyads, model, images=images),
                    gazefollow_tensors(follows, model, images=images))


@dataclass
class SeedResult:
    seed: int
    pretrain_error: List[float]
    reports: Dict[str, MetricsReport]
    attention: AttentionSummary
    train_logs: Dict[str, str]


def run_seed(train: ToySplit, test: DyadTensors, seed: int, config: ToyConfig,
             out_dir=None) -> SeedResult:
    """Pretrain once, then train and evaluate each modality wiring from the
    same phase-1 encoders."""
    model = build_model(config.model, seed)
    model, plog = pretrain_phase1(train.gazefollow, model, replace(config.pretrain, seed=seed))
    encoders = {k: v.clone() for k, v in model.encoder_state().items()}
    reports, logs, attention = {}, {}, None
    y = test.labels.numpy()
    for mods in config.modalities:
        m = build_model(config.model, seed)
        m.load_state_dict(encoders, strict=False)
        m, tlog = train_phase2(train.dyads, m, replace(config.classify, seed=seed, modalities=mods))
        out = predict(m, test, modalities=mods)
        reports[mods] = report_from_probabilities(out["probabilities"], y, CLASS_NAMES)
        logs[mods] = tlog.to_jsonl(include_time=False)
        log.info("seed %d %s: macro F1 %.4f after %d epochs", seed, mods, reports[mods].macro_f1,
                 len(tlog.epochs))
        if mods == "FSC":
            attention = attention_report(zip(out["merge_attention"], y), CLASS_NAMES)
        if out_dir is not None:
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            (d / f"metrics_{mods}.json").write_text(reports[mods].to_json(), encoding="utf-8")
            (d / f"train_log_{mods}.jsonl").write_text(logs[mods], encoding="utf-8")
            write_predictions(records_from_outputs(out, test.sample_ids), y,
                              d / f"predictions_{mods}.jsonl")
    if out_dir is not None:
        d = Path(out_dir)
        (d / "pretrain_log.jsonl").write_text(plog.to_jsonl(include_time=False), encoding="utf-8")
        if attention is not None:
            (d / "attention.json").write_text(attention.to_json(), encoding="utf-8")
    return SeedResult(seed, [round(e.val_metric, 10) for e in plog.epochs], reports, attention, logs)


def ordering_check(results: Sequence[SeedResult], floor: float = 0.01) -> dict:
    """Mean-comparison test of F+S+C >= F+C >= F.

    An ordering counts as held when the mean paired difference is above
    ``-max(floor, 2 * standard error of the paired differences)``.
    """
    out = {}
    for hi, lo in (("FSC", "FC"), ("FC", "F")):
        diff = np.array([r.reports[hi].macro_f1 - r.reports[lo].macro_f1 for r in results])
        se = float(diff.std(ddof=1) / np.sqrt(len(diff))) if len(diff) > 1 else 0.0
        tol = max(floor, 2 * se)
        out[f"{hi}>={lo}"] = {"mean_diff": round(float(diff.mean()), 10),
                              "tolerance": round(tol, 10),
                              "holds": bool(diff.mean() >= -tol)}
    return out


def attention_direction(results: Sequence[SeedResult]) -> dict:
    mutual = [r.attention.dominant("Mutual") == "face" for r in results]
    void = [r.attention.dominant("Void") == "scene" for r in results]
    both = [m and v for m, v in zip(mutual, void)]
    return {"mutual_face_dominant": mutual, "void_scene_dominant": void,
            "seeds_matching": int(sum(both)), "holds": sum(both) >= 2}


def run_toy_experiment(config: ToyConfig, seeds: Sequence[int] = (0, 1, 2), out_dir=None) -> dict:
    """Full toy reproduction; returns (and writes) the summary."""
    t0 = time.perf_counter()
    train = build_split(config.n_train, config.train_data_seed, config.synth, config.model, "train")
    test = build_split(config.n_test, config.test_data_seed, config.synth, config.model, "test").dyads
    timing = {"data": time.perf_counter() - t0, "seeds": []}
    results = []
    for seed in seeds:
        sub = None if out_dir is None else Path(out_dir) / f"seed{seed}"
        t0 = time.perf_counter()
        results.append(run_seed(train, test, seed, config, sub))
        timing["seeds"].append(time.perf_counter() - t0)
    summary = {
        "seeds": list(seeds),
        "macro_f1": {m: [round(r.reports[m].macro_f1, 10) for r in results]
                     for m in config.modalities},
        "pretrain_final_error": [r.pretrain_error[-1] for r in results],
        "pretrain_first_error": [r.pretrain_error[0] for r in results],
    }
    if {"F", "FC", "FSC"} <= set(config.modalities):
        summary["ordering"] = ordering_check(results)
    if "FSC" in config.modalities:
        summary["attention"] = {str(r.seed): r.attention.to_dict()["rows"] for r in results}
        summary["attention_direction"] = attention_direction(results)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (Path(out_dir) / "config.json").write_text(
            json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    # kept out of the written files, which must be byte-stable across reruns
    summary["results"] = results
    summary["wall_time"] = timing
    return summary
