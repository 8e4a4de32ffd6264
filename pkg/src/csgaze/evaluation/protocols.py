"""Class-subset evaluation, modality ablation and the attention report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..types import GazeClass, PredictionRecord
from .metrics import MetricsReport, metrics_report, report_from_probabilities

SH, MU, SI, MI, VO = (GazeClass.SHARE, GazeClass.MUTUAL, GazeClass.SINGLE, GazeClass.MISS,
                      GazeClass.VOID)

# Five-class subsets; the 4-class rows follow the caption wording.
SUBSET_PRESETS: Dict[str, Tuple[GazeClass, ...]] = {
    "2:miss+single": (MI, SI),
    "2:mutual+share": (MU, SH),
    "3:mutual+share+void": (MU, SH, VO),
    "3:miss+void+single": (MI, VO, SI),
    "4:miss+mutual+void+single": (MI, MU, VO, SI),
    "4:mutual+share+void+single": (MU, SH, VO, SI),
}

# Index pairs over a (LAH, LAEO, SA) probability layout.
PAIR_PRESETS: Dict[str, Tuple[int, int]] = {
    "lah+laeo": (0, 1),
    "lah+sa": (0, 2),
    "laeo+sa": (1, 2),
}

ABLATION_CONFIGS = ("S", "C", "SC", "F", "FS", "FC", "FSC")
ABLATION_NAMES = {
    "S": "Scene", "C": "Context", "SC": "Scene + Context", "F": "Face",
    "FS": "Face + Scene", "FC": "Face + Context", "FSC": "Face + Scene + Context",
}


def _names(subset, class_names):
    if class_names is not None:
        return [class_names[int(c)] for c in subset]
    return [GazeClass(int(c)).tag for c in subset]


def class_subset_eval(probabilities, labels, subset: Sequence[int],
                      class_names: Optional[Sequence[str]] = None) -> MetricsReport:
    """Report restricted to samples labelled within ``subset``.

    Probabilities are renormalised over the subset columns and re-argmaxed;
    report classes follow ``subset`` order.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    subset = [int(c) for c in subset]
    n = p.shape[1]
    if not 2 <= len(subset) <= n or len(set(subset)) != len(subset):
        raise ValueError(f"subset must hold 2..{n} distinct classes, got {subset}")
    if any(not 0 <= c < n for c in subset):
        raise ValueError(f"subset class out of range: {subset}")
    keep = np.isin(y, subset)
    if not keep.any():
        raise ValueError("no samples carry a label inside the subset")
    q = p[keep][:, subset]
    q = q / q.sum(axis=1, keepdims=True)
    remap = {c: i for i, c in enumerate(subset)}
    y_sub = np.array([remap[v] for v in y[keep]], dtype=np.int64)
    return report_from_probabilities(q, y_sub, _names(subset, class_names))


def subset_preset(name: str) -> Tuple[int, ...]:
    if name in SUBSET_PRESETS:
        return tuple(int(c) for c in SUBSET_PRESETS[name])
    if name in PAIR_PRESETS:
        return PAIR_PRESETS[name]
    raise KeyError(f"unknown preset {name!r}; choose from {sorted(SUBSET_PRESETS) + sorted(PAIR_PRESETS)}")


# -------------------------------------------------------------------- attention

@dataclass
class AttentionSummary:
    """Per-class mean merge attention; columns are (scene, face)."""

    class_names: List[str]
    rows: Dict[str, Tuple[float, float]]
    counts: Dict[str, int]
    omitted: List[str] = field(default_factory=list)

    def dominant(self, name: str) -> str:
        s, f = self.rows[name]
        return "face" if f > s else "scene"

    def to_dict(self) -> dict:
        return {
            "columns": ["scene", "face"],
            "rows": {k: [round(float(v), 10) for v in r] for k, r in self.rows.items()},
            "counts": dict(self.counts),
            "omitted": list(self.omitted),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        w = max([len(n) for n in self.class_names] + [5])
        lines = [f"{'class':<{w}}  scene   face"]
        for n in self.class_names:
            if n in self.rows:
                s, f = self.rows[n]
                lines.append(f"{n:<{w}}  {s:.3f}  {f:.3f}")
        if self.omitted:
            lines.append("omitted: " + ", ".join(self.omitted))
        return "\n".join(lines) + "\n"


def attention_report(traces, class_names: Optional[Sequence[str]] = None) -> AttentionSummary:
    """Average ``merge_attention`` per true class over labelled traces.

    Accepts ForwardTrace objects or ``(merge_attention, label)`` pairs.
    """
    att, lab = [], []
    for t in traces:
        a, y = (t.merge_attention, t.label) if hasattr(t, "merge_attention") else t
        if y is None:
            continue
        att.append(np.asarray(a, dtype=np.float64))
        lab.append(int(y))
    names = list(class_names) if class_names is not None else [c.tag for c in GazeClass]
    att = np.array(att).reshape(-1, 2)
    lab = np.array(lab, dtype=np.int64)
    rows, counts, omitted = {}, {}, []
    for c, name in enumerate(names):
        sel = lab == c
        if not sel.any():
            omitted.append(name)
            continue
        m = att[sel].mean(axis=0)
        m = m / m.sum()
        rows[name] = (float(m[0]), float(m[1]))
        counts[name] = int(sel.sum())
    return AttentionSummary(names, rows, counts, omitted)


# --------------------------------------------------------------------- ablation

@dataclass
class AblationTable:
    rows: Dict[str, MetricsReport]

    def to_dict(self) -> dict:
        return {"configs": list(self.rows),
                "rows": {cfg: {"name": ABLATION_NAMES[cfg], "macro_f1": round(r.macro_f1, 10),
                               "accuracy": round(r.accuracy, 10), "report": r.to_dict()}
                         for cfg, r in self.rows.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        w = max(len(v) for v in ABLATION_NAMES.values())
        lines = [f"{'modalities':<{w}}  F1      acc"]
        for cfg, r in self.rows.items():
            lines.append(f"{ABLATION_NAMES[cfg]:<{w}}  {r.macro_f1:.4f}  {r.accuracy:.4f}")
        return "\n".join(lines) + "\n"


def ablation_matrix(run_fn: Callable[[str], MetricsReport],
                    configs: Iterable[str] = ABLATION_CONFIGS) -> AblationTable:
    """Run ``run_fn(modalities)`` for each wiring, in the given order."""
    rows = {}
    for cfg in configs:
        key = "".join(sorted(cfg.upper(), key="FSC".index))
        if key not in ABLATION_NAMES:
            raise ValueError(f"unknown modality set {cfg!r}")
        report = run_fn(key)
        if not isinstance(report, MetricsReport):
            raise TypeError(f"run_fn({key!r}) returned {type(report).__name__}")
        rows[key] = report
    return AblationTable(rows)


# ------------------------------------------------------------ prediction files

def write_predictions(records: Iterable[PredictionRecord], labels, path) -> int:
    """One JSON object per line: ``sample_id``, ``label`` and ``probabilities``."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec, y in zip(records, labels):
            fh.write(json.dumps({
                "sample_id": rec.sample_id,
                "label": None if y is None or int(y) < 0 else int(y),
                "probabilities": [round(float(v), 12) for v in rec.probabilities],
            }) + "\n")
            n += 1
    return n


def read_predictions(path):
    """Returns ``(sample_ids, labels, probabilities)``; unlabeled rows get -1."""
    ids, labels, probs = [], [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            ids.append(str(d["sample_id"]))
            labels.append(-1 if d["label"] is None else int(d["label"]))
            probs.append([float(v) for v in d["probabilities"]])
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"{path}:{lineno}: bad prediction line ({e})") from None
    if len({len(p) for p in probs}) > 1:
        raise ValueError(f"{path}: rows disagree on the number of classes")
    return ids, np.array(labels, dtype=np.int64), np.array(probs, dtype=np.float64)


def export_report(report, out_dir, stem: str, plot: bool = False) -> List[Path]:
    """Write ``<stem>.json`` and ``<stem>.txt``; ``plot`` adds a PNG when matplotlib is present."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.json", out / f"{stem}.txt"]
    paths[0].write_text(report.to_json(), encoding="utf-8")
    paths[1].write_text(report.table(), encoding="utf-8")
    if plot:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            return paths
        fig, ax = plt.subplots(figsize=(5, 3))
        if isinstance(report, MetricsReport):
            ax.bar(report.class_names, report.f1)
            ax.set_ylabel("F1")
        elif isinstance(report, AttentionSummary):
            names = list(report.rows)
            ax.bar(names, [report.rows[n][1] for n in names], label="face")
            ax.bar(names, [report.rows[n][0] for n in names],
                   bottom=[report.rows[n][1] for n in names], label="scene")
            ax.legend()
        else:
            names = [ABLATION_NAMES[k] for k in report.rows]
            ax.barh(names, [r.macro_f1 for r in report.rows.values()])
            ax.set_xlabel("macro F1")
        fig.tight_layout()
        p = out / f"{stem}.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        paths.append(p)
    return paths


__all__ = [
    "SUBSET_PRESETS", "PAIR_PRESETS", "ABLATION_CONFIGS", "ABLATION_NAMES",
    "class_subset_eval", "subset_preset", "AttentionSummary", "attention_report",
    "AblationTable", "ablation_matrix", "write_predictions", "read_predictions",
    "export_report", "metrics_report",
]
