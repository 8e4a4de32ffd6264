"""Train a small context-aware gaze model end to end in a couple of minutes.

The run is a shrunken copy of the toy reproduction: 600 synthetic scenes,
a narrow model, a few pretraining epochs for the heatmap head, then the
gaze-class stage. It finishes with the usual reports: per-class F1, a
two-class subset, and the per-class split of merge attention between the
scene+context token and the face token.

    python demos/02_train_small_model.py [out_dir]
"""

import sys
from dataclasses import replace

from csgaze.evaluation import attention_report, class_subset_eval, export_report, subset_preset
from csgaze.evaluation import report_from_probabilities
from csgaze.experiment import CLASS_NAMES, build_split
from csgaze.model import ModelConfig, build_model
from csgaze.synth import SynthConfig
from csgaze.training import TrainConfig, predict, pretrain_phase1, train_phase2

out_dir = sys.argv[1] if len(sys.argv) > 1 else None

model_cfg = ModelConfig(face_dim=32, scene_dim=32, text_dim=32, attention_dim=32, attention_heads=2,
                        classifier_hidden=32, face_size=24, scene_size=48, face_widths=(8, 16, 32),
                        scene_widths=(8, 16, 32))
# context descriptions perceive gaze with a little angular noise, so text is helpful but not an oracle
synth = SynthConfig(describe_noise=0.12)

train = build_split(600, 0, synth, model_cfg, "train")
test = build_split(200, 1, synth, model_cfg, "test").dyads
print(f"train {len(train.dyads)} dyads, test {len(test)} dyads")

# phase 1: gaze-following heatmaps teach the encoders where people look
model = build_model(model_cfg, seed=0)
model, plog = pretrain_phase1(train.gazefollow, model,
                              TrainConfig(phase="pretrain", max_epochs=4, batch_size=64,
                                          aux_gaze_weight=1.0))
print("heatmap peak error per epoch (cells):", [round(e.val_metric, 1) for e in plog.epochs])

# phase 2: the whole network learns the five gaze classes with early stopping
model, tlog = train_phase2(train.dyads, model, TrainConfig(batch_size=64, max_epochs=40))
print(f"gaze-class training stopped after {len(tlog.epochs)} epochs ({tlog.stop_reason}), "
      f"best epoch {tlog.best_epoch}")

out = predict(model, test)
y = test.labels.numpy()
report = report_from_probabilities(out["probabilities"], y, CLASS_NAMES)
print()
print(report.table())

# the Mutual-vs-Share question only: renormalize over the two classes
pair = class_subset_eval(out["probabilities"], y, subset_preset("2:mutual+share"))
print(pair.table())

att = attention_report(zip(out["merge_attention"], y), CLASS_NAMES)
print(att.table())

if out_dir:
    export_report(report, out_dir, "metrics")
    export_report(att, out_dir, "attention")
    print("reports written to", out_dir)
