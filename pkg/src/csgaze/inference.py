"""Single-sample forward passes and trace/prediction conversion."""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
import torch

from .datasets import DyadTensors, dyad_tensors
from .model.network import CSGaze, ForwardTrace
from .training import predict
from .types import DyadSample, PredictionRecord


@torch.no_grad()
def forward_sample(model: CSGaze, sample: DyadSample, image=None, context: str = None,
                   fixed_equal: bool = False, modalities: str = "FSC") -> ForwardTrace:
    """Run one dyad through the model and return its trace.

    ``image`` overrides ``sample.image_ref``; ``context`` overrides the
    sample's own context text.
    """
    images = {sample.image_ref: image} if image is not None else None
    contexts = {sample.sample_id: context} if context is not None else None
    data = dyad_tensors([sample], model.config, images=images, contexts=contexts)
    return traces_from_outputs(predict(model, data, fixed_equal, modalities), data)[0]


def traces_from_outputs(out: dict, data: DyadTensors) -> List[ForwardTrace]:
    labels = data.labels.tolist()
    return [
        ForwardTrace(
            f_merged=out["f_merged"][i], s_fused=out["s_fused"][i],
            merge_attention=out["merge_attention"][i], logits=out["logits"][i],
            label=None if labels[i] < 0 else labels[i], sample_id=data.sample_ids[i],
        )
        for i in range(len(data))
    ]


def records_from_outputs(out: dict, sample_ids: Sequence[str]) -> List[PredictionRecord]:
    return [PredictionRecord.from_logits(sid, z) for sid, z in zip(sample_ids, out["logits"])]
