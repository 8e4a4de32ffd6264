from .attention import CrossAttention, MultiHeadAttention, SelfAttentionMerge
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    transfer_encoders,
)
from .encoders import FaceEncoder, HashedTextEncoder, SceneEncoder, text_ids, tokenize
from .network import (
    DESK_CONFIG,
    MODALITIES,
    CSGaze,
    ForwardOutput,
    ForwardTrace,
    FusionStack,
    HeatmapHead,
    ModelConfig,
    build_model,
    fuse_faces,
    import_backbone_weights,
    with_classes,
)
