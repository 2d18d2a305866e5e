"""Cross-modal audio-video matching: dual-branch embeddings, contrastive
training, temporal encoders, and top-k retrieval evaluation."""

from .data import (
    ClipPair,
    DatasetSplit,
    FeatureSequence,
    SynthConfig,
    load_pairs,
    make_batches,
    read_feature_file,
    split_by_song,
    synth_generate,
    write_feature_file,
)
from .engine import (
    RecallReport,
    embed_pairs,
    evaluate_topk_recall,
    load_checkpoint,
    random_baseline,
    recommend,
    save_checkpoint,
    train,
)
from .losses import (
    LossConfig,
    cosine_similarity_matrix,
    infonce_loss,
    intra_modal_structure_loss,
    triplet_loss_mined,
    vmnet_combined_loss,
)
from .model import DualBranchModel, EmbeddingBatch, ModelConfig, build_preset
from .tensor import Tensor, finite_diff_check

__version__ = "0.1.0"

__all__ = [
    "ClipPair",
    "DatasetSplit",
    "DualBranchModel",
    "EmbeddingBatch",
    "FeatureSequence",
    "LossConfig",
    "ModelConfig",
    "RecallReport",
    "SynthConfig",
    "Tensor",
    "build_preset",
    "cosine_similarity_matrix",
    "embed_pairs",
    "evaluate_topk_recall",
    "finite_diff_check",
    "infonce_loss",
    "intra_modal_structure_loss",
    "load_checkpoint",
    "load_pairs",
    "make_batches",
    "random_baseline",
    "read_feature_file",
    "recommend",
    "save_checkpoint",
    "split_by_song",
    "synth_generate",
    "train",
    "triplet_loss_mined",
    "vmnet_combined_loss",
    "write_feature_file",
]
