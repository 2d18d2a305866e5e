"""Video feature extraction: one frame per second through ResNet-50,
yielding a (15, 1000) class-logit matrix per clip."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torchvision.models import resnet50

from .audio import _resolve_weights

FEATURE_DIM = 1000
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

RESNET_WEIGHTS_FILE = "resnet50.pth"
RESNET_WEIGHTS_URL = (
    "https://download.pytorch.org/models/resnet50-0676ba61.pth"
)


def load_resnet50(weights: str | Path | None = None, *,
                  random_seed: int | None = None) -> torch.nn.Module:
    """Build the frame model; see load_vggish for the weights convention."""
    model = resnet50(weights=None)
    if random_seed is not None:
        gen = torch.Generator().manual_seed(random_seed)
        with torch.no_grad():
            for p in model.parameters():
                p.copy_(torch.randn(p.shape, generator=gen) * 0.05)
    else:
        path = _resolve_weights(weights, RESNET_WEIGHTS_FILE, RESNET_WEIGHTS_URL)
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def preprocess_frame(frame_rgb: np.ndarray) -> np.ndarray:
    """RGB uint8 (H, W, 3) -> normalized float32 (3, 224, 224).

    Standard ImageNet evaluation transform: scale the short side to 256
    with bilinear interpolation, center-crop 224, normalize per channel.
    """
    import cv2

    h, w = frame_rgb.shape[:2]
    scale = 256.0 / min(h, w)
    resized = cv2.resize(frame_rgb, (round(w * scale), round(h * scale)),
                         interpolation=cv2.INTER_LINEAR)
    rh, rw = resized.shape[:2]
    top, left = (rh - 224) // 2, (rw - 224) // 2
    crop = resized[top:top + 224, left:left + 224].astype(np.float32) / 255.0
    crop = (crop - IMAGENET_MEAN) / IMAGENET_STD
    return crop.transpose(2, 0, 1)


def extract_video_features(frames_rgb: list[np.ndarray],
                           model: torch.nn.Module,
                           frames: int = 15) -> np.ndarray:
    """One sampled frame per second -> (frames, 1000) float32 matrix.

    Missing trailing frames (short clips) become zero rows.
    """
    out = np.zeros((frames, FEATURE_DIM), dtype=np.float32)
    if frames_rgb:
        batch = torch.from_numpy(
            np.stack([preprocess_frame(f) for f in frames_rgb[:frames]]))
        with torch.no_grad():
            logits = model(batch).numpy().astype(np.float32)
        out[:len(logits)] = logits
    return out
