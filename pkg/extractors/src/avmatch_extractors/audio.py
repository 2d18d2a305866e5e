"""Audio feature extraction: log-mel frontend plus the VGGish embedding
network, yielding one 128-dim row per 960 ms of audio."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import torch
from scipy import signal
from torch import nn

from .errors import WeightsUnavailableError

SAMPLE_RATE = 16_000
STFT_WINDOW = 400      # 25 ms at 16 kHz
STFT_HOP = 160         # 10 ms
NUM_MEL_BANDS = 64
MEL_MIN_HZ = 125.0
MEL_MAX_HZ = 7500.0
LOG_OFFSET = 0.01
FRAMES_PER_EXAMPLE = 96   # 96 x 10 ms = one 960 ms example
EMBEDDING_DIM = 128

WEIGHTS_ENV_VAR = "AVMATCH_EXTRACTOR_WEIGHTS"
VGGISH_WEIGHTS_FILE = "vggish.pt"
VGGISH_WEIGHTS_URL = (
    "https://github.com/harritaylor/torchvggish/releases/download/"
    "v0.1/vggish-10086976.pth"
)


def _hz_to_mel(hz: np.ndarray) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_filterbank(n_fft: int = 512) -> np.ndarray:
    """Triangular mel filters, shape (n_fft // 2 + 1, NUM_MEL_BANDS)."""
    spectrogram_bins = n_fft // 2 + 1
    bin_hz = np.linspace(0.0, SAMPLE_RATE / 2.0, spectrogram_bins)
    bin_mel = _hz_to_mel(bin_hz)
    band_edges = np.linspace(_hz_to_mel(MEL_MIN_HZ), _hz_to_mel(MEL_MAX_HZ),
                             NUM_MEL_BANDS + 2)
    bank = np.zeros((spectrogram_bins, NUM_MEL_BANDS))
    for i in range(NUM_MEL_BANDS):
        lower, center, upper = band_edges[i:i + 3]
        rising = (bin_mel - lower) / (center - lower)
        falling = (upper - bin_mel) / (upper - center)
        bank[:, i] = np.maximum(0.0, np.minimum(rising, falling))
    bank[0, :] = 0.0  # never pass DC
    return bank


def log_mel_examples(waveform: np.ndarray, sample_rate: int) -> np.ndarray:
    """Mono waveform -> (n_examples, 96, 64) log-mel patches.

    Resamples to 16 kHz, takes 25 ms / 10 ms STFT magnitudes, applies the
    mel filterbank, log-compresses, and frames into non-overlapping 960 ms
    examples; a trailing partial example is dropped.
    """
    wav = np.asarray(waveform, dtype=np.float64)
    if wav.ndim == 2:
        wav = wav.mean(axis=1)
    if wav.ndim != 1:
        raise ValueError(f"expected mono or (n, channels) audio, got {wav.ndim}d")
    if sample_rate != SAMPLE_RATE:
        wav = signal.resample_poly(wav, SAMPLE_RATE, sample_rate)

    n_fft = 512
    window = np.hanning(STFT_WINDOW)
    n_frames = 1 + (len(wav) - STFT_WINDOW) // STFT_HOP
    if n_frames < FRAMES_PER_EXAMPLE:
        return np.zeros((0, FRAMES_PER_EXAMPLE, NUM_MEL_BANDS), np.float32)
    idx = (np.arange(STFT_WINDOW)[None, :]
           + STFT_HOP * np.arange(n_frames)[:, None])
    frames = wav[idx] * window
    magnitude = np.abs(np.fft.rfft(frames, n_fft, axis=1))
    mel = magnitude @ mel_filterbank(n_fft)
    log_mel = np.log(mel + LOG_OFFSET)

    n_examples = n_frames // FRAMES_PER_EXAMPLE
    usable = log_mel[:n_examples * FRAMES_PER_EXAMPLE]
    return usable.reshape(n_examples, FRAMES_PER_EXAMPLE,
                          NUM_MEL_BANDS).astype(np.float32)


class VGGish(nn.Module):
    """VGG-style convolutional stack over (1, 96, 64) log-mel patches."""

    def __init__(self) -> None:
        super().__init__()
        def block(cin, cout, convs):
            layers = []
            for i in range(convs):
                layers += [nn.Conv2d(cin if i == 0 else cout, cout, 3,
                                     padding=1),
                           nn.ReLU(inplace=True)]
            layers.append(nn.MaxPool2d(2, 2))
            return layers

        self.features = nn.Sequential(
            *block(1, 64, 1), *block(64, 128, 1),
            *block(128, 256, 2), *block(256, 512, 2),
        )
        self.embeddings = nn.Sequential(
            nn.Linear(512 * 6 * 4, 4096), nn.ReLU(inplace=True),
            nn.Linear(4096, 4096), nn.ReLU(inplace=True),
            nn.Linear(4096, EMBEDDING_DIM), nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.features(x)
        # channel-last flatten to stay bit-compatible with released weights
        x = x.permute(0, 2, 3, 1).reshape(x.shape[0], -1)
        return self.embeddings(x)


def _resolve_weights(explicit: str | Path | None, filename: str,
                     url: str) -> Path:
    if explicit is not None:
        path = Path(explicit)
    else:
        root = os.environ.get(WEIGHTS_ENV_VAR)
        if root is None:
            raise WeightsUnavailableError(
                f"no weights path given and ${WEIGHTS_ENV_VAR} is unset; "
                f"download {url} and pass its path (or set "
                f"${WEIGHTS_ENV_VAR} to a directory containing {filename})"
            )
        path = Path(root) / filename
    if not path.is_file():
        raise WeightsUnavailableError(
            f"weights file {path} not found; download {url} and place it there"
        )
    return path


def load_vggish(weights: str | Path | None = None, *,
                random_seed: int | None = None) -> VGGish:
    """Build the audio model.

    With ``random_seed`` the network is seeded-randomly initialized, which
    keeps shape/determinism tests and dry runs independent of the pretrained
    checkpoint. Otherwise weights are loaded from ``weights``, or from
    ``$AVMATCH_EXTRACTOR_WEIGHTS/vggish.pt``.
    """
    model = VGGish()
    if random_seed is not None:
        gen = torch.Generator().manual_seed(random_seed)
        with torch.no_grad():
            for p in model.parameters():
                p.copy_(torch.randn(p.shape, generator=gen) * 0.05)
    else:
        path = _resolve_weights(weights, VGGISH_WEIGHTS_FILE, VGGISH_WEIGHTS_URL)
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def extract_audio_features(waveform: np.ndarray, sample_rate: int,
                           model: VGGish, frames: int = 15) -> np.ndarray:
    """15 s of audio -> (frames, 128) float32 embedding matrix.

    VGGish's 960 ms hop yields 15 full examples from a 15 s clip; shorter
    tails are zero-padded rows so the output shape is always exact.
    """
    examples = log_mel_examples(waveform, sample_rate)
    out = np.zeros((frames, EMBEDDING_DIM), dtype=np.float32)
    if len(examples):
        batch = torch.from_numpy(examples[:frames]).unsqueeze(1)
        with torch.no_grad():
            emb = model(batch).numpy().astype(np.float32)
        out[:len(emb)] = emb
    return out
