"""Encoder backends.

Model identifiers select the backend:

- ``hashed/<anything>``: deterministic offline encoders built from seeded
  random projections of cheap content features. They stand in for the
  pretrained models during pipeline and contract testing in environments
  without model weights; embeddings are content-sensitive and reproducible
  but carry no semantics.
- anything else is treated as a Hugging Face checkpoint id and loaded
  lazily through `transformers` (requires the 'hf' extra and downloaded
  weights).

The chosen identifiers are recorded in the output archive manifest.
"""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import EncoderError

CLIP_DIM = 512
CLAP_DIM = 1024


def _seeded_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class HashedVisualEncoder:
    """Random projection of a coarse grayscale thumbnail."""

    dim = CLIP_DIM
    _thumb = 16

    def __init__(self, model_id: str):
        self.model_id = model_id
        rng = _seeded_rng(model_id, "visual")
        self._proj = rng.normal(size=(self._thumb * self._thumb, self.dim))

    def encode_image(self, frame: np.ndarray) -> np.ndarray:
        gray = np.asarray(frame, dtype=np.float64).mean(axis=2)
        h, w = gray.shape
        rows = np.linspace(0, h - 1, self._thumb).astype(int)
        cols = np.linspace(0, w - 1, self._thumb).astype(int)
        thumb = gray[np.ix_(rows, cols)].reshape(-1) / 255.0
        return (thumb - thumb.mean()) @ self._proj


class HashedAudioEncoder:
    """Random projection of per-band log-mel statistics."""

    dim = CLAP_DIM

    def __init__(self, model_id: str):
        self.model_id = model_id
        rng = _seeded_rng(model_id, "audio")
        self._proj = rng.normal(size=(128, self.dim))

    def encode_clip_audio(self, waveform: np.ndarray,
                          log_mel: np.ndarray) -> np.ndarray:
        stats = np.concatenate([log_mel.mean(axis=0), log_mel.std(axis=0)])
        return stats @ self._proj


class HashedTextEncoder:
    """Random projection of hashed character trigram counts."""

    _buckets = 2048

    def __init__(self, model_id: str, dim: int):
        self.model_id = model_id
        self.dim = dim
        rng = _seeded_rng(model_id, "text", dim)
        self._proj = rng.normal(size=(self._buckets, dim))

    def encode_text(self, text: str) -> np.ndarray:
        counts = np.zeros(self._buckets)
        padded = f"  {text.lower()}  "
        for i in range(len(padded) - 2):
            gram = padded[i:i + 3].encode("utf-8")
            counts[zlib.crc32(gram) % self._buckets] += 1.0
        return np.sqrt(counts) @ self._proj


class TransformersClipEncoder:
    """Vision-language dual encoder via transformers (lazy, needs weights)."""

    dim = CLIP_DIM

    def __init__(self, model_id: str):
        self.model_id = model_id
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError(
                f"clip backend {model_id!r} needs torch+transformers "
                f"(install the 'hf' extra): {exc}")
        self._model = CLIPModel.from_pretrained(model_id).eval()
        self._processor = CLIPProcessor.from_pretrained(model_id)

    def encode_image(self, frame: np.ndarray) -> np.ndarray:
        import torch
        with torch.no_grad():
            inputs = self._processor(images=frame, return_tensors="pt")
            return self._model.get_image_features(**inputs)[0].numpy()

    def encode_text(self, text: str) -> np.ndarray:
        import torch
        with torch.no_grad():
            inputs = self._processor(text=[text], return_tensors="pt",
                                     padding=True)
            return self._model.get_text_features(**inputs)[0].numpy()


class TransformersClapEncoder:
    """Audio-language dual encoder via transformers (lazy, needs weights).

    Feeds the preprocessed 32 kHz waveform to the checkpoint's own feature
    extractor rather than the local log-mel pipeline, since each CLAP
    checkpoint pins its own frontend.
    """

    dim = CLAP_DIM

    def __init__(self, model_id: str):
        self.model_id = model_id
        try:
            import torch  # noqa: F401
            from transformers import ClapModel, ClapProcessor
        except ImportError as exc:
            raise EncoderError(
                f"clap backend {model_id!r} needs torch+transformers "
                f"(install the 'hf' extra): {exc}")
        self._model = ClapModel.from_pretrained(model_id).eval()
        self._processor = ClapProcessor.from_pretrained(model_id)

    def encode_clip_audio(self, waveform: np.ndarray,
                          log_mel: np.ndarray) -> np.ndarray:
        import torch
        with torch.no_grad():
            inputs = self._processor(audios=waveform, sampling_rate=32_000,
                                     return_tensors="pt")
            return self._model.get_audio_features(**inputs)[0].numpy()

    def encode_text(self, text: str) -> np.ndarray:
        import torch
        with torch.no_grad():
            inputs = self._processor(text=[text], return_tensors="pt",
                                     padding=True)
            return self._model.get_text_features(**inputs)[0].numpy()


@dataclass
class EncoderSet:
    clip_model: str
    clap_model: str
    visual: object
    audio: object
    clip_text: object
    clap_text: object


def build_encoders(clip_model: str = "hashed/clip-vit-b32",
                   clap_model: str = "hashed/clap-htsat-32k") -> EncoderSet:
    if clip_model.startswith("hashed/"):
        visual = HashedVisualEncoder(clip_model)
        clip_text = HashedTextEncoder(clip_model, CLIP_DIM)
    else:
        clip = TransformersClipEncoder(clip_model)
        visual = clip_text = clip
    if clap_model.startswith("hashed/"):
        audio = HashedAudioEncoder(clap_model)
        clap_text = HashedTextEncoder(clap_model, CLAP_DIM)
    else:
        clap = TransformersClapEncoder(clap_model)
        audio = clap_text = clap
    return EncoderSet(clip_model=clip_model, clap_model=clap_model,
                      visual=visual, audio=audio, clip_text=clip_text,
                      clap_text=clap_text)
