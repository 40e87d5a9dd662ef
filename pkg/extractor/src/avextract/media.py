"""Clip loading.

Two container forms are supported:

- ``.npz`` clips with keys ``frames`` (T x H x W x 3 uint8),
  ``audio`` (mono float waveform) and ``sample_rate`` (int). The audio
  keys may be absent, which marks the clip as having no audio track.
- video files (``.mp4``/``.avi``/``.mov``/``.mkv``) decoded with OpenCV,
  with the audio track read from a ``.wav`` sidecar of the same stem
  (OpenCV does not demux audio).

Anything undecodable raises MediaError; callers skip and log such
samples, never silently zero-fill them.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import MediaError

VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv"}


@dataclass
class MediaClip:
    frames: np.ndarray  # (T, H, W, 3) uint8
    audio: Optional[np.ndarray]  # float32 mono waveform, or None
    sample_rate: Optional[int]


def _load_npz(path: Path) -> MediaClip:
    try:
        payload = np.load(path)
    except Exception as exc:
        raise MediaError(f"{path}: cannot read npz clip: {exc}")
    if "frames" not in payload:
        raise MediaError(f"{path}: npz clip has no 'frames' array")
    frames = np.asarray(payload["frames"])
    if frames.ndim != 4 or frames.shape[-1] != 3 or frames.shape[0] == 0:
        raise MediaError(
            f"{path}: frames must be (T, H, W, 3) with T >= 1, "
            f"got {frames.shape}")
    audio = None
    rate = None
    if "audio" in payload:
        if "sample_rate" not in payload:
            raise MediaError(f"{path}: audio present but no sample_rate")
        audio = np.asarray(payload["audio"], dtype=np.float32).reshape(-1)
        rate = int(payload["sample_rate"])
        if rate <= 0 or audio.size == 0:
            raise MediaError(f"{path}: empty or invalid audio track")
    return MediaClip(frames=frames.astype(np.uint8), audio=audio,
                     sample_rate=rate)


def _read_wav(path: Path) -> tuple:
    with wave.open(str(path), "rb") as f:
        rate = f.getframerate()
        channels = f.getnchannels()
        width = f.getsampwidth()
        raw = f.readframes(f.getnframes())
    if width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    elif width == 1:
        samples = (np.frombuffer(raw, dtype="u1").astype(np.float32)
                   - 128.0) / 128.0
    else:
        raise MediaError(f"{path}: unsupported wav sample width {width}")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def _load_video(path: Path) -> MediaClip:
    try:
        import cv2
    except ImportError:
        raise MediaError(
            f"{path}: OpenCV is required to decode video files "
            f"(install the 'video' extra)")
    capture = cv2.VideoCapture(str(path))
    frames = []
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
    capture.release()
    if not frames:
        raise MediaError(f"{path}: no decodable frames")
    audio, rate = None, None
    sidecar = path.with_suffix(".wav")
    if sidecar.exists():
        audio, rate = _read_wav(sidecar)
    return MediaClip(frames=np.stack(frames).astype(np.uint8),
                     audio=audio, sample_rate=rate)


def load_clip(path) -> MediaClip:
    path = Path(path)
    if not path.exists():
        raise MediaError(f"{path}: no such file")
    if path.suffix == ".npz":
        return _load_npz(path)
    if path.suffix.lower() in VIDEO_SUFFIXES:
        return _load_video(path)
    raise MediaError(f"{path}: unsupported clip container {path.suffix!r}")
