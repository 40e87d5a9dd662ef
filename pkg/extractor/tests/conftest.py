import json

import numpy as np
import pytest


def _frames(t, h=32, w=40, phase=0):
    rows = np.arange(h)[None, :, None, None]
    cols = np.arange(w)[None, None, :, None]
    steps = np.arange(t)[:, None, None, None]
    chans = np.arange(3)[None, None, None, :]
    return ((rows * 3 + cols * 5 + steps * 11 + chans * 17 + phase)
            % 256).astype(np.uint8)


def _tone(freq, seconds, rate):
    t = np.arange(int(seconds * rate)) / rate
    return (0.5 * np.sin(2 * np.pi * freq * t)).astype(np.float32)


@pytest.fixture(scope="session")
def mini_media(tmp_path_factory):
    """Five clips covering resample, pad, crop, and multi-role splits."""
    root = tmp_path_factory.mktemp("media")
    clips = [
        ("clip0.npz", _frames(12, phase=0), _tone(440, 10.0, 32_000)),
        ("clip1.npz", _frames(5, phase=40), _tone(440, 4.0, 16_000)),
        ("clip2.npz", _frames(9, phase=80), _tone(220, 15.0, 48_000)),
        ("clip3.npz", _frames(1, phase=120), _tone(660, 2.0, 44_100)),
        ("clip4.npz", _frames(7, phase=160), _tone(110, 8.0, 8_000)),
    ]
    rates = {"clip0.npz": 32_000, "clip1.npz": 16_000, "clip2.npz": 48_000,
             "clip3.npz": 44_100, "clip4.npz": 8_000}
    for name, frames, tone in clips:
        np.savez(root / name, frames=frames, audio=tone,
                 sample_rate=rates[name])
    manifest = {
        "dataset": "mini",
        "prompt_set": "vggsound",
        "classes": [
            {"name": "strumming guitar", "class_role": "TrainSeen"},
            {"name": "tabla", "class_role": "TrainSeen"},
            {"name": "violin", "class_role": "ValUnseen"},
            {"name": "playing drums", "class_role": "TestUnseen"},
        ],
        "samples": [
            {"media": "clip0.npz", "class": "strumming guitar",
             "split": "Train"},
            {"media": "clip1.npz", "class": "strumming guitar",
             "split": "TestS"},
            {"media": "clip2.npz", "class": "tabla", "split": "Train"},
            {"media": "clip3.npz", "class": "violin", "split": "ValU"},
            {"media": "clip4.npz", "class": "playing drums",
             "split": "TestU"},
        ],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root
