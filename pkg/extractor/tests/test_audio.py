import numpy as np
import pytest

from avextract import audio


def test_resample_doubles_16k_to_32k():
    x = np.random.default_rng(0).normal(size=32_000).astype(np.float32)
    y = audio.resample(x, 16_000)
    assert y.shape[0] == 64_000


def test_resample_same_rate_is_identity():
    x = np.random.default_rng(1).normal(size=1000).astype(np.float32)
    assert audio.resample(x, 32_000) is x


def test_center_fix_exact_length_preserved():
    x = np.random.default_rng(2).normal(size=320_000).astype(np.float32)
    assert audio.center_fix(x) is x


def test_center_fix_pads_four_seconds_symmetrically():
    # 4 s at 32 kHz = 128000 samples -> 3 s of zeros on each side
    x = np.ones(128_000, dtype=np.float32)
    y = audio.center_fix(x)
    assert y.shape[0] == 320_000
    assert np.all(y[:96_000] == 0)
    assert np.all(y[-96_000:] == 0)
    assert np.all(y[96_000:96_000 + 128_000] == 1)


def test_center_fix_crops_center():
    x = np.arange(320_010, dtype=np.float32)
    y = audio.center_fix(x)
    assert y.shape[0] == 320_000
    assert y[0] == 5  # (320010 - 320000) // 2


def test_log_mel_shape_for_ten_seconds():
    x = np.sin(np.arange(320_000) * 0.05).astype(np.float32)
    mel = audio.log_mel(x)
    expected_frames = 1 + (320_000 - 1024) // 320
    assert mel.shape == (expected_frames, 64)
    assert np.isfinite(mel).all()


def test_log_mel_rejects_sub_window_input():
    with pytest.raises(ValueError):
        audio.log_mel(np.zeros(500, dtype=np.float32))


def test_log_mel_localizes_tone_energy():
    rate = 32_000
    t = np.arange(320_000) / rate
    low = audio.log_mel(np.sin(2 * np.pi * 200 * t).astype(np.float32))
    high = audio.log_mel(np.sin(2 * np.pi * 8000 * t).astype(np.float32))
    assert np.argmax(low.mean(axis=0)) < np.argmax(high.mean(axis=0))


def test_process_pipeline_end_to_end():
    x = np.sin(np.arange(44_100 * 2) * 0.01).astype(np.float32)  # 2 s
    fixed, mel = audio.process(x, 44_100)
    assert fixed.shape[0] == 320_000
    assert mel.shape[1] == 64
