import numpy as np
import pytest
from scipy.io import wavfile

from ifasnet.audio import AudioFormatError, read_wav, write_wav


def test_multichannel_round_trip(tmp_path, rng):
    x = rng.uniform(-1, 1, (3, 500))
    write_wav(tmp_path / "a.wav", x, 16000)
    y, fs = read_wav(tmp_path / "a.wav", expect_fs=16000)
    assert fs == 16000 and y.shape == (3, 500)
    np.testing.assert_array_equal(y, x.astype(np.float32))


def test_int16_is_scaled_and_mono_is_2d(tmp_path):
    wavfile.write(tmp_path / "i.wav", 8000, np.array([-32768, 0, 16384], dtype=np.int16))
    y, fs = read_wav(tmp_path / "i.wav")
    np.testing.assert_array_equal(y, [[-1.0, 0.0, 0.5]])
    with pytest.raises(AudioFormatError):
        read_wav(tmp_path / "i.wav", expect_fs=16000)
