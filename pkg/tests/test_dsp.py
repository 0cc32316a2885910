import numpy as np
import pytest
from scipy.signal import sawtooth

from vcflow.dsp import (
    AudioBuffer,
    F0Config,
    F0Contour,
    MelConfig,
    extract_f0,
    istft,
    mel_filterbank,
    mel_spectrogram,
    n_frames_for,
    quantize_f0,
    read_wav,
    resample_linear,
    shift_f0_semitones,
    stft,
    write_wav,
)

CFG = MelConfig()


def tone(freq, seconds=1.0, sr=22050, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr)


class TestStft:
    def test_zero_audio_gives_zero_magnitudes(self):
        audio = AudioBuffer(np.zeros(22050), 22050)
        assert np.all(np.abs(stft(audio, CFG)) == 0.0)

    def test_bin_center_sine_peaks_at_that_bin(self):
        k = 40
        freq = k * CFG.sample_rate / CFG.fft_size
        mag = np.abs(stft(tone(freq), CFG))
        interior = mag[4:-4]
        assert np.all(interior.argmax(axis=1) == k)

    def test_exact_multiple_of_hop_gives_len_over_hop_frames(self):
        audio = AudioBuffer(np.random.default_rng(0).normal(size=10 * CFG.hop_size), 22050)
        assert stft(audio, CFG).shape == (10, CFG.fft_size // 2 + 1)

    def test_too_short_input_raises(self):
        with pytest.raises(ValueError, match="input too short"):
            stft(AudioBuffer(np.zeros(CFG.fft_size - 1), 22050), CFG)

    def test_istft_round_trip_reconstructs_interior(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=22050) * 0.1
        audio = AudioBuffer(x, 22050)
        y = istft(stft(audio, CFG), CFG, x.size)
        lead = CFG.fft_size
        assert np.allclose(y[lead:-lead], x[lead:-lead], atol=1e-10)


class TestMelFilterbank:
    def test_row_sums_positive(self):
        fb = mel_filterbank(CFG)
        assert np.all(fb.sum(axis=1) > 0.0)

    def test_speech_config_shape(self):
        assert mel_filterbank(CFG).shape == (80, 513)

    def test_singing_config_shape(self):
        cfg = MelConfig(sample_rate=44100, fft_size=2048, hop_size=512, n_mels=128)
        assert mel_filterbank(cfg).shape == (128, 1025)

    def test_interior_bins_covered(self):
        fb = mel_filterbank(CFG)
        freqs = np.linspace(0, CFG.sample_rate / 2, CFG.fft_size // 2 + 1)
        inside = (freqs > CFG.fmin) & (freqs < CFG.fmax)
        assert np.all(fb.sum(axis=0)[inside] > 0.0)

    def test_degenerate_filterbank_raises(self):
        cfg = MelConfig(sample_rate=22050, fft_size=64, hop_size=64, n_mels=60)
        with pytest.raises(ValueError, match="degenerate filterbank"):
            mel_filterbank(cfg)


class TestMelSpectrogram:
    def test_silence_hits_log_floor_everywhere(self):
        mel = mel_spectrogram(AudioBuffer(np.zeros(22050), 22050), CFG)
        assert np.all(mel.values == np.log(CFG.log_floor))

    def test_one_second_frame_count(self):
        mel = mel_spectrogram(tone(440.0), CFG)
        assert mel.frames == 87 == n_frames_for(22050, CFG.hop_size)

    def test_deterministic(self):
        audio = tone(330.0)
        a = mel_spectrogram(audio, CFG).values
        b = mel_spectrogram(audio, CFG).values
        assert np.array_equal(a, b)

    def test_sample_rate_mismatch_raises(self):
        with pytest.raises(ValueError, match="resample required"):
            mel_spectrogram(tone(440.0, sr=16000), CFG)

    def test_translation_consistency_by_whole_hops(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=22050) * 0.1
        k = 3
        a = mel_spectrogram(AudioBuffer(x, 22050), CFG).values
        b = mel_spectrogram(AudioBuffer(x[k * CFG.hop_size :], 22050), CFG).values
        edge = 4  # frames whose window touches the reflect padding
        n = b.shape[0]
        assert np.allclose(a[k + edge : k + n - edge], b[edge : n - edge], atol=1e-9)


class TestExtractF0:
    F0CFG = F0Config()

    def test_sawtooth_220_tracked_within_3hz(self):
        sr = 22050
        t = np.arange(sr) / sr
        audio = AudioBuffer(0.4 * sawtooth(2 * np.pi * 220.0 * t), sr)
        contour = extract_f0(audio, self.F0CFG)
        interior = slice(4, len(contour) - 4)
        assert np.all(contour.voiced[interior])
        assert np.max(np.abs(contour.values[interior] - 220.0)) < 3.0

    def test_white_noise_mostly_unvoiced(self):
        rng = np.random.default_rng(3)
        audio = AudioBuffer(0.3 * rng.standard_normal(22050), 22050)
        contour = extract_f0(audio, self.F0CFG)
        assert (~contour.voiced).mean() >= 0.9

    def test_silence_all_unvoiced(self):
        contour = extract_f0(AudioBuffer(np.zeros(22050), 22050), self.F0CFG)
        assert not contour.voiced.any()

    def test_frame_grid_matches_mel(self):
        audio = tone(220.0, seconds=1.37)
        contour = extract_f0(audio, self.F0CFG)
        mel = mel_spectrogram(audio, CFG)
        assert len(contour) == mel.frames


class TestQuantizeF0:
    def make(self, values):
        values = np.asarray(values, dtype=float)
        return F0Contour(values, values > 0)

    def test_boundary_clipping(self):
        bins = quantize_f0(self.make([50.0, 1100.0, 2000.0]), 50.0, 1100.0).bins
        assert bins[0] == 1
        assert bins[1] == 256
        assert bins[2] == 256

    def test_geometric_midpoint_maps_to_bin_129(self):
        f = np.sqrt(50.0 * 1100.0)
        assert quantize_f0(self.make([f]), 50.0, 1100.0).bins[0] == 129

    def test_unvoiced_frame_is_bin_zero(self):
        contour = F0Contour(np.array([0.0, 200.0]), np.array([False, True]))
        assert quantize_f0(contour).bins[0] == 0

    def test_monotone_in_frequency(self):
        freqs = np.geomspace(40.0, 1500.0, 300)
        bins = quantize_f0(self.make(freqs)).bins
        assert np.all(np.diff(bins) >= 0)

    def test_idempotent_on_bin_centers(self):
        span = np.log(1100.0) - np.log(50.0)
        centers = 50.0 * np.exp((np.arange(256) + 0.5) / 256.0 * span)
        bins = quantize_f0(self.make(centers)).bins
        assert np.array_equal(bins, np.arange(1, 257))


class TestShiftF0:
    def contour(self):
        values = np.array([0.0, 200.0, 220.0, 0.0, 330.0])
        return F0Contour(values, values > 0)

    def test_plus_12_doubles_voiced_values(self):
        base = self.contour()
        shifted = shift_f0_semitones(base, 12)
        assert np.allclose(shifted.values[base.voiced], 2.0 * base.values[base.voiced])
        assert np.array_equal(shifted.voiced, base.voiced)

    def test_zero_shift_is_identity(self):
        base = self.contour()
        shifted = shift_f0_semitones(base, 0)
        assert np.array_equal(shifted.values, base.values)

    def test_plus_7_semitones_value(self):
        base = F0Contour(np.array([200.0]), np.array([True]))
        assert shift_f0_semitones(base, 7).values[0] == pytest.approx(299.661, abs=1e-3)

    def test_round_trip_within_1e9_relative(self):
        base = self.contour()
        back = shift_f0_semitones(shift_f0_semitones(base, 5), -5)
        rel = np.abs(back.values[base.voiced] / base.values[base.voiced] - 1.0)
        assert np.all(rel < 1e-9)


class TestWavIO:
    def test_round_trip_mono(self, tmp_path):
        audio = tone(440.0, seconds=0.25)
        path = tmp_path / "a.wav"
        write_wav(path, audio)
        back = read_wav(path)
        assert back.sample_rate == audio.sample_rate
        assert back.samples.size == audio.samples.size
        assert np.max(np.abs(back.samples - audio.samples)) <= 1.0 / 32768.0

    def test_stereo_averaged_to_mono(self, tmp_path):
        import wave

        left = np.full(100, 8192, dtype="<i2")
        right = np.full(100, 16384, dtype="<i2")
        interleaved = np.empty(200, dtype="<i2")
        interleaved[0::2] = left
        interleaved[1::2] = right
        path = tmp_path / "st.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(2)
            wf.setsampwidth(2)
            wf.setframerate(22050)
            wf.writeframes(interleaved.tobytes())
        audio = read_wav(path)
        assert audio.samples.size == 100
        assert np.allclose(audio.samples, (8192 + 16384) / 2 / 32768.0)

    def test_resample_linear_changes_rate_and_length(self):
        audio = tone(440.0, seconds=0.5)
        out = resample_linear(audio, 16000)
        assert out.sample_rate == 16000
        assert out.samples.size == pytest.approx(8000, abs=1)
