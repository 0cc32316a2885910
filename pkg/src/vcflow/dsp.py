"""Deterministic signal processing primitives.

STFT and log-mel analysis, YIN-style pitch tracking, exponential F0
quantization, semitone shifting, and 16-bit PCM WAV I/O. Everything here is
a pure function of its inputs; no module-level mutable state.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.signal import get_window

__all__ = [
    "AudioBuffer",
    "MelConfig",
    "MelSpectrogram",
    "F0Config",
    "F0Contour",
    "F0BinSequence",
    "stft",
    "istft",
    "mel_filterbank",
    "mel_spectrogram",
    "extract_f0",
    "quantize_f0",
    "shift_f0_semitones",
    "n_frames_for",
    "read_wav",
    "write_wav",
    "resample_linear",
]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform with its sample rate. Samples are float in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("AudioBuffer requires a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def duration(self) -> float:
        """Length in seconds."""
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    """Mel analysis settings (defaults match 22.05 kHz speech analysis)."""

    sample_rate: int = 22050
    fft_size: int = 1024
    hop_size: int = 256
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.fmax is None:
            object.__setattr__(self, "fmax", self.sample_rate / 2.0)
        if self.hop_size > self.fft_size:
            raise ValueError("hop_size must not exceed fft_size")
        if not (0.0 <= self.fmin < self.fmax <= self.sample_rate / 2.0):
            raise ValueError("require 0 <= fmin < fmax <= sample_rate/2")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0.0:
            raise ValueError("log_floor must be positive")


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-mel energies, shape (frames, n_mels)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError("MelSpectrogram values must be 2-D (frames, n_mels)")
        if not np.all(np.isfinite(values)):
            raise ValueError("MelSpectrogram values must be finite")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class F0Config:
    """Pitch search range, voicing threshold, and frame grid."""

    fmin: float = 50.0
    fmax: float = 1100.0
    threshold: float = 0.3
    window_size: int = 1024
    hop_size: int = 256

    def __post_init__(self):
        if not (0.0 < self.fmin < self.fmax):
            raise ValueError("require 0 < fmin < fmax")
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class F0Contour:
    """Per-frame fundamental frequency (Hz); unvoiced frames carry 0."""

    values: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "voiced", voiced)
        if values.shape != voiced.shape or values.ndim != 1:
            raise ValueError("values and voiced must be matching 1-D arrays")
        if np.any(values[~voiced] != 0.0):
            raise ValueError("unvoiced frames must carry value 0")
        if np.any(values[voiced] <= 0.0):
            raise ValueError("voiced frames must carry positive values")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class F0BinSequence:
    """Per-frame quantized pitch: 0 is the unvoiced symbol, 1..256 are bins."""

    bins: np.ndarray

    N_BINS: ClassVar[int] = 256

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        object.__setattr__(self, "bins", bins)
        if bins.ndim != 1:
            raise ValueError("bins must be 1-D")
        if bins.size and (bins.min() < 0 or bins.max() > self.N_BINS):
            raise ValueError("bins must lie in [0, 256]")

    def __len__(self) -> int:
        return self.bins.size


# ---------------------------------------------------------------------------
# STFT / mel analysis
# ---------------------------------------------------------------------------


def n_frames_for(n_samples: int, hop_size: int) -> int:
    """Frame count of the centered analysis grid: ceil(n_samples / hop)."""
    return -(-n_samples // hop_size)


def _pad_reflect(samples: np.ndarray, left: int, right: int) -> np.ndarray:
    """Reflect-pad, falling back to zeros where the signal is too short."""
    cap = samples.size - 1
    rl, rr = min(left, cap), min(right, cap)
    padded = np.pad(samples, (rl, rr), mode="reflect") if cap > 0 else samples
    return np.pad(padded, (left - rl, right - rr))


def _frame_centered(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Slice reflect-padded audio into frames centered at k*hop.

    Returns (n_frames, frame_len); frame k spans original sample indices
    [k*hop - frame_len//2, k*hop + frame_len - frame_len//2).
    """
    n_frames = n_frames_for(samples.size, hop)
    half = frame_len // 2
    padded = _pad_reflect(samples, half, frame_len)
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(audio: AudioBuffer, cfg: MelConfig) -> np.ndarray:
    """Short-time Fourier transform on the centered frame grid.

    Args:
        audio: Input signal; must be at least one FFT window long.
        cfg: Analysis settings (Hann window of cfg.fft_size, reflect padding).

    Returns:
        Complex spectrogram of shape (ceil(len/hop), fft_size//2 + 1).
    """
    if audio.samples.size < cfg.fft_size:
        raise ValueError("input too short: need at least one FFT window of audio")
    frames = _frame_centered(audio.samples, cfg.fft_size, cfg.hop_size)
    window = get_window("hann", cfg.fft_size, fftbins=True)
    return np.fft.rfft(frames * window, axis=1)


def istft(spec: np.ndarray, cfg: MelConfig, n_samples: int) -> np.ndarray:
    """Invert :func:`stft` by windowed overlap-add.

    Args:
        spec: Complex spectrogram of shape (frames, fft_size//2 + 1).
        cfg: The settings used for the forward transform.
        n_samples: Output length to trim to (frames*hop covers it).

    Returns:
        Float64 signal of length n_samples.
    """
    fft, hop = cfg.fft_size, cfg.hop_size
    window = get_window("hann", fft, fftbins=True)
    frames = np.fft.irfft(spec, n=fft, axis=1) * window

    half = fft // 2
    total = (spec.shape[0] - 1) * hop + fft
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window**2
    for k in range(spec.shape[0]):
        start = k * hop  # padded-signal coordinates; original starts at `half`
        out[start : start + fft] += frames[k]
        norm[start : start + fft] += wsq
    good = norm > 1e-10
    out[good] /= norm[good]
    out = out[half:]  # drop the analysis center padding
    if n_samples <= out.size:
        return out[:n_samples]
    return np.pad(out, (0, n_samples - out.size))


def _hz_to_mel(hz: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular mel filterbank matrix of shape (n_mels, fft_size//2 + 1).

    Raises:
        ValueError: if any filter covers no FFT bin ("degenerate filterbank").
    """
    n_freqs = cfg.fft_size // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_freqs)
    mel_pts = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)

    fb = np.zeros((cfg.n_mels, n_freqs))
    for m in range(cfg.n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)

    if np.any(fb.sum(axis=1) <= 0.0):
        raise ValueError("degenerate filterbank: n_mels too large for FFT resolution")
    return fb


def mel_spectrogram(audio: AudioBuffer, cfg: MelConfig) -> MelSpectrogram:
    """Log-mel spectrogram: log(max(filterbank @ |STFT|, log_floor)).

    Raises:
        ValueError: on sample-rate mismatch ("resample required").
    """
    if audio.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"resample required: audio at {audio.sample_rate} Hz, "
            f"config expects {cfg.sample_rate} Hz"
        )
    mag = np.abs(stft(audio, cfg))
    fb = mel_filterbank(cfg)
    energies = mag @ fb.T
    return MelSpectrogram(np.log(np.maximum(energies, cfg.log_floor)))


# ---------------------------------------------------------------------------
# Pitch
# ---------------------------------------------------------------------------


def extract_f0(audio: AudioBuffer, f0cfg: F0Config) -> F0Contour:
    """YIN-style pitch tracking on the same frame grid as mel analysis.

    Per frame, the cumulative-mean-normalized difference function is computed
    over lags covering [fmin, fmax]; the first dip below the voicing threshold
    (refined by parabolic interpolation) gives the period. Frames with no dip
    below the threshold, or with negligible energy, are unvoiced.
    """
    sr = audio.sample_rate
    w = f0cfg.window_size
    tau_min = max(2, int(sr / f0cfg.fmax))
    tau_max = min(int(math.ceil(sr / f0cfg.fmin)), w - 1)
    if tau_min >= tau_max:
        raise ValueError("pitch search range is empty for this sample rate")

    seg_len = w + tau_max
    segments = _frame_centered(audio.samples, seg_len, f0cfg.hop_size)
    n_frames = segments.shape[0]

    # Difference function d(tau) = e0 + e_tau - 2*c(tau), batched over frames.
    nfft = 1 << int(math.ceil(math.log2(seg_len + w)))
    spec_full = np.fft.rfft(segments, n=nfft, axis=1)
    spec_head = np.fft.rfft(segments[:, :w], n=nfft, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_head), n=nfft, axis=1)[:, : tau_max + 1]

    sq = segments**2
    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(sq, axis=1)], axis=1)
    e0 = csum[:, w] - csum[:, 0]
    taus = np.arange(tau_max + 1)
    e_tau = csum[:, taus + w] - csum[:, taus]
    d = e0[:, None] + e_tau - 2.0 * corr
    d = np.maximum(d, 0.0)

    # Cumulative mean normalization; d'(0) = 1.
    cum = np.cumsum(d[:, 1:], axis=1)
    cmndf = np.ones_like(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf[:, 1:] = d[:, 1:] * taus[1:] / np.where(cum > 0.0, cum, np.inf)

    values = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    silent = e0 < 1e-8
    for i in range(n_frames):
        if silent[i]:
            continue
        row = cmndf[i]
        below = np.nonzero(row[tau_min : tau_max + 1] < f0cfg.threshold)[0]
        if below.size == 0:
            continue
        tau = tau_min + below[0]
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
        # Parabolic refinement of the dip position.
        if 0 < tau < tau_max:
            a, b, c = row[tau - 1], row[tau], row[tau + 1]
            denom = a - 2.0 * b + c
            shift = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
            tau_ref = tau + float(np.clip(shift, -0.5, 0.5))
        else:
            tau_ref = float(tau)
        f0 = sr / tau_ref
        values[i] = float(np.clip(f0, f0cfg.fmin, f0cfg.fmax))
        voiced[i] = True
    return F0Contour(values, voiced)


def quantize_f0(f0: F0Contour, fq_min: float = 50.0, fq_max: float = 1100.0) -> F0BinSequence:
    """Exponential 256-bin quantization; bin 0 is reserved for unvoiced frames.

    Voiced f maps to 1 + floor(256 * (ln f - ln fq_min) / (ln fq_max - ln fq_min)),
    clipped to [1, 256]; out-of-range pitch is absorbed by the clipping.
    """
    if not (0.0 < fq_min < fq_max):
        raise ValueError("require 0 < fq_min < fq_max")
    bins = np.zeros(len(f0), dtype=np.int64)
    v = f0.voiced
    if np.any(v):
        span = math.log(fq_max) - math.log(fq_min)
        raw = np.floor(256.0 * (np.log(f0.values[v]) - math.log(fq_min)) / span)
        bins[v] = np.clip(raw.astype(np.int64) + 1, 1, 256)
    return F0BinSequence(bins)


def shift_f0_semitones(f0: F0Contour, n: float) -> F0Contour:
    """Scale voiced values by 2**(n/12); voicing flags are unchanged."""
    values = f0.values.copy()
    values[f0.voiced] *= 2.0 ** (n / 12.0)
    return F0Contour(values, f0.voiced.copy())


# ---------------------------------------------------------------------------
# WAV I/O and resampling
# ---------------------------------------------------------------------------


def read_wav(path) -> AudioBuffer:
    """Read a RIFF PCM-16 WAV file; multi-channel input is averaged to mono."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ValueError("only 16-bit PCM WAV is supported")
        n_channels = wf.getnchannels()
        sr = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return AudioBuffer(data, sr)


def write_wav(path, audio: AudioBuffer) -> None:
    """Write mono 16-bit PCM little-endian WAV; samples are clipped to [-1, 1]."""
    samples = np.clip(audio.samples, -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())


def resample_linear(audio: AudioBuffer, sample_rate: int) -> AudioBuffer:
    """Linear-interpolation resampling to a new rate."""
    if sample_rate == audio.sample_rate:
        return audio
    n_out = max(1, int(round(audio.samples.size * sample_rate / audio.sample_rate)))
    t_out = np.arange(n_out) * (audio.sample_rate / sample_rate)
    resampled = np.interp(t_out, np.arange(audio.samples.size), audio.samples)
    return AudioBuffer(resampled, sample_rate)
