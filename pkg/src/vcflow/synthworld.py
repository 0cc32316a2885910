"""Synthetic speaker/content world.

Desk-scale stand-ins for the external models a full system would use: a
deterministic utterance generator over a 32-symbol pseudo-phoneme vocabulary,
an oracle content encoder with a controllable timbre-leakage dial, an oracle
speaker encoder, and an idealized timbre shifter that re-renders an utterance
under a different speaker's spectral envelope.

Speaker timbre is a spectral-envelope factor (three log-Gaussian resonances);
linguistic content is the token sequence, realized as token-specific harmonic
amplitude patterns. The two factors are independent by construction, which is
what makes disentanglement claims property-testable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from .dsp import AudioBuffer, MelConfig, mel_filterbank, mel_spectrogram, write_wav

__all__ = [
    "VOCAB_SIZE",
    "ENV_BANDS",
    "SEMANTIC_DIM",
    "SPEAKER_EMBED_DIM",
    "SyntheticSpeaker",
    "ContentScript",
    "gen_utterance",
    "oracle_semantic_encode",
    "oracle_speaker_encode",
    "decode_token_sequence",
    "synthetic_shift",
    "make_random_speaker",
    "make_random_script",
    "CorpusParams",
    "build_corpus",
    "load_manifest",
    "script_from_record",
]

VOCAB_SIZE = 32
PATTERN_HARMONICS = 12
ENV_BANDS = 8
SEMANTIC_DIM = VOCAB_SIZE + ENV_BANDS
SPEAKER_EMBED_DIM = 16

# Fixed world constants (seeds for the global vocabulary and projections).
_PATTERN_SEED = 0x70C5
_SPEAKER_PROJ_SEED = 0x5B4D

# Template-matching decoder settings.
_F0_GRID_LO = 60.0
_F0_GRID_HI = 800.0
_F0_GRID_STEP = 1.02
_SMOOTH_BINS = 9
_MIN_FRAME_CORR = 0.5

# Semantic env-feature normalization (fixed, so features are comparable
# across utterances without per-utterance statistics).
_ENV_CENTER = -6.0
_ENV_SCALE = 3.0


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpeaker:
    """A voice: three spectral-envelope resonances plus a base pitch."""

    id: int
    resonance_freqs: tuple[float, float, float]
    resonance_bws: tuple[float, float, float]
    resonance_gains: tuple[float, float, float]
    base_pitch: float

    def __post_init__(self):
        if any(f < 200.0 for f in self.resonance_freqs):
            raise ValueError("resonance centers must be >= 200 Hz")
        if any(b <= 0.0 for b in self.resonance_bws):
            raise ValueError("resonance bandwidths must be positive")
        if not (80.0 <= self.base_pitch <= 400.0):
            raise ValueError("base_pitch must lie in [80, 400] Hz")


@dataclass(frozen=True)
class ContentScript:
    """Token sequence with per-token durations and per-frame pitch offsets.

    Offsets are in semitones relative to the rendering speaker's base pitch;
    an all-zero offset track is plain speech.
    """

    tokens: np.ndarray
    durations: np.ndarray
    pitch_offsets: np.ndarray

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        durations = np.asarray(self.durations, dtype=np.int64)
        offsets = np.asarray(self.pitch_offsets, dtype=np.float64)
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "pitch_offsets", offsets)
        if tokens.shape != durations.shape or tokens.ndim != 1 or tokens.size == 0:
            raise ValueError("tokens and durations must be matching non-empty 1-D arrays")
        if tokens.min() < 0 or tokens.max() >= VOCAB_SIZE:
            raise ValueError(f"tokens must lie in [0, {VOCAB_SIZE})")
        if durations.min() < 1:
            raise ValueError("durations must be >= 1 frame")
        if offsets.shape != (int(durations.sum()),):
            raise ValueError("pitch_offsets must have one entry per frame")

    @property
    def total_frames(self) -> int:
        return int(self.durations.sum())

    def frame_tokens(self) -> np.ndarray:
        """Per-frame token ids, shape (total_frames,)."""
        return np.repeat(self.tokens, self.durations)

    @classmethod
    def speech(cls, tokens, durations) -> "ContentScript":
        durations = np.asarray(durations, dtype=np.int64)
        return cls(np.asarray(tokens), durations, np.zeros(int(durations.sum())))


# ---------------------------------------------------------------------------
# World constants
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def _token_patterns() -> np.ndarray:
    """Harmonic amplitude pattern per vocabulary token, shape (32, 12).

    Log-uniform i.i.d. amplitudes give each token a distinctive high-contrast
    signature across the first 12 harmonics.
    """
    rng = np.random.default_rng(_PATTERN_SEED)
    return np.exp(rng.uniform(np.log(0.2), 0.0, size=(VOCAB_SIZE, PATTERN_HARMONICS)))


def _log_envelope(speaker: SyntheticSpeaker, freqs: np.ndarray) -> np.ndarray:
    """Speaker spectral envelope in log-amplitude, evaluated at freqs (Hz)."""
    out = np.zeros_like(freqs, dtype=np.float64)
    for c, b, g in zip(speaker.resonance_freqs, speaker.resonance_bws, speaker.resonance_gains):
        out += g * np.exp(-0.5 * ((freqs - c) / b) ** 2)
    return out


# ---------------------------------------------------------------------------
# Utterance generation
# ---------------------------------------------------------------------------


def gen_utterance(
    script: ContentScript,
    speaker: SyntheticSpeaker,
    seed: int,
    cfg: MelConfig = MelConfig(),
) -> AudioBuffer:
    """Render a script as a harmonic waveform shaped by the speaker envelope.

    Per frame, harmonic h carries amplitude pattern[token][h] * envelope(h*f0).
    Phase is continuous across frames; initial phases come from the seed, so
    the output is bit-deterministic in (script, speaker, seed, cfg).
    """
    sr, hop = cfg.sample_rate, cfg.hop_size
    n_frames = script.total_frames
    f0_frame = speaker.base_pitch * 2.0 ** (script.pitch_offsets / 12.0)

    harmonics = np.arange(1, PATTERN_HARMONICS + 1)
    freq_fh = f0_frame[:, None] * harmonics[None, :]  # (frames, 12)
    amps = _token_patterns()[script.frame_tokens()] * np.exp(
        _log_envelope(speaker, freq_fh)
    )
    amps[freq_fh > 0.45 * sr] = 0.0

    f0_sample = np.repeat(f0_frame, hop)
    base_phase = 2.0 * np.pi * np.cumsum(f0_sample) / sr
    phase0 = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, PATTERN_HARMONICS)

    amps_sample = np.repeat(amps, hop, axis=0)  # (samples, 12)
    x = np.sum(amps_sample * np.sin(base_phase[:, None] * harmonics + phase0), axis=1)
    peak = np.max(np.abs(x))
    if peak > 0.0:
        x *= 0.5 / peak
    return AudioBuffer(x, sr)


# ---------------------------------------------------------------------------
# Oracle content encoder (mel-domain template matching)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _hann_kernel_table(fft_size: int) -> tuple[np.ndarray, np.ndarray]:
    """|DFT of the Hann window| at fractional bin offsets 0..10, tabulated.

    Exact for steady sinusoids, so decoder templates share the analysis
    window's spectral footprint (main lobe and first sidelobes).
    """
    from scipy.signal import get_window

    window = get_window("hann", fft_size, fftbins=True)
    xs = np.linspace(0.0, 10.0, 1001)
    n = np.arange(fft_size)
    mags = np.abs(np.exp(-2j * np.pi * xs[:, None] * n[None, :] / fft_size) @ window)
    return xs, mags / mags[0]


def _hann_kernel_mag(offset_bins: np.ndarray, fft_size: int) -> np.ndarray:
    xs, mags = _hann_kernel_table(fft_size)
    return np.interp(np.abs(offset_bins), xs, mags, right=0.0)


@lru_cache(maxsize=4)
def _decoder_tables(cfg: MelConfig):
    """Precompute mel-domain templates for every (f0 grid point, token) pair."""
    n_grid = int(np.ceil(np.log(_F0_GRID_HI / _F0_GRID_LO) / np.log(_F0_GRID_STEP))) + 1
    grid = _F0_GRID_LO * _F0_GRID_STEP ** np.arange(n_grid)
    fb = mel_filterbank(cfg)
    n_bins = cfg.fft_size // 2 + 1
    df = cfg.sample_rate / cfg.fft_size
    bins = np.arange(n_bins)
    patterns = _token_patterns()

    feats = np.zeros((n_grid * VOCAB_SIZE, cfg.n_mels))
    for g, f0 in enumerate(grid):
        # Linear-spectrum footprint of each harmonic at this pitch.
        spread = np.zeros((PATTERN_HARMONICS, n_bins))
        for h in range(1, PATTERN_HARMONICS + 1):
            f = h * f0
            if f > 0.45 * cfg.sample_rate:
                break
            spread[h - 1] = _hann_kernel_mag(bins - f / df, cfg.fft_size)
        lin = patterns @ spread  # (32, n_bins)
        mel = np.log(np.maximum((0.25 * lin) @ fb.T, cfg.log_floor))
        feats[g * VOCAB_SIZE : (g + 1) * VOCAB_SIZE] = _contrast(mel)

    norms = np.linalg.norm(feats, axis=1)
    feats /= np.where(norms > 0, norms, 1.0)[:, None]
    token_of_row = np.tile(np.arange(VOCAB_SIZE), n_grid)
    return feats, token_of_row, grid


def _contrast(logmel: np.ndarray) -> np.ndarray:
    """Remove the smooth (envelope-dominated) component across mel bins."""
    return logmel - uniform_filter1d(logmel, size=_SMOOTH_BINS, axis=-1, mode="nearest")


def _decode_frames(logmel: np.ndarray, cfg: MelConfig):
    """Best-matching token (and match quality) per frame via joint search
    over the pitch grid and the vocabulary."""
    feats_t, token_of_row, _grid = _decoder_tables(cfg)
    feats = _contrast(logmel)
    norms = np.linalg.norm(feats, axis=1)
    feats = feats / np.where(norms > 1e-12, norms, 1.0)[:, None]
    scores = feats @ feats_t.T  # (frames, grid*vocab)
    best = scores.argmax(axis=1)
    corr = scores[np.arange(scores.shape[0]), best]
    corr[norms <= 1e-12] = 0.0
    return token_of_row[best], corr


def _env_bands(logmel: np.ndarray, n_mels: int) -> np.ndarray:
    """Coarse spectral-envelope summary: ENV_BANDS band means of log-mel."""
    edges = np.linspace(0, n_mels, ENV_BANDS + 1).astype(int)
    return np.stack(
        [logmel[:, a:b].mean(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1
    )


def oracle_semantic_encode(
    audio: AudioBuffer, leakage: float, cfg: MelConfig = MelConfig()
) -> np.ndarray:
    """Content features with a controllable residual-timbre dial.

    Each mel-aligned frame yields a one-hot token identity (decoded by
    template matching) concatenated with ``leakage`` times a coarse spectral
    envelope summary. At leakage 0 the features are exactly speaker-invariant;
    at leakage 1 they carry enough envelope to identify the speaker.

    Raises:
        ValueError: when most frames fail to match any template ("oracle
            requires synthetic input").
    """
    if not (0.0 <= leakage <= 1.0):
        raise ValueError("leakage must lie in [0, 1]")
    logmel = mel_spectrogram(audio, cfg).values
    tokens, corr = _decode_frames(logmel, cfg)
    if np.mean(corr >= _MIN_FRAME_CORR) < 0.5:
        raise ValueError("oracle requires synthetic input: audio is not decodable")
    onehot = np.zeros((logmel.shape[0], VOCAB_SIZE))
    onehot[np.arange(logmel.shape[0]), tokens] = 1.0
    env = (_env_bands(logmel, cfg.n_mels) - _ENV_CENTER) / _ENV_SCALE
    return np.concatenate([onehot, leakage * env], axis=1)


def decode_token_sequence(audio: AudioBuffer, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Token sequence read back from audio: per-frame decode, median-smoothed,
    then collapsed over consecutive repeats. The leakage-0 content oracle."""
    logmel = mel_spectrogram(audio, cfg).values
    tokens, corr = _decode_frames(logmel, cfg)
    if np.mean(corr >= _MIN_FRAME_CORR) < 0.5:
        raise ValueError("oracle requires synthetic input: audio is not decodable")
    smoothed = _median_smooth(tokens, 5)
    keep = np.ones(smoothed.size, dtype=bool)
    keep[1:] = smoothed[1:] != smoothed[:-1]
    return smoothed[keep]


def _median_smooth(labels: np.ndarray, width: int) -> np.ndarray:
    half = width // 2
    padded = np.pad(labels, (half, half), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, width)
    return np.median(windows, axis=1).astype(labels.dtype)


# ---------------------------------------------------------------------------
# Oracle speaker encoder
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _speaker_projection(n_mels: int) -> np.ndarray:
    rng = np.random.default_rng(_SPEAKER_PROJ_SEED)
    return rng.standard_normal((SPEAKER_EMBED_DIM, n_mels)) / np.sqrt(n_mels)


def oracle_speaker_encode(audio: AudioBuffer, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Unit-norm timbre embedding from the long-term average log-spectrum.

    Mel-band smoothing suppresses pitch-comb structure so the embedding is
    dominated by the spectral envelope; mean-centering removes loudness.
    """
    logmel = mel_spectrogram(audio, cfg).values
    avg = logmel.mean(axis=0)
    smooth = uniform_filter1d(avg, size=7, mode="nearest")
    smooth = smooth - smooth.mean()
    emb = _speaker_projection(cfg.n_mels) @ smooth
    norm = np.linalg.norm(emb)
    if norm < 1e-12:
        # Degenerate (silent) input: fall back to a fixed direction.
        emb = np.zeros(SPEAKER_EMBED_DIM)
        emb[0] = 1.0
        return emb
    return emb / norm


# ---------------------------------------------------------------------------
# Timbre shifter
# ---------------------------------------------------------------------------


def synthetic_shift(
    script: ContentScript,
    source: SyntheticSpeaker,
    target: SyntheticSpeaker,
    seed: int,
    cfg: MelConfig = MelConfig(),
    envelope_error: float = 0.0,
) -> AudioBuffer:
    """Idealized timbre shifter: re-render the script under the target
    speaker's envelope, keeping the source's pitch track (prosody).

    ``envelope_error`` > 0 degrades the shifter by perturbing the target
    envelope (seeded), for shifter-quality ablations.
    """
    env_speaker = target
    if envelope_error > 0.0:
        rng = np.random.default_rng((seed, target.id, 0xE44))
        env_speaker = replace(
            target,
            resonance_freqs=tuple(
                max(200.0, f * (1.0 + envelope_error * rng.normal(scale=0.2)))
                for f in target.resonance_freqs
            ),
            resonance_gains=tuple(
                g + envelope_error * rng.normal() for g in target.resonance_gains
            ),
        )
    hybrid = replace(env_speaker, id=target.id, base_pitch=source.base_pitch)
    return gen_utterance(script, hybrid, seed, cfg)


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusParams:
    """Synthetic corpus layout."""

    n_train_speakers: int = 64
    n_heldout_speakers: int = 8
    utterances_per_speaker: int = 6
    min_seconds: float = 2.0
    max_seconds: float = 6.0
    singing: bool = False
    seed: int = 1234

    def __post_init__(self):
        if self.n_train_speakers < 1 or self.n_heldout_speakers < 0:
            raise ValueError("speaker counts must be positive")
        if not (0.0 < self.min_seconds <= self.max_seconds):
            raise ValueError("require 0 < min_seconds <= max_seconds")
        if self.utterances_per_speaker < 1:
            raise ValueError("utterances_per_speaker must be >= 1")


def make_random_speaker(
    speaker_id: int, rng: np.random.Generator, gender: str | None = None
) -> tuple[SyntheticSpeaker, str]:
    """Draw a speaker; male base pitch 100-150 Hz, female 200-300 Hz."""
    if gender is None:
        gender = "male" if rng.random() < 0.5 else "female"
    base = rng.uniform(100.0, 150.0) if gender == "male" else rng.uniform(200.0, 300.0)
    freqs = np.sort(np.exp(rng.uniform(np.log(300.0), np.log(3800.0), 3)))
    speaker = SyntheticSpeaker(
        id=speaker_id,
        resonance_freqs=tuple(freqs),
        resonance_bws=tuple(rng.uniform(300.0, 900.0, 3)),
        resonance_gains=tuple(rng.uniform(-2.0, 2.0, 3)),
        base_pitch=float(base),
    )
    return speaker, gender


_SCALE_STEPS = np.array([-7, -5, -4, -2, 0, 2, 4, 5, 7], dtype=float)


def make_random_script(
    rng: np.random.Generator,
    min_frames: int,
    max_frames: int,
    singing: bool = False,
) -> ContentScript:
    """Random script: no immediate token repeats (so the decoded sequence
    collapses back to it); singing mode adds a piecewise-constant melody."""
    tokens: list[int] = []
    durations: list[int] = []
    total = 0
    target = int(rng.integers(min_frames, max_frames + 1))
    while total < target:
        tok = int(rng.integers(VOCAB_SIZE))
        while tokens and tok == tokens[-1]:
            tok = int(rng.integers(VOCAB_SIZE))
        dur = int(rng.integers(8, 31))
        tokens.append(tok)
        durations.append(dur)
        total += dur

    offsets = np.zeros(total)
    if singing:
        pos = 0
        while pos < total:
            note_len = int(rng.integers(20, 61))
            offsets[pos : pos + note_len] = rng.choice(_SCALE_STEPS)
            pos += note_len
    return ContentScript(np.array(tokens), np.array(durations), offsets)


def build_corpus(params: CorpusParams, out_dir, cfg: MelConfig = MelConfig()) -> dict:
    """Generate speakers, scripts and WAV files; return the manifest dict.

    The manifest has one record per utterance {path, speaker_id, token_ids,
    durations, pitch_notes, seed} plus the speaker table and a config echo.
    """
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(params.seed)

    speakers = []
    n_total = params.n_train_speakers + params.n_heldout_speakers
    for sid in range(n_total):
        gender = "male" if sid % 2 == 0 else "female"
        speaker, gender = make_random_speaker(sid, rng, gender)
        speakers.append(
            {
                "id": sid,
                "resonance_freqs": list(speaker.resonance_freqs),
                "resonance_bws": list(speaker.resonance_bws),
                "resonance_gains": list(speaker.resonance_gains),
                "base_pitch": speaker.base_pitch,
                "gender": gender,
                "split": "train" if sid < params.n_train_speakers else "heldout",
            }
        )

    frames_per_s = cfg.sample_rate / cfg.hop_size
    min_frames = int(params.min_seconds * frames_per_s)
    max_frames = int(params.max_seconds * frames_per_s)

    utterances = []
    for rec in speakers:
        speaker = speaker_from_record(rec)
        for u in range(params.utterances_per_speaker):
            script = make_random_script(rng, min_frames, max_frames, params.singing)
            seed = int(rng.integers(2**31))
            audio = gen_utterance(script, speaker, seed, cfg)
            name = f"spk{rec['id']:03d}_utt{u:02d}.wav"
            write_wav(wav_dir / name, audio)
            utterances.append(
                {
                    "path": f"wav/{name}",
                    "speaker_id": rec["id"],
                    "token_ids": script.tokens.tolist(),
                    "durations": script.durations.tolist(),
                    "pitch_notes": _offsets_to_notes(script.pitch_offsets),
                    "seed": seed,
                }
            )

    manifest = {
        "corpus": {
            "n_train_speakers": params.n_train_speakers,
            "n_heldout_speakers": params.n_heldout_speakers,
            "utterances_per_speaker": params.utterances_per_speaker,
            "min_seconds": params.min_seconds,
            "max_seconds": params.max_seconds,
            "singing": params.singing,
            "seed": params.seed,
        },
        "mel": {
            "sample_rate": cfg.sample_rate,
            "fft_size": cfg.fft_size,
            "hop_size": cfg.hop_size,
            "n_mels": cfg.n_mels,
        },
        "speakers": speakers,
        "utterances": utterances,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def _offsets_to_notes(offsets: np.ndarray) -> list[list[float]]:
    """Run-length encode per-frame semitone offsets as [offset, n_frames]."""
    if offsets.size == 0:
        return []
    notes = []
    start = 0
    for i in range(1, offsets.size + 1):
        if i == offsets.size or offsets[i] != offsets[start]:
            notes.append([float(offsets[start]), int(i - start)])
            start = i
    return notes


def _notes_to_offsets(notes: list) -> np.ndarray:
    if not notes:
        return np.zeros(0)
    return np.concatenate([np.full(int(n), float(off)) for off, n in notes])


def speaker_from_record(rec: dict) -> SyntheticSpeaker:
    return SyntheticSpeaker(
        id=int(rec["id"]),
        resonance_freqs=tuple(rec["resonance_freqs"]),
        resonance_bws=tuple(rec["resonance_bws"]),
        resonance_gains=tuple(rec["resonance_gains"]),
        base_pitch=float(rec["base_pitch"]),
    )


def script_from_record(rec: dict) -> ContentScript:
    durations = np.asarray(rec["durations"], dtype=np.int64)
    offsets = _notes_to_offsets(rec.get("pitch_notes", []))
    total = int(durations.sum())
    if offsets.size == 0:
        offsets = np.zeros(total)
    elif offsets.size != total:
        raise ValueError("pitch_notes do not cover the utterance frames")
    return ContentScript(np.asarray(rec["token_ids"]), durations, offsets)


def load_manifest(path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    for key in ("speakers", "utterances", "mel", "corpus"):
        if key not in manifest:
            raise ValueError(f"manifest missing section '{key}'")
    return manifest


def mel_config_from_manifest(manifest: dict) -> MelConfig:
    m = manifest["mel"]
    return MelConfig(
        sample_rate=int(m["sample_rate"]),
        fft_size=int(m["fft_size"]),
        hop_size=int(m["hop_size"]),
        n_mels=int(m["n_mels"]),
    )
