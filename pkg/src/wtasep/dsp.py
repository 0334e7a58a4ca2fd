"""Time-frequency frontend: STFT, overlap-add resynthesis, magnitude and mel features.

Frames start at sample 0 with no centering or zero padding, use a periodic
Hann analysis window, and keep the non-redundant half spectrum.  Resynthesis
applies the window again and normalizes by the accumulated squared window,
which reconstructs every sample whose window-energy sum is nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio samples (nominal range [-1, 1]) at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio must be mono (1-D samples)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 1024
    hop: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.window_len <= 0 or self.window_len % 2 != 0:
            raise ValueError(f"window length must be positive and even, got {self.window_len}")
        if not 0 < self.hop <= self.window_len:
            raise ValueError(f"need 0 < hop <= window length, got hop={self.hop}")
        if self.window != "hann":
            raise ValueError(f"unsupported window kind {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    def frame_count(self, n_samples: int) -> int:
        """Closed-form frame count for an input of n_samples."""
        if n_samples < self.window_len:
            raise ValueError("insufficient samples: input shorter than one window")
        return 1 + (n_samples - self.window_len) // self.hop


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """T x F complex Fourier coefficients plus the analysis config that made them."""

    frames: np.ndarray  # (T, F) complex128
    config: StftConfig
    sample_rate: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2 or frames.shape[1] != self.config.n_bins:
            raise ValueError(
                f"expected (T, {self.config.n_bins}) coefficients, got shape {frames.shape}"
            )
        if not np.all(np.isfinite(frames)):
            raise ValueError("spectrogram contains non-finite coefficients")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


STFT_MAGNITUDE = "stft-magnitude"
MEL = "mel"


@dataclass(frozen=True)
class FeatureMatrix:
    """Nonnegative T x D feature rows; D equals the bin count for magnitudes, fewer for mel."""

    rows: np.ndarray
    kind: str

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("feature rows must be 2-D")
        if not np.all(np.isfinite(rows)):
            raise ValueError("features contain non-finite values")
        if rows.size and rows.min() < 0:
            raise ValueError("features must be nonnegative")
        if self.kind not in (STFT_MAGNITUDE, MEL):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "rows", rows)

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def stft(audio: AudioBuffer, config: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform, one windowed DFT per hop."""
    x = audio.samples
    n_frames = config.frame_count(len(x))  # raises on insufficient samples
    frames = np.lib.stride_tricks.sliding_window_view(x, config.window_len)[:: config.hop]
    frames = frames[:n_frames]
    win = _hann_periodic(config.window_len)
    spec = np.fft.rfft(frames * win, axis=1)
    return ComplexSpectrogram(frames=spec, config=config, sample_rate=audio.sample_rate)


def istft(spec: ComplexSpectrogram) -> AudioBuffer:
    """Weighted overlap-add resynthesis, normalized by the accumulated squared window.

    istft(stft(x)) reproduces x exactly (up to float rounding) on every
    sample where the squared-window sum is nonzero; with a periodic Hann
    window that is everything except sample 0 and past the last frame.
    """
    cfg = spec.config
    win = _hann_periodic(cfg.window_len)
    t = spec.n_frames
    out_len = cfg.window_len + (t - 1) * cfg.hop
    out = np.zeros(out_len)
    norm = np.zeros(out_len)
    segs = np.fft.irfft(spec.frames, n=cfg.window_len, axis=1) * win
    for i in range(t):
        start = i * cfg.hop
        out[start : start + cfg.window_len] += segs[i]
        norm[start : start + cfg.window_len] += win * win
    good = norm > 1e-10
    out[good] /= norm[good]
    out[~good] = 0.0
    return AudioBuffer(samples=out, sample_rate=spec.sample_rate)


def magnitude(spec: ComplexSpectrogram) -> FeatureMatrix:
    """Element-wise modulus of the spectrogram."""
    return FeatureMatrix(rows=np.abs(spec.frames), kind=STFT_MAGNITUDE)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular filters (n_bands x F) on the HTK mel scale, ordered by center frequency."""

    weights: np.ndarray
    f_min: float
    f_max: float

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ValueError("filterbank weights must be 2-D")
        if weights.size and weights.min() < 0:
            raise ValueError("filterbank weights must be nonnegative")
        if np.any(weights.sum(axis=1) <= 0):
            raise ValueError("every filter row needs at least one positive weight")
        object.__setattr__(self, "weights", weights)

    @property
    def n_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_bands: int,
    window_len: int,
    sample_rate: int,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> MelFilterbank:
    """Build n_bands triangular filters over the rfft bins of window_len."""
    if n_bands < 1:
        raise ValueError("need at least one mel band")
    if f_max is None:
        f_max = sample_rate / 2.0
    if not 0.0 <= f_min < f_max <= sample_rate / 2.0:
        raise ValueError(f"bad mel range [{f_min}, {f_max}] for sample rate {sample_rate}")
    n_bins = window_len // 2 + 1
    bin_freqs = np.arange(n_bins) * (sample_rate / window_len)
    mel_pts = np.linspace(_hz_to_mel(f_min), _hz_to_mel(f_max), n_bands + 2)
    hz_pts = _mel_to_hz(mel_pts)
    weights = np.zeros((n_bands, n_bins))
    for band in range(n_bands):
        lo, center, hi = hz_pts[band], hz_pts[band + 1], hz_pts[band + 2]
        up = (bin_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - center, 1e-12)
        weights[band] = np.clip(np.minimum(up, down), 0.0, None)
    return MelFilterbank(weights=weights, f_min=float(f_min), f_max=float(f_max))


def to_mel(mag: FeatureMatrix, fb: MelFilterbank) -> FeatureMatrix:
    """Project magnitude rows through the filterbank."""
    if mag.kind != STFT_MAGNITUDE:
        raise ValueError(f"mel projection expects {STFT_MAGNITUDE} input, got {mag.kind!r}")
    if mag.dim != fb.n_bins:
        raise ValueError(f"filterbank covers {fb.n_bins} bins but features have {mag.dim}")
    return FeatureMatrix(rows=mag.rows @ fb.weights.T, kind=MEL)


def read_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM or 32-bit float WAV.  No resampling is performed."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV files are supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    return AudioBuffer(samples=samples, sample_rate=int(rate))


def write_wav(path, audio: AudioBuffer, fmt: str = "float32"):
    """Write mono WAV as 32-bit float (default) or 16-bit PCM."""
    if fmt == "float32":
        wavfile.write(path, audio.sample_rate, audio.samples.astype(np.float32))
    elif fmt == "int16":
        clipped = np.clip(audio.samples, -1.0, 1.0)
        wavfile.write(path, audio.sample_rate, np.round(clipped * 32767.0).astype(np.int16))
    else:
        raise ValueError(f"unsupported WAV output format {fmt!r}")
