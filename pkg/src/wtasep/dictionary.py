"""Training dictionary: mixture features paired with their ideal binary masks.

Built from clean/noise audio pairs mixed at a target SNR.  Persisted in a
little-endian sectioned binary format (magic ``WTASEP01``) with a CRC32 per
section so corruption and truncation are told apart and reported as
distinct error kinds.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import hashing
from .dsp import (
    MEL,
    STFT_MAGNITUDE,
    AudioBuffer,
    ComplexSpectrogram,
    FeatureMatrix,
    MelFilterbank,
    StftConfig,
    magnitude,
    mel_filterbank,
    stft,
    to_mel,
)

MAGIC = b"WTASEP"
VERSION = b"01"
_SECTION_ORDER = (b"META", b"FEAT", b"IBMS", b"CODE")
PACKED_LAYOUT_VERSION = 1


class DictionaryFormatError(Exception):
    """Base class for dictionary file parsing failures."""


class BadMagicError(DictionaryFormatError):
    pass


class UnsupportedVersionError(DictionaryFormatError):
    pass


class TruncatedSectionError(DictionaryFormatError):
    pass


class ChecksumError(DictionaryFormatError):
    pass


@dataclass(frozen=True)
class MixSpec:
    """A clean/noise pair and the SNR (dB) at which to mix them."""

    speech: AudioBuffer
    noise: AudioBuffer
    snr_db: float = 0.0

    def __post_init__(self):
        if self.speech.sample_rate != self.noise.sample_rate:
            raise ValueError(
                f"sample rate mismatch: speech {self.speech.sample_rate} Hz "
                f"vs noise {self.noise.sample_rate} Hz"
            )
        if not np.any(self.speech.samples):
            raise ValueError("speech signal has zero energy")
        if not np.any(self.noise.samples):
            raise ValueError("noise signal has zero energy")


def mix_at_snr(spec: MixSpec) -> tuple[AudioBuffer, AudioBuffer]:
    """Scale the noise so speech-to-noise energy hits the requested SNR exactly.

    The noise must be at least as long as the speech; it is taken from its
    start and truncated to the speech length.  Returns (mixture,
    scaled_noise), both the length of the speech.
    """
    s = spec.speech.samples
    if len(spec.noise) < len(s):
        raise ValueError("noise shorter than speech (looping not supported)")
    n = spec.noise.samples[: len(s)]
    s_energy = float(np.dot(s, s))
    n_energy = float(np.dot(n, n))
    if s_energy == 0.0 or n_energy == 0.0:
        raise ValueError("zero-energy input after truncation")
    gain = np.sqrt(s_energy / n_energy) * 10.0 ** (-spec.snr_db / 20.0)
    scaled = gain * n
    rate = spec.speech.sample_rate
    return AudioBuffer(s + scaled, rate), AudioBuffer(scaled, rate)


def _check_same_shape(a: ComplexSpectrogram, b: ComplexSpectrogram):
    if a.frames.shape != b.frames.shape:
        raise ValueError(f"spectrogram shape mismatch: {a.frames.shape} vs {b.frames.shape}")


def compute_ibm(speech_spec: ComplexSpectrogram, noise_spec: ComplexSpectrogram) -> np.ndarray:
    """Ideal binary mask: 1 where the speech magnitude strictly dominates."""
    _check_same_shape(speech_spec, noise_spec)
    return (np.abs(speech_spec.frames) > np.abs(noise_spec.frames)).astype(np.uint8)


def compute_irm(speech_spec: ComplexSpectrogram, noise_spec: ComplexSpectrogram) -> np.ndarray:
    """Ideal ratio mask |s| / (|s| + |n|), with empty bins (0/0) defined as 0."""
    _check_same_shape(speech_spec, noise_spec)
    s = np.abs(speech_spec.frames)
    n = np.abs(noise_spec.frames)
    denom = s + n
    out = np.zeros_like(denom)
    np.divide(s, denom, out=out, where=denom > 0)
    return out


@dataclass(frozen=True)
class SeparationDictionary:
    """Mixture feature rows aligned with their binary mask rows, plus optional hash codes."""

    features: FeatureMatrix
    ibm: np.ndarray  # (T, F) uint8
    config: StftConfig
    sample_rate: int
    mel_bands: int | None = None
    mel_fmin: float | None = None
    mel_fmax: float | None = None
    codes: hashing.HashCodes | None = None
    hash_seed: int | None = None

    def __post_init__(self):
        ibm = np.asarray(self.ibm, dtype=np.uint8)
        if ibm.ndim != 2 or ibm.shape != (self.features.n_frames, self.config.n_bins):
            raise ValueError(
                f"mask matrix shape {ibm.shape} inconsistent with "
                f"{self.features.n_frames} frames x {self.config.n_bins} bins"
            )
        if ibm.size and ibm.max() > 1:
            raise ValueError("mask entries must be 0 or 1")
        if self.features.kind == MEL:
            if self.mel_bands is None or self.features.dim != self.mel_bands:
                raise ValueError("mel feature dimension inconsistent with mel band count")
        elif self.features.dim != self.config.n_bins:
            raise ValueError("magnitude feature dimension must equal the bin count")
        if self.codes is not None:
            if self.codes.n != self.features.n_frames:
                raise ValueError("hash code rows must match feature rows")
            if self.hash_seed is None:
                raise ValueError("codes present but hash seed missing")
        ibm.flags.writeable = False
        object.__setattr__(self, "ibm", ibm)

    @property
    def n_frames(self) -> int:
        return self.features.n_frames

    @property
    def feature_dim(self) -> int:
        return self.features.dim

    @property
    def n_bins(self) -> int:
        return self.config.n_bins

    def filterbank(self) -> MelFilterbank | None:
        """Rebuild the mel filterbank used at build time (None for magnitude features)."""
        if self.features.kind != MEL:
            return None
        return mel_filterbank(
            self.mel_bands, self.config.window_len, self.sample_rate, self.mel_fmin, self.mel_fmax
        )

    def project(self, mag: FeatureMatrix) -> FeatureMatrix:
        """Map query magnitude rows into this dictionary's feature space."""
        fb = self.filterbank()
        return mag if fb is None else to_mel(mag, fb)


def with_codes(d: SeparationDictionary, seed: int, l: int, m: int) -> SeparationDictionary:
    """Attach winner-take-all codes for every feature row."""
    table = hashing.generate_permutations(seed, l, m, d.feature_dim)
    codes = hashing.hash_matrix(d.features, table)
    return replace(d, codes=codes, hash_seed=seed)


def build_dictionary(
    pairs: list[MixSpec],
    config: StftConfig = StftConfig(),
    feature_kind: str = STFT_MAGNITUDE,
    mel_bands: int = 40,
    mel_fmin: float = 0.0,
    mel_fmax: float | None = None,
) -> SeparationDictionary:
    """Mix each pair, take mixture features and speech-vs-noise masks, stack in order.

    Features are quantized to float32 at build time; that is the stored
    precision and it keeps save/load round trips bit-identical.
    """
    if not pairs:
        raise ValueError("no training pairs given")
    rate = pairs[0].speech.sample_rate
    if any(p.speech.sample_rate != rate for p in pairs):
        raise ValueError("training pairs use inconsistent sample rates")
    fb = None
    if feature_kind == MEL:
        if mel_fmax is None:
            mel_fmax = rate / 2.0
        fb = mel_filterbank(mel_bands, config.window_len, rate, mel_fmin, mel_fmax)
    elif feature_kind != STFT_MAGNITUDE:
        raise ValueError(f"unknown feature kind {feature_kind!r}")

    feature_blocks = []
    ibm_blocks = []
    for pair in pairs:
        mixture, scaled_noise = mix_at_snr(pair)
        mix_spec = stft(mixture, config)
        speech_spec = stft(pair.speech, config)
        noise_spec = stft(scaled_noise, config)
        feats = magnitude(mix_spec)
        if fb is not None:
            feats = to_mel(feats, fb)
        feature_blocks.append(feats.rows.astype(np.float32).astype(np.float64))
        ibm_blocks.append(compute_ibm(speech_spec, noise_spec))

    features = FeatureMatrix(rows=np.vstack(feature_blocks), kind=feature_kind)
    return SeparationDictionary(
        features=features,
        ibm=np.vstack(ibm_blocks),
        config=config,
        sample_rate=rate,
        mel_bands=mel_bands if feature_kind == MEL else None,
        mel_fmin=mel_fmin if feature_kind == MEL else None,
        mel_fmax=mel_fmax if feature_kind == MEL else None,
    )


def storage_report(d: SeparationDictionary) -> dict:
    """Per-frame byte costs of the float features vs the packed codes."""
    if d.codes is None:
        raise ValueError("dictionary has no hash codes")
    packed_bytes = d.codes.words_per_row * 8
    float_bytes = d.feature_dim * 4
    stft_float_bytes = d.n_bins * 4
    return {
        "packed_bytes_per_frame": packed_bytes,
        "float_bytes_per_frame": float_bytes,
        "stft_float_bytes_per_frame": stft_float_bytes,
        "compression_ratio": float_bytes / packed_bytes,
        "bits_per_code": d.codes.bits_per_code,
    }


def _meta_payload(d: SeparationDictionary) -> bytes:
    meta = {
        "sample_rate": d.sample_rate,
        "window_len": d.config.window_len,
        "hop": d.config.hop,
        "window": d.config.window,
        "feature_kind": d.features.kind,
        "n_frames": d.n_frames,
        "feature_dim": d.feature_dim,
        "n_bins": d.n_bins,
        "mel": None
        if d.mel_bands is None
        else {"bands": d.mel_bands, "f_min": d.mel_fmin, "f_max": d.mel_fmax},
        "hash": None
        if d.codes is None
        else {
            "l": d.codes.l,
            "m": d.codes.m,
            "d": d.feature_dim,
            "seed": d.hash_seed,
            "bits_per_code": d.codes.bits_per_code,
            "layout_version": PACKED_LAYOUT_VERSION,
        },
    }
    return json.dumps(meta, sort_keys=True).encode("utf-8")


def _write_section(fh, tag: bytes, payload: bytes):
    fh.write(tag)
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)
    fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def save(d: SeparationDictionary, path):
    """Write the sectioned binary dictionary file."""
    with open(path, "wb") as fh:
        fh.write(MAGIC + VERSION)
        _write_section(fh, b"META", _meta_payload(d))
        feat32 = d.features.rows.astype("<f4")
        _write_section(fh, b"FEAT", feat32.tobytes())
        _write_section(fh, b"IBMS", np.packbits(d.ibm, axis=1).tobytes())
        if d.codes is not None:
            _write_section(fh, b"CODE", d.codes.packed.astype("<u8").tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedSectionError(f"truncated section: {what}")
    return data


def _read_section(fh, expected_tag: bytes) -> bytes:
    tag = _read_exact(fh, 4, f"{expected_tag.decode()} tag")
    if tag != expected_tag:
        raise DictionaryFormatError(
            f"expected section {expected_tag.decode()!r}, found {tag!r}"
        )
    (length,) = struct.unpack("<Q", _read_exact(fh, 8, f"{tag.decode()} length"))
    payload = _read_exact(fh, length, f"{tag.decode()} payload")
    (crc,) = struct.unpack("<I", _read_exact(fh, 4, f"{tag.decode()} checksum"))
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise ChecksumError(f"checksum failure in {tag.decode()} section")
    return payload


def load(path) -> SeparationDictionary:
    """Read and validate a dictionary file; returns nothing partial on failure."""
    with open(path, "rb") as fh:
        head = _read_exact(fh, 8, "file header")
        if head[:6] != MAGIC:
            raise BadMagicError(f"bad magic {head[:6]!r}")
        if head[6:] != VERSION:
            raise UnsupportedVersionError(f"unsupported format version {head[6:]!r}")

        meta = json.loads(_read_section(fh, b"META").decode("utf-8"))
        t, d_dim, f = meta["n_frames"], meta["feature_dim"], meta["n_bins"]
        config = StftConfig(meta["window_len"], meta["hop"], meta["window"])

        feat_payload = _read_section(fh, b"FEAT")
        if len(feat_payload) != t * d_dim * 4:
            raise DictionaryFormatError("feature section size inconsistent with meta")
        rows = np.frombuffer(feat_payload, dtype="<f4").reshape(t, d_dim).astype(np.float64)

        ibm_payload = _read_section(fh, b"IBMS")
        row_bytes = -(-f // 8)
        if len(ibm_payload) != t * row_bytes:
            raise DictionaryFormatError("mask section size inconsistent with meta")
        packed_ibm = np.frombuffer(ibm_payload, dtype=np.uint8).reshape(t, row_bytes)
        ibm = np.unpackbits(packed_ibm, axis=1, count=f)

        codes = None
        hash_seed = None
        if meta["hash"] is not None:
            h = meta["hash"]
            if h["layout_version"] != PACKED_LAYOUT_VERSION:
                raise UnsupportedVersionError(
                    f"unsupported packed-code layout version {h['layout_version']}"
                )
            code_payload = _read_section(fh, b"CODE")
            per_word = 64 // hashing.bits_per_code(h["m"])
            words = -(-h["l"] // per_word)
            if len(code_payload) != t * words * 8:
                raise DictionaryFormatError("code section size inconsistent with meta")
            packed = np.frombuffer(code_payload, dtype="<u8").reshape(t, words)
            unpacked = hashing.unpack_codes(packed, h["m"], h["l"])
            codes = hashing.HashCodes(codes=unpacked, m=h["m"], packed=packed.astype(np.uint64))
            hash_seed = h["seed"]

        mel_meta = meta["mel"]
        return SeparationDictionary(
            features=FeatureMatrix(rows=rows, kind=meta["feature_kind"]),
            ibm=ibm,
            config=config,
            sample_rate=meta["sample_rate"],
            mel_bands=None if mel_meta is None else mel_meta["bands"],
            mel_fmin=None if mel_meta is None else mel_meta["f_min"],
            mel_fmax=None if mel_meta is None else mel_meta["f_max"],
            codes=codes,
            hash_seed=hash_seed,
        )
