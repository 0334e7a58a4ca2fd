"""Nearest-neighbor mask voting: find the closest dictionary frames, average their masks.

Two similarity regimes share one selection rule: cosine similarity on raw
feature rows, or Hamming similarity on packed winner-take-all codes.  Ties
go to the lower dictionary index, so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import hashing
from .dictionary import SeparationDictionary
from .dsp import AudioBuffer, ComplexSpectrogram, istft, magnitude, stft

COSINE = "cosine"
HAMMING = "hamming"


@dataclass(frozen=True)
class SeparatorParams:
    """Neighbor count, hash shape, and similarity regime for one separation run."""

    k: int = 5
    m: int = 6
    l: int = 100
    tables: int = 1
    mode: str = HAMMING
    seed: int = 0
    table_seeds: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"need K >= 1, got {self.k}")
        if self.tables < 1:
            raise ValueError(f"need at least one permutation table, got {self.tables}")
        if self.mode not in (COSINE, HAMMING):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.table_seeds is not None and len(self.table_seeds) != self.tables:
            raise ValueError("table_seeds length must equal the table count")

    def seeds(self) -> tuple[int, ...]:
        """Per-table seeds: explicit overrides, else seed, seed+1, ..."""
        if self.table_seeds is not None:
            return tuple(self.table_seeds)
        return tuple(self.seed + t for t in range(self.tables))


@dataclass(frozen=True)
class NeighborSet:
    """The selected dictionary rows, best first, with their similarities."""

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))

    @property
    def a_min(self) -> float:
        return float(self.scores.min())

    def __len__(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class MaskEstimate:
    """Per-bin soft mask in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("mask must be a vector")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", values)


def cosine_similarity(x: np.ndarray, h: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0 when either is all-zero."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.shape != h.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {h.shape}")
    nx = np.linalg.norm(x)
    nh = np.linalg.norm(h)
    if nx == 0.0 or nh == 0.0:
        return 0.0
    return float(np.dot(x, h) / (nx * nh))


def cosine_similarities(query: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Cosine similarity of one query against every row; zero rows score 0."""
    query = np.asarray(query, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    if query.ndim != 1 or rows.ndim != 2 or rows.shape[1] != query.shape[0]:
        raise ValueError(f"dimension mismatch: query {query.shape} vs rows {rows.shape}")
    qn = np.linalg.norm(query)
    if qn == 0.0:
        return np.zeros(rows.shape[0])
    norms = np.linalg.norm(rows, axis=1)
    out = np.zeros(rows.shape[0])
    nonzero = norms > 0.0
    out[nonzero] = (rows[nonzero] @ query) / (norms[nonzero] * qn)
    return out


def _select_top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores; equal scores resolve to the lower index.

    Selection is a partition plus explicit tie handling at the cut, not a
    full sort, so one query stays O(T).
    """
    t = scores.shape[0]
    if t < k:
        raise ValueError(f"dictionary smaller than K: {t} frames < K={k}")
    if t == k:
        chosen = np.arange(t)
    else:
        part = np.argpartition(-scores, k - 1)[:k]
        kth = scores[part].min()
        better = np.flatnonzero(scores > kth)
        ties = np.flatnonzero(scores == kth)
        chosen = np.concatenate([better, ties[: k - better.size]])
    return chosen[np.lexsort((chosen, -scores[chosen]))]


def knn_search(query, dictionary: SeparationDictionary, params: SeparatorParams) -> NeighborSet:
    """Single linear scan for the K most similar dictionary frames.

    In cosine mode the query is a feature vector matched against the
    dictionary's feature rows; in Hamming mode it is a single hashed code
    row matched against the dictionary's packed codes.
    """
    if params.mode == COSINE:
        scores = cosine_similarities(query, dictionary.features.rows)
    else:
        if dictionary.codes is None:
            raise ValueError("dictionary has no hash codes; attach codes or use cosine mode")
        if not isinstance(query, hashing.HashCodes):
            raise ValueError("hamming mode expects a hashed query row")
        scores = hashing.hamming_similarities(query, dictionary.codes)
    idx = _select_top_k(scores, params.k)
    return NeighborSet(indices=idx, scores=scores[idx])


def estimate_mask(neighbors: NeighborSet, masks: np.ndarray) -> MaskEstimate:
    """Element-wise mean of the neighbors' binary mask rows."""
    if len(neighbors) == 0:
        raise ValueError("empty neighbor set")
    rows = np.asarray(masks)[neighbors.indices]
    return MaskEstimate(values=rows.mean(axis=0, dtype=np.float64))


def apply_mask(mask: MaskEstimate, frame: np.ndarray) -> np.ndarray:
    """Scale one frame of complex coefficients by the real mask."""
    frame = np.asarray(frame)
    if frame.shape != mask.values.shape:
        raise ValueError(f"mask length {mask.values.shape} vs frame {frame.shape}")
    return mask.values * frame


def _mask_frames(feats_rows: np.ndarray, dictionary, params, query_codes=None) -> np.ndarray:
    """Estimate one mask row per query frame under a single similarity regime."""
    out = np.empty((feats_rows.shape[0], dictionary.n_bins))
    for i in range(feats_rows.shape[0]):
        query = feats_rows[i] if query_codes is None else query_codes[i]
        neighbors = knn_search(query, dictionary, params)
        out[i] = estimate_mask(neighbors, dictionary.ibm).values
    return out


def separate(
    mixture: AudioBuffer,
    dictionary: SeparationDictionary,
    params: SeparatorParams = SeparatorParams(),
    timings: dict | None = None,
) -> AudioBuffer:
    """Denoise one mixture: per frame, vote a mask from the nearest dictionary frames.

    In Hamming mode with several tables, the whole pipeline runs once per
    permutation table and the resulting masks are averaged before masking
    the mixture spectrogram.
    """
    if mixture.sample_rate != dictionary.sample_rate:
        raise ValueError(
            f"sample rate mismatch: mixture {mixture.sample_rate} Hz "
            f"vs dictionary {dictionary.sample_rate} Hz"
        )
    tick = time.perf_counter
    t0 = tick()
    spec = stft(mixture, dictionary.config)
    feats = dictionary.project(magnitude(spec))
    if timings is not None:
        timings["frontend"] = timings.get("frontend", 0.0) + tick() - t0

    if params.mode == COSINE:
        t0 = tick()
        masks = _mask_frames(feats.rows, dictionary, params)
        if timings is not None:
            timings["search"] = timings.get("search", 0.0) + tick() - t0
    else:
        masks = np.zeros((feats.n_frames, dictionary.n_bins))
        for table_seed in params.seeds():
            t0 = tick()
            table = hashing.generate_permutations(
                table_seed, params.l, params.m, dictionary.feature_dim
            )
            reusable = (
                dictionary.codes is not None
                and dictionary.hash_seed == table_seed
                and dictionary.codes.l == params.l
                and dictionary.codes.m == params.m
            )
            if reusable:
                scan_dict = dictionary
            else:
                dict_codes = hashing.hash_matrix(dictionary.features, table)
                scan_dict = replace(dictionary, codes=dict_codes, hash_seed=table_seed)
            query_codes = hashing.hash_matrix(feats, table)
            if timings is not None:
                timings["hash"] = timings.get("hash", 0.0) + tick() - t0
            t0 = tick()
            masks += _mask_frames(feats.rows, scan_dict, params, query_codes=query_codes)
            if timings is not None:
                timings["search"] = timings.get("search", 0.0) + tick() - t0
        masks /= params.tables

    t0 = tick()
    masked = ComplexSpectrogram(
        frames=spec.frames * masks, config=spec.config, sample_rate=spec.sample_rate
    )
    out = istft(masked).samples
    if len(out) < len(mixture):
        out = np.pad(out, (0, len(mixture) - len(out)))
    if timings is not None:
        timings["reconstruct"] = timings.get("reconstruct", 0.0) + tick() - t0
    return AudioBuffer(samples=out, sample_rate=mixture.sample_rate)
