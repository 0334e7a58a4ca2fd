"""Winner-take-all hash codes with bit-packed Hamming search kernels.

A permutation table of L rows, each holding M distinct dimension indices,
turns a D-dimensional feature vector into L small integers: the position of
the maximum among the M selected entries.  Codes depend only on the rank
order of the input, so any monotone rescaling of the features leaves them
unchanged.  Packed into 64-bit words they support a branch-free
XOR/popcount similarity scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1

# SWAR popcount constants.
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


class SplitMix64:
    """Fixed, portable PRNG (splitmix64).

    Permutation tables must be reproducible bit-for-bit across platforms
    and library versions, so we pin the exact generator instead of relying
    on a standard library default whose stream may change.  The algorithm
    is the usual splitmix64 finalizer over a Weyl sequence.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        # Modulo draw; bias is O(n / 2**64), irrelevant for n in the
        # thousands, and keeps the stream spec one line long.
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        return self.next_u64() % n


def bits_per_code(m: int) -> int:
    """Bits needed to store one winner position in {0..m-1}."""
    if m < 2:
        raise ValueError(f"subsample size must be >= 2, got {m}")
    return max(1, int(m - 1).bit_length())


@dataclass(frozen=True)
class PermutationTable:
    """L rows of M distinct indices into {0..d-1}, plus the seed that made them."""

    entries: np.ndarray  # (L, M) intp
    d: int
    seed: int

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.intp)
        if entries.ndim != 2:
            raise ValueError("permutation entries must be a 2-D index table")
        if entries.size and (entries.min() < 0 or entries.max() >= self.d):
            raise ValueError("permutation index out of range")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @property
    def l(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]


def generate_permutations(seed: int, l: int, m: int, d: int) -> PermutationTable:
    """Draw L rows of M distinct indices from {0..d-1}, uniformly, without replacement.

    The same seed always produces the same table: rows are filled in order
    from a single splitmix64 stream, each row by a partial Fisher-Yates
    shuffle of the index pool.
    """
    if m < 2 or m > d:
        raise ValueError(f"need 2 <= M <= D, got M={m} D={d}")
    if l < 1:
        raise ValueError(f"need L >= 1, got L={l}")
    rng = SplitMix64(seed)
    entries = np.empty((l, m), dtype=np.intp)
    for row in range(l):
        pool = np.arange(d)
        for j in range(m):
            r = j + rng.below(d - j)
            pool[j], pool[r] = pool[r], pool[j]
        entries[row] = pool[:m]
    return PermutationTable(entries=entries, d=d, seed=seed)


def _check_finite_features(x: np.ndarray):
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value; ordering undefined")


def hash_vector(x: np.ndarray, table: PermutationTable) -> np.ndarray:
    """Winner positions of one D-vector under every permutation row.

    Entry l is the position (0-based, in {0..M-1}) of the maximum among
    x[table.entries[l]].  Ties go to the lowest position.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != table.d:
        raise ValueError(f"expected a vector of dimension {table.d}, got shape {x.shape}")
    _check_finite_features(x)
    return x[table.entries].argmax(axis=1).astype(np.uint16)


@dataclass(frozen=True)
class HashCodes:
    """Winner positions for N frames, kept both as integers and bit-packed words.

    The packed layout places codes LSB-first within little-endian 64-bit
    words, bits_per_code(m) bits each; no code straddles a word boundary,
    so each word holds floor(64/bits) codes and the tail of the last slot
    group is zero padding.
    """

    codes: np.ndarray  # (N, L) uint16, each value < m
    m: int
    packed: np.ndarray = field(default=None)  # (N, W) uint64

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.uint16)
        if codes.ndim != 2:
            raise ValueError("codes must be a 2-D (frames x L) array")
        if codes.size and codes.max() >= self.m:
            raise ValueError(f"code value >= M={self.m}")
        packed = self.packed
        if packed is None:
            packed = pack_codes(codes, self.m)
        packed = np.asarray(packed, dtype=np.uint64)
        codes.flags.writeable = False
        packed.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "packed", packed)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def l(self) -> int:
        return self.codes.shape[1]

    @property
    def bits_per_code(self) -> int:
        return bits_per_code(self.m)

    @property
    def words_per_row(self) -> int:
        return self.packed.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> "HashCodes":
        """Single-row view (no copy)."""
        i = int(i)
        if i < 0:
            i += self.n
        if not 0 <= i < self.n:
            raise IndexError(f"row {i} out of range for {self.n} frames")
        return HashCodes(codes=self.codes[i : i + 1], m=self.m, packed=self.packed[i : i + 1])


def hash_matrix(feats, table: PermutationTable, chunk: int = 4096) -> HashCodes:
    """Hash every row of a feature matrix; row n equals hash_vector(rows[n], table)."""
    rows = np.asarray(getattr(feats, "rows", feats), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != table.d:
        raise ValueError(
            f"feature dimension {rows.shape[1] if rows.ndim == 2 else rows.shape} "
            f"does not match table dimension {table.d}"
        )
    _check_finite_features(rows)
    n = rows.shape[0]
    codes = np.empty((n, table.l), dtype=np.uint16)
    for start in range(0, n, chunk):
        block = rows[start : start + chunk]
        codes[start : start + chunk] = block[:, table.entries].argmax(axis=2)
    return HashCodes(codes=codes, m=table.m)


def pack_codes(codes: np.ndarray, m: int) -> np.ndarray:
    """Pack (N, L) winner positions into (N, W) little-endian uint64 words."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError("codes must be 2-D")
    if codes.size and (codes.min() < 0 or codes.max() >= m):
        raise ValueError(f"code value outside [0, {m})")
    bits = bits_per_code(m)
    per_word = 64 // bits
    n, l = codes.shape
    words = -(-l // per_word) if l else 0
    padded = np.zeros((n, words * per_word), dtype=np.uint64)
    padded[:, :l] = codes
    blocks = padded.reshape(n, words, per_word)
    packed = np.zeros((n, words), dtype=np.uint64)
    for slot in range(per_word):
        packed |= blocks[:, :, slot] << np.uint64(slot * bits)
    return packed


def unpack_codes(packed: np.ndarray, m: int, l: int) -> np.ndarray:
    """Inverse of pack_codes: recover the (N, L) uint16 winner positions."""
    packed = np.asarray(packed, dtype=np.uint64)
    bits = bits_per_code(m)
    per_word = 64 // bits
    n, words = packed.shape
    if words != (-(-l // per_word) if l else 0):
        raise ValueError("packed width inconsistent with L and M")
    out = np.empty((n, words, per_word), dtype=np.uint64)
    mask = np.uint64((1 << bits) - 1)
    for slot in range(per_word):
        out[:, :, slot] = (packed >> np.uint64(slot * bits)) & mask
    codes = out.reshape(n, words * per_word)[:, :l].astype(np.uint16)
    if codes.size and codes.max() >= m:
        raise ValueError("unpacked code value >= M; corrupt packed data")
    return codes


def _popcount64(x: np.ndarray) -> np.ndarray:
    """Branch-free SWAR popcount of a uint64 array."""
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


def _field_lsb_mask(bits: int) -> np.uint64:
    mask = 0
    for slot in range(64 // bits):
        mask |= 1 << (slot * bits)
    return np.uint64(mask)


def _mismatch_counts(query_words: np.ndarray, dict_words: np.ndarray, bits: int) -> np.ndarray:
    """Number of differing code fields between one packed row and many.

    XOR makes unequal fields nonzero, the shift-OR fold drags any set bit of
    a field onto its lowest position, the field mask isolates those low
    bits, and popcount totals them.  Padding fields are zero on both sides,
    so they never count as mismatches.
    """
    x = query_words ^ dict_words
    folded = x.copy()
    for k in range(1, bits):
        folded |= x >> np.uint64(k)
    folded &= _field_lsb_mask(bits)
    return _popcount64(folded).sum(axis=-1)


def _check_comparable(a: HashCodes, b: HashCodes):
    if a.l != b.l:
        raise ValueError(f"code length mismatch: {a.l} vs {b.l}")
    if a.m != b.m:
        raise ValueError(f"subsample size mismatch: {a.m} vs {b.m}")


def hamming_similarity(a: HashCodes, b: HashCodes) -> float:
    """Fraction of positions where two single-row code sets agree."""
    if a.n != 1 or b.n != 1:
        raise ValueError("hamming_similarity compares exactly one row against one row")
    _check_comparable(a, b)
    mism = _mismatch_counts(a.packed[0], b.packed, a.bits_per_code)
    return float((a.l - int(mism[0])) / a.l)


def hamming_similarities(query: HashCodes, dictionary: HashCodes) -> np.ndarray:
    """Similarity of one query row against every dictionary row (linear scan)."""
    if query.n != 1:
        raise ValueError("query must be a single code row")
    _check_comparable(query, dictionary)
    mism = _mismatch_counts(query.packed[0], dictionary.packed, query.bits_per_code)
    return (query.l - mism.astype(np.float64)) / query.l


def hamming_affinity(codes: HashCodes) -> np.ndarray:
    """Symmetric (N, N) matrix of pairwise code-match fractions."""
    n = codes.n
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        out[i] = hamming_similarities(codes[i], codes)
    return out
