"""Permutation tables, winner-take-all codes, bit packing, and Hamming kernels."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from wtasep.hashing import (
    HashCodes,
    PermutationTable,
    bits_per_code,
    generate_permutations,
    hamming_affinity,
    hamming_similarities,
    hamming_similarity,
    hash_matrix,
    hash_vector,
    pack_codes,
    unpack_codes,
)
from wtasep.separator import cosine_similarities

from tests.synth import smooth_spectrogram


def naive_hash_vector(x, entries):
    """Brute-force oracle: materialize each subsampled vector and scan for its max."""
    out = []
    for row in entries:
        sub = [x[i] for i in row]
        best_pos = 0
        for pos in range(1, len(sub)):
            if sub[pos] > sub[best_pos]:
                best_pos = pos
        out.append(best_pos)
    return np.array(out)


def naive_match_fraction(a_codes, b_codes):
    """Per-integer comparison loop, the reference for the packed kernel."""
    assert len(a_codes) == len(b_codes)
    matches = sum(1 for x, y in zip(a_codes, b_codes) if x == y)
    return matches / len(a_codes)


class TestGeneratePermutations:
    def test_determinism(self):
        """Identical seeds must give bit-identical tables."""
        a = generate_permutations(42, l=100, m=6, d=40)
        b = generate_permutations(42, l=100, m=6, d=40)
        np.testing.assert_array_equal(a.entries, b.entries)

    def test_different_seeds_differ(self):
        a = generate_permutations(1, l=50, m=6, d=40)
        b = generate_permutations(2, l=50, m=6, d=40)
        assert not np.array_equal(a.entries, b.entries)

    def test_rows_have_distinct_indices(self):
        table = generate_permutations(7, l=200, m=8, d=16)
        for row in table.entries:
            assert len(set(row.tolist())) == 8

    def test_m_equals_d_gives_full_permutations(self):
        """Distinctness forces every row to permute all of {0..D-1}."""
        table = generate_permutations(3, l=20, m=10, d=10)
        expected = set(range(10))
        for row in table.entries:
            assert set(row.tolist()) == expected

    def test_uniform_coverage(self):
        """Each dimension lands in about M/D of the rows (empirical count oracle)."""
        l, m, d = 10000, 6, 40
        table = generate_permutations(123, l=l, m=m, d=d)
        counts = np.bincount(table.entries.ravel(), minlength=d)
        fractions = counts / l
        assert np.all(np.abs(fractions - m / d) < 0.02)
        expected = l * m / d
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 / (d - 1) < 2.0  # chi-square sanity, far from the 0.001 tail

    @pytest.mark.parametrize("l,m,d", [(10, 1, 5), (10, 6, 5), (0, 3, 5)])
    def test_parameter_errors(self, l, m, d):
        with pytest.raises(ValueError):
            generate_permutations(0, l=l, m=m, d=d)

    def test_entry_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            PermutationTable(entries=np.array([[0, 5]]), d=4, seed=0)


class TestHashVector:
    def test_worked_example(self):
        """Known 4-dim input with two fixed index rows (1-based convention [2, 1])."""
        x = np.array([6.6, 2.2, 4.4, 3.3])
        # Rows [4,1,2] and [3,4,2] in 1-based indexing.
        table = PermutationTable(entries=np.array([[3, 0, 1], [2, 3, 1]]), d=4, seed=0)
        codes = hash_vector(x, table)
        np.testing.assert_array_equal(codes, [1, 0])
        np.testing.assert_array_equal(codes + 1, [2, 1])  # 1-based reading

    def test_constant_vector_tie_break(self):
        """All-equal entries: the lowest position wins everywhere."""
        table = generate_permutations(5, l=64, m=4, d=12)
        codes = hash_vector(np.full(12, 3.7), table)
        assert np.all(codes == 0)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        for trial in range(20):
            d = int(rng.integers(4, 50))
            m = int(rng.integers(2, min(d, 10) + 1))
            table = generate_permutations(trial, l=30, m=m, d=d)
            x = rng.standard_normal(d)
            np.testing.assert_array_equal(hash_vector(x, table), naive_hash_vector(x, table.entries))

    def test_nan_rejected(self):
        table = generate_permutations(0, l=4, m=2, d=4)
        x = np.array([1.0, np.nan, 2.0, 3.0])
        with pytest.raises(ValueError, match="ordering undefined"):
            hash_vector(x, table)

    def test_dimension_mismatch(self):
        table = generate_permutations(0, l=4, m=2, d=4)
        with pytest.raises(ValueError):
            hash_vector(np.ones(5), table)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_monotone_invariance(self, seed):
        """Codes depend only on rank order: exp and log1p leave them unchanged."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(24)
        table = generate_permutations(seed, l=40, m=5, d=24)
        base = hash_vector(x, table)
        np.testing.assert_array_equal(hash_vector(np.exp(x), table), base)
        np.testing.assert_array_equal(hash_vector(np.log1p(x - x.min()), table), base)
        np.testing.assert_array_equal(hash_vector(3.0 * x + 11.0, table), base)

    def test_locality_small_perturbation(self):
        """A perturbation below half the smallest selected gap cannot flip a winner."""
        rng = np.random.default_rng(9)
        x = rng.permutation(32).astype(float)  # gaps of at least 1.0
        table = generate_permutations(4, l=100, m=6, d=32)
        base = hash_vector(x, table)
        eps = rng.uniform(-0.2, 0.2, size=32)
        np.testing.assert_array_equal(hash_vector(x + eps, table), base)


class TestHashMatrix:
    def test_single_row_equals_hash_vector(self):
        rng = np.random.default_rng(0)
        x = rng.random(20)
        table = generate_permutations(1, l=50, m=4, d=20)
        np.testing.assert_array_equal(hash_matrix(x[None, :], table).codes[0], hash_vector(x, table))

    def test_identical_rows_identical_codes(self):
        rng = np.random.default_rng(1)
        row = rng.random(16)
        table = generate_permutations(2, l=32, m=3, d=16)
        codes = hash_matrix(np.vstack([row, row]), table)
        np.testing.assert_array_equal(codes.codes[0], codes.codes[1])

    def test_all_rows_match_per_row_oracle(self):
        rng = np.random.default_rng(2)
        rows = rng.standard_normal((100, 30))
        table = generate_permutations(3, l=25, m=6, d=30)
        codes = hash_matrix(rows, table)
        for i in range(100):
            np.testing.assert_array_equal(codes.codes[i], naive_hash_vector(rows[i], table.entries))

    def test_chunking_does_not_change_codes(self):
        rng = np.random.default_rng(3)
        rows = rng.random((17, 12))
        table = generate_permutations(4, l=10, m=4, d=12)
        a = hash_matrix(rows, table, chunk=3)
        b = hash_matrix(rows, table)
        np.testing.assert_array_equal(a.codes, b.codes)
        np.testing.assert_array_equal(a.packed, b.packed)

    def test_dimension_mismatch(self):
        table = generate_permutations(0, l=4, m=2, d=4)
        with pytest.raises(ValueError):
            hash_matrix(np.ones((3, 5)), table)


class TestPacking:
    def test_bits_per_code(self):
        assert bits_per_code(2) == 1
        assert bits_per_code(4) == 2
        assert bits_per_code(6) == 3
        assert bits_per_code(8) == 3
        assert bits_per_code(9) == 4

    def test_m2_storage_arithmetic(self):
        """1 bit per code: 100 codes carry 100 payload bits (13 bytes), 2 words stored."""
        rng = np.random.default_rng(0)
        codes = rng.integers(0, 2, size=(1, 100))
        packed = pack_codes(codes, m=2)
        assert bits_per_code(2) * 100 == 100
        assert -(-100 // 8) == 13
        assert packed.shape == (1, 2)

    def test_m4_declared_layout(self):
        """Codes [3,0,2,1] at 2 bits each, LSB-first: low byte 0b01_10_00_11."""
        packed = pack_codes(np.array([[3, 0, 2, 1]]), m=4)
        assert packed.shape == (1, 1)
        assert int(packed[0, 0]) == 0b01_10_00_11

    def test_word_boundary_padding(self):
        """M=6 gives 3-bit codes, 21 per word; 22 codes need a second word."""
        codes = np.zeros((1, 22), dtype=np.uint16)
        codes[0, 21] = 5
        packed = pack_codes(codes, m=6)
        assert packed.shape == (1, 2)
        assert int(packed[0, 0]) == 0
        assert int(packed[0, 1]) == 5

    @given(
        st.integers(2, 40),
        st.integers(1, 150),
        st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_identity(self, m, l, seed):
        rng = np.random.default_rng(seed)
        codes = rng.integers(0, m, size=(3, l), dtype=np.uint16)
        np.testing.assert_array_equal(unpack_codes(pack_codes(codes, m), m, l), codes)

    def test_code_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            pack_codes(np.array([[4]]), m=4)
        with pytest.raises(ValueError):
            HashCodes(codes=np.array([[6]], dtype=np.uint16), m=6)


class TestHammingSimilarity:
    def test_identical_rows_score_one(self):
        rng = np.random.default_rng(0)
        codes = HashCodes(codes=rng.integers(0, 6, size=(2, 100), dtype=np.uint16), m=6)
        assert hamming_similarity(codes[0], codes[0]) == 1.0

    def test_complement_rows_score_zero(self):
        """M=2: flipping every bit kills every match."""
        rng = np.random.default_rng(1)
        a = rng.integers(0, 2, size=(1, 64), dtype=np.uint16)
        codes = HashCodes(codes=np.vstack([a, 1 - a]), m=2)
        assert hamming_similarity(codes[0], codes[1]) == 0.0

    @pytest.mark.parametrize("m", [2, 4, 6, 8])
    @pytest.mark.parametrize("l", [20, 100])
    def test_packed_kernel_equals_naive_loop(self, m, l):
        rng = np.random.default_rng(m * 1000 + l)
        a = rng.integers(0, m, size=(200, l), dtype=np.uint16)
        b = rng.integers(0, m, size=(200, l), dtype=np.uint16)
        ca = HashCodes(codes=a, m=m)
        cb = HashCodes(codes=b, m=m)
        for i in range(200):
            packed = hamming_similarity(ca[i], cb[i])
            naive = naive_match_fraction(a[i], b[i])
            assert packed == naive

    def test_scan_equals_rowwise(self):
        rng = np.random.default_rng(5)
        dict_codes = HashCodes(codes=rng.integers(0, 6, size=(50, 100), dtype=np.uint16), m=6)
        query = dict_codes[17]
        sims = hamming_similarities(query, dict_codes)
        expected = [hamming_similarity(query, dict_codes[j]) for j in range(50)]
        np.testing.assert_allclose(sims, expected)
        assert sims[17] == 1.0

    def test_length_and_subsample_mismatch_rejected(self):
        a = HashCodes(codes=np.zeros((1, 10), dtype=np.uint16), m=4)
        b = HashCodes(codes=np.zeros((1, 12), dtype=np.uint16), m=4)
        c = HashCodes(codes=np.zeros((1, 10), dtype=np.uint16), m=6)
        with pytest.raises(ValueError, match="length"):
            hamming_similarity(a, b)
        with pytest.raises(ValueError, match="subsample"):
            hamming_similarity(a, c)


class TestAffinityPreservation:
    def test_hamming_affinity_matrix_shape_and_diagonal(self):
        rng = np.random.default_rng(0)
        codes = HashCodes(codes=rng.integers(0, 6, size=(20, 50), dtype=np.uint16), m=6)
        aff = hamming_affinity(codes)
        assert aff.shape == (20, 20)
        np.testing.assert_allclose(np.diag(aff), 1.0)
        np.testing.assert_allclose(aff, aff.T)

    def test_hash_affinity_tracks_cosine_affinity(self):
        """Hamming self-affinity rank-correlates with cosine self-affinity.

        Smooth 200-frame spectrogram, L=100, M=6.  The 0.5 floor was
        validated against the brute-force run before being frozen here
        (observed correlation is well above it).
        """
        rows = smooth_spectrogram(200, 40, seed=11)
        table = generate_permutations(77, l=100, m=6, d=40)
        codes = hash_matrix(rows, table)
        ham = hamming_affinity(codes)
        cos = np.vstack([cosine_similarities(rows[i], rows) for i in range(200)])
        rho = spearmanr(ham.ravel(), cos.ravel()).statistic
        assert rho > 0.5
