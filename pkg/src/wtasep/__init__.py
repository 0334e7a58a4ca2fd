"""Iteration-free single-channel source separation with winner-take-all hash codes.

Training mixture spectra and their ideal binary masks form a dictionary;
a query frame is hashed, its nearest dictionary frames are found by
bitwise Hamming similarity, and their masks vote a soft denoising mask.
"""

from .dictionary import (
    MixSpec,
    SeparationDictionary,
    build_dictionary,
    compute_ibm,
    compute_irm,
    load,
    mix_at_snr,
    save,
    storage_report,
    with_codes,
)
from .dsp import (
    MEL,
    STFT_MAGNITUDE,
    AudioBuffer,
    ComplexSpectrogram,
    FeatureMatrix,
    MelFilterbank,
    StftConfig,
    istft,
    magnitude,
    mel_filterbank,
    read_wav,
    stft,
    to_mel,
    write_wav,
)
from .evaluation import BssScores, bss_eval, sdr_improvement
from .hashing import (
    HashCodes,
    PermutationTable,
    generate_permutations,
    hamming_affinity,
    hamming_similarities,
    hamming_similarity,
    hash_matrix,
    hash_vector,
    pack_codes,
    unpack_codes,
)
from .separator import (
    COSINE,
    HAMMING,
    MaskEstimate,
    NeighborSet,
    SeparatorParams,
    apply_mask,
    cosine_similarities,
    cosine_similarity,
    estimate_mask,
    knn_search,
    separate,
)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "BssScores",
    "ComplexSpectrogram",
    "COSINE",
    "FeatureMatrix",
    "HAMMING",
    "HashCodes",
    "MaskEstimate",
    "MEL",
    "MelFilterbank",
    "MixSpec",
    "NeighborSet",
    "PermutationTable",
    "SeparationDictionary",
    "SeparatorParams",
    "STFT_MAGNITUDE",
    "StftConfig",
    "apply_mask",
    "bss_eval",
    "build_dictionary",
    "compute_ibm",
    "compute_irm",
    "cosine_similarities",
    "cosine_similarity",
    "estimate_mask",
    "generate_permutations",
    "hamming_affinity",
    "hamming_similarities",
    "hamming_similarity",
    "hash_matrix",
    "hash_vector",
    "istft",
    "knn_search",
    "load",
    "magnitude",
    "mel_filterbank",
    "mix_at_snr",
    "pack_codes",
    "read_wav",
    "save",
    "sdr_improvement",
    "separate",
    "stft",
    "storage_report",
    "to_mel",
    "unpack_codes",
    "with_codes",
    "write_wav",
]
