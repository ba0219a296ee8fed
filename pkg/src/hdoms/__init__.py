"""Hyperdimensional open modification search for mass spectra, with a
behavioral simulator of a multi-level RRAM crossbar accelerator.

The library covers the full flow: spectrum preprocessing and binning,
binary/multi-bit hypervector encoding, Hamming-space association search
with target-decoy FDR control, and a device-level model for studying how
analog storage (conductance drift, ADC quantization, limited active rows)
degrades retrieval.
"""

from .assoc_search import (
    ReferenceIndex,
    ScoredMatch,
    batch_search,
    candidate_range,
    hamming_distances,
    hamming_topk,
    write_results_csv,
)
from .errors import (
    ChunkMismatchError,
    ConfigError,
    DimensionMismatchError,
    DomainError,
    EmptySpectrumError,
    FormatError,
    HdomsError,
    MissingIdError,
    RowLimitExceededError,
    StageError,
)
from .hd_core import (
    EncoderConfig,
    Hypervector,
    IdFamily,
    LevelFamily,
    MultiBitHypervector,
    StoreWriter,
    encode,
    encode_many,
    family_rng,
    gen_id_family,
    gen_level_family,
    pack_bits,
    read_store,
    unpack_bits,
    write_store,
)
from .oms_pipeline import (
    FdrResult,
    PipelineConfig,
    RunReport,
    fdr_curve,
    fdr_filter,
    generate_decoys,
    read_store_meta,
    run_pipeline,
    write_store_meta,
)
from .spectra import (
    BinConfig,
    BinnedVector,
    Peak,
    PreprocessConfig,
    Spectrum,
    bin_spectrum,
    load_mgf,
    preprocess,
    write_mgf,
)
from .xbar_sim import (
    CrossbarTile,
    NoiseModel,
    RramConfig,
    crossbar_dot,
    decode_mac,
    encode_elementwise,
    map_differential,
    measure_ber,
    measure_mvm_nmse,
    mvm_sense,
    program,
    program_differential,
    read_hypervector,
    store_hypervector,
)

__version__ = "0.1.0"

__all__ = [
    "BinConfig",
    "BinnedVector",
    "ChunkMismatchError",
    "ConfigError",
    "CrossbarTile",
    "DimensionMismatchError",
    "DomainError",
    "EmptySpectrumError",
    "EncoderConfig",
    "FdrResult",
    "FormatError",
    "HdomsError",
    "Hypervector",
    "IdFamily",
    "LevelFamily",
    "MissingIdError",
    "MultiBitHypervector",
    "NoiseModel",
    "Peak",
    "PipelineConfig",
    "PreprocessConfig",
    "ReferenceIndex",
    "RowLimitExceededError",
    "RramConfig",
    "RunReport",
    "ScoredMatch",
    "Spectrum",
    "StageError",
    "StoreWriter",
    "batch_search",
    "bin_spectrum",
    "candidate_range",
    "crossbar_dot",
    "decode_mac",
    "encode",
    "encode_elementwise",
    "encode_many",
    "family_rng",
    "fdr_curve",
    "fdr_filter",
    "gen_id_family",
    "gen_level_family",
    "generate_decoys",
    "hamming_distances",
    "hamming_topk",
    "load_mgf",
    "map_differential",
    "measure_ber",
    "measure_mvm_nmse",
    "mvm_sense",
    "pack_bits",
    "preprocess",
    "program",
    "program_differential",
    "read_hypervector",
    "read_store",
    "read_store_meta",
    "run_pipeline",
    "store_hypervector",
    "unpack_bits",
    "write_mgf",
    "write_results_csv",
    "write_store",
    "write_store_meta",
]
