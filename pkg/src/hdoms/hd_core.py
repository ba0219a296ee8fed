"""ID-Level hypervector encoding.

A binned spectrum is encoded as h[d] = sign(sum_i ID_i[d] * LV_q(i)[d])
where ID_i is the identity hypervector of bin i and LV_q(i) the level
hypervector of the quantized intensity.  ID components are small signed
integers (1 to 3 bits of precision, zero excluded); level hypervectors
form a chain where each level differs from its neighbor in exactly
D/(2Q) positions.  Encoded hypervectors are binary and bit-packed into
64-bit words.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionMismatchError, DomainError, FormatError, MissingIdError
from .spectra import BinnedVector

WORD_BITS = 64
STORE_MAGIC = b"HDV1"
# magic, dim u32, precision bits u8, row count u64, all little-endian
_STORE_HEADER = struct.Struct("<4sIBQ")

# seed-stream tags so ID and level families never share a stream
_STREAM_IDS = 1
_STREAM_LEVELS = 2


def family_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for a (seed, stream) pair; stable across platforms."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, stream))))


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a bool/0-1 array (..., D) into little-endian uint64 words (..., D/64)."""
    bits = np.asarray(bits)
    if bits.shape[-1] % WORD_BITS:
        raise DimensionMismatchError("dimension must be a multiple of 64")
    packed = np.packbits(bits.astype(np.uint8), axis=-1, bitorder="little")
    return packed.view("<u8").reshape(*bits.shape[:-1], bits.shape[-1] // WORD_BITS)


def unpack_bits(words: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a bool array (..., dim)."""
    words = np.ascontiguousarray(words)
    as_bytes = words.view(np.uint8).reshape(*words.shape[:-1], words.shape[-1] * 8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :dim].astype(bool)


@dataclass(frozen=True)
class Hypervector:
    """A D-dimensional bipolar vector, stored as packed bits (+1 -> 1, -1 -> 0)."""

    dim: int
    words: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "words", np.ascontiguousarray(self.words, dtype=np.uint64))
        if self.dim % WORD_BITS or self.words.shape != (self.dim // WORD_BITS,):
            raise DimensionMismatchError(
                f"dim {self.dim} needs {self.dim // WORD_BITS} packed words, got {self.words.shape}"
            )

    @classmethod
    def from_bipolar(cls, values: np.ndarray) -> "Hypervector":
        values = np.asarray(values)
        return cls(values.shape[-1], pack_bits(values > 0))

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "Hypervector":
        bits = np.asarray(bits)
        return cls(bits.shape[-1], pack_bits(bits))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator) -> "Hypervector":
        return cls.from_bits(rng.integers(0, 2, size=dim, dtype=np.uint8))

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.dim)

    def to_bipolar(self) -> np.ndarray:
        return np.where(self.to_bits(), np.int8(1), np.int8(-1))

    def hamming(self, other: "Hypervector") -> int:
        if self.dim != other.dim:
            raise DimensionMismatchError(f"{self.dim} != {other.dim}")
        return int(np.bitwise_count(self.words ^ other.words).sum())

    def dot(self, other: "Hypervector") -> int:
        # bipolar dot product: D - 2 * hamming
        return self.dim - 2 * self.hamming(other)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Hypervector)
            and self.dim == other.dim
            and bool(np.array_equal(self.words, other.words))
        )


@dataclass(frozen=True)
class MultiBitHypervector:
    """Signed small-integer hypervector; components in {-2^(b-1)..-1, 1..2^(b-1)}."""

    dim: int
    values: np.ndarray
    bits: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.int8))
        if self.values.shape != (self.dim,):
            raise DimensionMismatchError(f"expected {self.dim} components")
        mag = 1 << (self.bits - 1)
        if np.any(self.values == 0) or np.any(np.abs(self.values) > mag):
            raise DomainError(f"components must lie in +-[1, {mag}] with 0 excluded")


@dataclass(frozen=True)
class EncoderConfig:
    """Encoding parameters: dimension, level count Q, ID precision, chunking."""

    dim: int = 8192
    levels: int = 16
    id_bits: int = 1
    chunked: bool = False
    chunk_count: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.dim <= 0 or self.dim % WORD_BITS:
            raise ConfigError("dim must be a positive multiple of 64")
        if self.levels < 2:
            raise ConfigError("levels must be >= 2")
        if self.dim % (2 * self.levels):
            raise ConfigError("dim must be divisible by 2*levels")
        if self.id_bits not in (1, 2, 3):
            raise ConfigError("id_bits must be 1, 2 or 3")
        if self.chunked:
            if self.dim % self.chunk_count:
                raise ConfigError("chunk_count must divide dim")
            chunk_size = self.dim // self.chunk_count
            flip = self.dim // (2 * self.levels)
            if flip % chunk_size:
                raise ConfigError("flip block D/(2Q) must be a whole number of chunks")
            if (self.levels - 1) * (flip // chunk_size) > self.chunk_count:
                raise ConfigError("not enough chunks for Q-1 disjoint flip blocks")

    @property
    def flip_bits(self) -> int:
        return self.dim // (2 * self.levels)


@dataclass(frozen=True)
class IdFamily:
    """Identity hypervectors for every m/z bin, one row per bin."""

    dim: int
    bits: int
    values: np.ndarray  # (num_bins, dim) int8, no zeros

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __getitem__(self, i: int) -> MultiBitHypervector:
        return MultiBitHypervector(self.dim, self.values[i], self.bits)


@dataclass(frozen=True)
class LevelFamily:
    """Level hypervectors l_0..l_{Q-1}; adjacent levels differ in D/(2Q) bits."""

    dim: int
    Q: int
    vectors: np.ndarray  # (Q, dim) int8 bipolar
    chunked: bool = False
    chunk_count: int | None = None

    def __len__(self) -> int:
        return self.Q

    def level(self, j: int) -> Hypervector:
        return Hypervector.from_bipolar(self.vectors[j])

    def hamming(self, i: int, j: int) -> int:
        return int(np.count_nonzero(self.vectors[i] != self.vectors[j]))


def gen_id_family(num_bins: int, cfg: EncoderConfig) -> IdFamily:
    """Draw num_bins ID hypervectors, components uniform over the signed set.

    The allowed set for b bits is {-2^(b-1) .. -1, 1 .. 2^(b-1)}; zero is
    excluded.  Deterministic given cfg.seed.
    """
    rng = family_rng(cfg.seed, _STREAM_IDS)
    mag = 1 << (cfg.id_bits - 1)
    raw = rng.integers(0, 2 * mag, size=(num_bins, cfg.dim))
    values = np.where(raw < mag, raw - mag, raw - mag + 1).astype(np.int8)
    return IdFamily(cfg.dim, cfg.id_bits, values)


def gen_level_family(cfg: EncoderConfig) -> LevelFamily:
    """Build the level chain by flipping disjoint blocks of D/(2Q) positions.

    Blocks are disjoint, so hamming(l_i, l_j) == |i-j| * D/(2Q) exactly.  In
    chunked mode l_0 is constant within each of chunk_count chunks and flips
    negate whole chunks, keeping every level chunk-constant.
    """
    rng = family_rng(cfg.seed, _STREAM_LEVELS)
    D, Q = cfg.dim, cfg.levels
    fam = np.empty((Q, D), dtype=np.int8)
    pm_one = np.array([-1, 1], dtype=np.int8)

    if cfg.chunked:
        chunk_size = D // cfg.chunk_count
        base = rng.choice(pm_one, size=cfg.chunk_count)
        fam[0] = np.repeat(base, chunk_size)
        chunks_per_flip = cfg.flip_bits // chunk_size
        perm = rng.permutation(cfg.chunk_count)
        cur = fam[0].copy()
        for j in range(1, Q):
            chunks = perm[(j - 1) * chunks_per_flip : j * chunks_per_flip]
            for c in chunks:
                cur[c * chunk_size : (c + 1) * chunk_size] *= -1
            fam[j] = cur
            cur = cur.copy()
    else:
        fam[0] = rng.choice(pm_one, size=D)
        perm = rng.permutation(D)
        cur = fam[0].copy()
        for j in range(1, Q):
            block = perm[(j - 1) * cfg.flip_bits : j * cfg.flip_bits]
            cur[block] *= -1
            fam[j] = cur
            cur = cur.copy()

    return LevelFamily(D, Q, fam, cfg.chunked, cfg.chunk_count if cfg.chunked else None)


def quantize_intensity(intensity: float, Q: int) -> int:
    """Uniformly quantize a normalized intensity in [0, 1] to a level index."""
    if not 0.0 <= intensity <= 1.0:
        raise DomainError(f"intensity {intensity} outside [0, 1]")
    return min(int(intensity * Q), Q - 1)


def _level_indices(values: np.ndarray, Q: int) -> np.ndarray:
    # normalize by the base peak, then floor(v * Q) clamped to Q-1
    normalized = values / values.max()
    return np.minimum((normalized * Q).astype(np.int64), Q - 1)


def encode(binned: BinnedVector, ids: IdFamily, lv: LevelFamily, cfg: EncoderConfig) -> Hypervector:
    """Encode one binned spectrum into a binary hypervector (sign of the
    ID*LV accumulation; a zero sum quantizes to +1)."""
    if ids.dim != cfg.dim or lv.dim != cfg.dim:
        raise DimensionMismatchError("family dimension does not match config")
    if len(binned) == 0:
        # empty accumulator: every dimension ties to +1
        return Hypervector.from_bits(np.ones(cfg.dim, dtype=bool))
    if int(binned.indices[-1]) >= len(ids):
        raise MissingIdError(
            f"bin index {int(binned.indices[-1])} outside ID family of {len(ids)}"
        )
    levels = _level_indices(binned.values, cfg.levels)
    acc = (ids.values[binned.indices].astype(np.int16) * lv.vectors[levels]).sum(
        axis=0, dtype=np.int32
    )
    return Hypervector.from_bits(acc >= 0)


def encode_many(
    binned: Iterable[BinnedVector], ids: IdFamily, lv: LevelFamily, cfg: EncoderConfig
) -> np.ndarray:
    """Encode a batch; returns a packed (count, dim/64) uint64 matrix in input order."""
    rows = [encode(b, ids, lv, cfg).words for b in binned]
    if not rows:
        return np.empty((0, cfg.dim // WORD_BITS), dtype=np.uint64)
    return np.vstack(rows)


def write_store(path: str | Path, packed_or_values: np.ndarray, dim: int, precision_bits: int = 1) -> None:
    """Write a hypervector store.

    Layout: magic "HDV1"; header dim u32, precision bits u8, count u64
    (little-endian); then rows back to back.  Binary rows (precision 1) are
    bit-packed, dim/8 bytes each, little bit order; multi-bit rows are dim
    int8 components.
    """
    arr = np.asarray(packed_or_values)
    if arr.ndim != 2:
        raise DimensionMismatchError("expected a 2-d row matrix")
    if precision_bits == 1:
        if arr.dtype != np.uint64 or arr.shape[1] != dim // WORD_BITS:
            raise DimensionMismatchError("binary store expects packed uint64 rows")
        payload = arr.astype("<u8").tobytes()
    elif precision_bits in (2, 3):
        if arr.shape[1] != dim:
            raise DimensionMismatchError("multi-bit store expects dim int8 columns")
        payload = arr.astype(np.int8).tobytes()
    else:
        raise ConfigError("precision_bits must be 1, 2 or 3")
    with open(path, "wb") as fh:
        fh.write(_STORE_HEADER.pack(STORE_MAGIC, dim, precision_bits, arr.shape[0]))
        fh.write(payload)


class StoreWriter:
    """Incremental store writer, so encoding never holds the full matrix.

    Rows are appended batch by batch; the header's row count is patched in
    on close.  Usable as a context manager.
    """

    def __init__(self, path: str | Path, dim: int, precision_bits: int = 1):
        if precision_bits not in (1, 2, 3):
            raise ConfigError("precision_bits must be 1, 2 or 3")
        self.dim = dim
        self.precision_bits = precision_bits
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(_STORE_HEADER.pack(STORE_MAGIC, dim, precision_bits, 0))

    def add(self, rows: np.ndarray) -> None:
        rows = np.asarray(rows)
        if rows.ndim != 2:
            raise DimensionMismatchError("expected a 2-d row matrix")
        if self.precision_bits == 1:
            if rows.dtype != np.uint64 or rows.shape[1] != self.dim // WORD_BITS:
                raise DimensionMismatchError("binary store expects packed uint64 rows")
            self._fh.write(rows.astype("<u8").tobytes())
        else:
            if rows.shape[1] != self.dim:
                raise DimensionMismatchError("multi-bit store expects dim int8 columns")
            self._fh.write(rows.astype(np.int8).tobytes())
        self.count += rows.shape[0]

    def close(self) -> None:
        self._fh.seek(0)
        self._fh.write(_STORE_HEADER.pack(STORE_MAGIC, self.dim, self.precision_bits, self.count))
        self._fh.close()

    def __enter__(self) -> "StoreWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_store(path: str | Path, mmap: bool = False) -> tuple[np.ndarray, int, int]:
    """Read a store written by :func:`write_store`.

    Returns (rows, dim, precision_bits).  With mmap=True the row matrix is
    memory-mapped read-only, so multi-gigabyte stores never load eagerly.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_STORE_HEADER.size)
    if len(header) < _STORE_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, dim, bits, count = _STORE_HEADER.unpack(header)
    if magic != STORE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if bits == 1:
        shape: tuple[int, int] = (count, dim // WORD_BITS)
        dtype = "<u8"
    elif bits in (2, 3):
        shape = (count, dim)
        dtype = "i1"
    else:
        raise FormatError(f"{path}: unsupported precision {bits}")
    expected = _STORE_HEADER.size + int(np.dtype(dtype).itemsize) * shape[0] * shape[1]
    if path.stat().st_size != expected:
        raise FormatError(f"{path}: size {path.stat().st_size}, expected {expected}")
    if mmap:
        rows = np.memmap(path, mode="r", dtype=dtype, offset=_STORE_HEADER.size, shape=shape)
    else:
        with open(path, "rb") as fh:
            fh.seek(_STORE_HEADER.size)
            rows = np.fromfile(fh, dtype=dtype).reshape(shape)
    if bits == 1:
        rows = rows.view(np.uint64) if rows.dtype != np.uint64 else rows
    return rows, dim, bits
