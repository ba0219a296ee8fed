"""Exact top-k Hamming search over packed hypervectors.

Similarity is the bipolar dot product D - 2*popcount(a XOR b), computed on
64-bit words.  References are held sorted by precursor mass so a mass
window maps to one contiguous slice found by binary search.  The scan is
exhaustive within the window; there is no approximate index.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import DimensionMismatchError, DomainError
from .hd_core import WORD_BITS, Hypervector

try:  # pragma: no cover - exercised implicitly by which path runs
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @numba.njit(
        "void(uint64[:, ::1], uint64[:, ::1], int64[:, ::1])",
        parallel=True,
        nogil=True,
        cache=True,
    )
    def _hamming_block(queries, refs, out):  # pragma: no cover - numba compiled
        nq, width = queries.shape
        nr = refs.shape[0]
        for i in numba.prange(nq):
            qi = queries[i]
            for j in range(nr):
                acc = np.int64(0)
                for w in range(width):
                    x = qi[w] ^ refs[j, w]
                    x = x - ((x >> 1) & np.uint64(0x5555555555555555))
                    x = (x & np.uint64(0x3333333333333333)) + (
                        (x >> 2) & np.uint64(0x3333333333333333)
                    )
                    x = (x + (x >> 4)) & np.uint64(0x0F0F0F0F0F0F0F0F)
                    acc += np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))
                out[i, j] = acc


def hamming_distances(query_words: np.ndarray, ref_words: np.ndarray) -> np.ndarray:
    """Hamming distances of one packed query row against a packed row matrix."""
    query_words = np.ascontiguousarray(query_words, dtype=np.uint64)
    ref_words = np.ascontiguousarray(ref_words, dtype=np.uint64)
    if query_words.shape[-1] != ref_words.shape[-1]:
        raise DimensionMismatchError("packed widths differ")
    if _HAVE_NUMBA:
        out = np.empty((1, ref_words.shape[0]), dtype=np.int64)
        _hamming_block(query_words.reshape(1, -1), ref_words, out)
        return out[0]
    return np.bitwise_count(query_words[None, :] ^ ref_words).sum(axis=1, dtype=np.int64)


@dataclass(frozen=True)
class ScoredMatch:
    query_id: str
    reference_id: str
    similarity: int  # bipolar dot product, in [-D, D]
    is_decoy: bool


@dataclass(frozen=True)
class ReferenceIndex:
    """Packed references sorted by precursor mass."""

    dim: int
    words: np.ndarray  # (count, dim/64) uint64, mass order
    masses: np.ndarray  # (count,) float64 ascending
    ids: np.ndarray  # (count,) str, mass order
    decoy_flags: np.ndarray  # (count,) bool, mass order
    positions: np.ndarray  # (count,) int64, original build order (bijection)

    def __post_init__(self):
        n = self.words.shape[0]
        if not (self.masses.shape == self.ids.shape == self.decoy_flags.shape == (n,)):
            raise DimensionMismatchError("metadata length does not match row count")
        if np.any(np.diff(self.masses) < 0):
            raise ValueError("masses must be sorted ascending")

    def __len__(self) -> int:
        return int(self.words.shape[0])

    @classmethod
    def build(
        cls,
        words: np.ndarray,
        masses: Sequence[float],
        ids: Sequence[str],
        decoy_flags: Sequence[bool],
        dim: int,
    ) -> "ReferenceIndex":
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != dim // WORD_BITS:
            raise DimensionMismatchError(f"expected packed rows of {dim // WORD_BITS} words")
        masses = np.asarray(masses, dtype=np.float64)
        order = np.argsort(masses, kind="stable")
        return cls(
            dim=dim,
            words=np.ascontiguousarray(words[order]),
            masses=masses[order],
            ids=np.asarray(ids, dtype=object)[order],
            decoy_flags=np.asarray(decoy_flags, dtype=bool)[order],
            positions=order.astype(np.int64),
        )


def candidate_range(index: ReferenceIndex, query_mass: float, window: float | None) -> slice:
    """References with |mass - query_mass| <= window, as a contiguous slice.

    window=None (or inf) searches the whole library.
    """
    if window is None or np.isinf(window):
        return slice(0, len(index))
    if window < 0:
        raise DomainError("window must be >= 0")
    lo = int(np.searchsorted(index.masses, query_mass - window, side="left"))
    hi = int(np.searchsorted(index.masses, query_mass + window, side="right"))
    return slice(lo, hi)


def _top_slice(
    query_words: np.ndarray,
    index: ReferenceIndex,
    rows: slice,
    k: int,
    query_id: str,
) -> list[ScoredMatch]:
    lo, hi = rows.start, rows.stop
    n = hi - lo
    if n <= 0:
        return []
    dists = hamming_distances(query_words, index.words[lo:hi])
    sims = index.dim - 2 * dists
    k = min(k, n)
    # partition to the k-th best, then pull in every score tied with it
    kth = np.partition(sims, n - k)[n - k]
    cand = np.nonzero(sims >= kth)[0]
    ranked = sorted(
        cand,
        key=lambda i: (-int(sims[i]), index.ids[lo + i], int(index.positions[lo + i])),
    )[:k]
    return [
        ScoredMatch(
            query_id=query_id,
            reference_id=str(index.ids[lo + i]),
            similarity=int(sims[i]),
            is_decoy=bool(index.decoy_flags[lo + i]),
        )
        for i in ranked
    ]


def hamming_topk(
    query: Hypervector | np.ndarray,
    index: ReferenceIndex,
    k: int,
    rows: slice | None = None,
    query_id: str = "",
) -> list[ScoredMatch]:
    """Top-k matches by Hamming similarity, ties broken by lower reference id."""
    if k < 1:
        raise DomainError("k must be >= 1")
    if isinstance(query, Hypervector):
        if query.dim != index.dim:
            raise DimensionMismatchError(f"query dim {query.dim} != index dim {index.dim}")
        words = query.words
    else:
        words = np.asarray(query, dtype=np.uint64)
        if words.shape != (index.dim // WORD_BITS,):
            raise DimensionMismatchError("query width does not match index")
    return _top_slice(words, index, rows or slice(0, len(index)), k, query_id)


def batch_search(
    query_words: np.ndarray,
    query_ids: Sequence[str],
    query_masses: Sequence[float],
    index: ReferenceIndex,
    window: float | None,
    k: int,
    threads: int | None = None,
) -> list[list[ScoredMatch]]:
    """Search every query; results in query order, independent of thread count."""
    query_words = np.ascontiguousarray(query_words, dtype=np.uint64)
    nq = query_words.shape[0]
    masses = np.asarray(query_masses, dtype=np.float64)

    def one(i: int) -> list[ScoredMatch]:
        rows = candidate_range(index, float(masses[i]), window)
        return _top_slice(query_words[i], index, rows, k, str(query_ids[i]))

    if threads is not None and threads <= 1:
        return [one(i) for i in range(nq)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(nq)))


RESULT_COLUMNS = ("query_id", "rank", "reference_id", "similarity", "is_decoy")


def write_results_csv(
    destination: str | TextIO, per_query: Iterable[list[ScoredMatch]]
) -> int:
    """Write one row per match: query_id, rank, reference_id, similarity, is_decoy."""
    if isinstance(destination, str):
        with open(destination, "w", newline="") as handle:
            return write_results_csv(handle, per_query)
    writer = csv.writer(destination, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    n = 0
    for matches in per_query:
        for rank, m in enumerate(matches, start=1):
            flag = "true" if m.is_decoy else "false"
            writer.writerow((m.query_id, rank, m.reference_id, m.similarity, flag))
            n += 1
    return n
