"""Scripted sweeps over synthetic benchmarks.

Ground truth comes from construction: every query is a perturbed copy of a
known reference (peak dropout, intensity and m/z jitter, and a mass shift
on a random peak subset standing in for an unknown modification), so rank-1
retrieval can be scored exactly.  Sweeps measure retrieval against injected
storage bit errors, encoding dimension, and the crossbar cell/noise grid,
writing one CSV per sweep in deterministic grid order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import hd_core, oms_pipeline, spectra, xbar_sim
from .assoc_search import ReferenceIndex, batch_search
from .errors import ConfigError
from .hd_core import EncoderConfig
from .oms_pipeline import PipelineConfig, fdr_filter, generate_decoys
from .spectra import BinConfig, PreprocessConfig, Spectrum
from .xbar_sim import TIME_BUCKETS, NoiseModel, RramConfig

_STREAM_DATASET = 7
_STREAM_FLIPS = 8


@dataclass(frozen=True)
class SyntheticBenchSpec:
    """Synthetic library + query generator settings."""

    library_size: int = 20000
    query_count: int = 500
    peaks_min: int = 25
    peaks_max: int = 45
    mz_min: float = 100.0
    mz_max: float = 1600.0
    bin_width: float = 0.1
    precursor_min: float = 400.0
    precursor_max: float = 1800.0
    dropout: float = 0.45  # chance a reference peak is missing from the query
    intensity_jitter: float = 1.0  # lognormal sigma on surviving intensities
    mz_jitter: float = 0.02  # Da std-dev on peak positions
    mod_fraction: float = 0.5  # fraction of peaks carrying the modification
    mod_max_shift: float = 60.0  # Da, the shift is uniform in [-max, max]

    def __post_init__(self):
        for name in ("dropout", "mod_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.library_size < 1 or self.query_count < 1:
            raise ConfigError("library_size and query_count must be positive")
        if not 1 <= self.peaks_min <= self.peaks_max:
            raise ConfigError("need peaks_max >= peaks_min >= 1")
        if self.intensity_jitter < 0 or self.mz_jitter < 0 or self.mod_max_shift < 0:
            raise ConfigError("jitter magnitudes must be >= 0")
        if not self.mz_min < self.mz_max:
            raise ConfigError("need mz_min < mz_max")

    @property
    def bin_config(self) -> BinConfig:
        return BinConfig(self.bin_width, self.mz_min, self.mz_max)


def synth_library(
    spec: SyntheticBenchSpec, seed: int
) -> tuple[list[Spectrum], list[Spectrum], list[str]]:
    """Generate (references, queries, truth ids); deterministic given seed.

    The dataset stream depends only on the seed, so encoder settings can
    vary while the underlying spectra stay fixed (paired comparisons).
    """
    rng = hd_core.family_rng(seed, _STREAM_DATASET)
    refs: list[Spectrum] = []
    for i in range(spec.library_size):
        count = int(rng.integers(spec.peaks_min, spec.peaks_max + 1))
        mz = np.sort(rng.uniform(spec.mz_min, spec.mz_max, size=count))
        intensity = rng.uniform(0.05, 1.0, size=count)
        refs.append(
            Spectrum(
                id=f"ref{i:06d}",
                precursor_mass=float(rng.uniform(spec.precursor_min, spec.precursor_max)),
                precursor_charge=2,
                mz=mz,
                intensity=intensity,
            )
        )

    queries: list[Spectrum] = []
    truth: list[str] = []
    sources = rng.integers(0, spec.library_size, size=spec.query_count)
    for j in range(spec.query_count):
        src = refs[int(sources[j])]
        count = len(src)
        keep = rng.random(count) >= spec.dropout
        if keep.sum() < 5:
            # never drop a query below the preprocessing floor
            top = np.argsort(src.intensity)[-5:]
            keep[top] = True
        mz = src.mz[keep].copy()
        intensity = src.intensity[keep] * np.exp(
            spec.intensity_jitter * rng.standard_normal(keep.sum())
        )
        mz += rng.normal(0.0, spec.mz_jitter, size=mz.size)

        delta = float(rng.uniform(-spec.mod_max_shift, spec.mod_max_shift))
        modified = rng.random(mz.size) < spec.mod_fraction
        mz[modified] += delta
        np.clip(mz, spec.mz_min, np.nextafter(spec.mz_max, spec.mz_min), out=mz)

        queries.append(
            Spectrum(
                id=f"query{j:05d}",
                precursor_mass=src.precursor_mass + delta,
                precursor_charge=src.precursor_charge,
                mz=mz,
                intensity=intensity,
            )
        )
        truth.append(src.id)
    return refs, queries, truth


def flip_bits(words: np.ndarray, dim: int, ber: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each packed bit independently with probability ber."""
    if not 0.0 <= ber <= 1.0:
        raise ConfigError("ber must be in [0, 1]")
    out = np.array(words, copy=True)
    if ber == 0.0 or out.size == 0:
        return out
    block = max(1, (64 << 20) // max(dim, 1))  # ~256 MB of float32 per block
    for start in range(0, out.shape[0], block):
        stop = min(start + block, out.shape[0])
        mask = rng.random((stop - start, dim), dtype=np.float32) < ber
        out[start:stop] ^= hd_core.pack_bits(mask)
    return out


@dataclass
class BenchData:
    """Encoded benchmark: decoy-augmented index plus encoded queries."""

    index: ReferenceIndex
    query_words: np.ndarray
    query_ids: list[str]
    query_masses: np.ndarray
    truth: dict[str, str]  # query id -> true reference id


def make_bench(
    spec: SyntheticBenchSpec,
    dataset_seed: int,
    encoder: EncoderConfig,
    with_decoys: bool = True,
) -> BenchData:
    """Generate, preprocess and encode one benchmark instance."""
    refs, queries, truth = synth_library(spec, dataset_seed)
    cfg = PipelineConfig(
        preprocess=PreprocessConfig(),
        binning=spec.bin_config,
        encoder=encoder,
        decoy_seed=dataset_seed,
    )
    ids = hd_core.gen_id_family(cfg.binning.num_bins, encoder)
    lv = hd_core.gen_level_family(encoder)

    cleaned = [spectra.preprocess(r, cfg.preprocess) for r in refs]
    library = list(cleaned)
    if with_decoys:
        library += generate_decoys(cleaned, dataset_seed, (spec.mz_min, spec.mz_max))

    chunks = [w for w, _batch, _rej in oms_pipeline.encode_spectra(library, cfg, ids, lv)]
    ref_words = np.vstack(chunks)
    index = ReferenceIndex.build(
        ref_words,
        [s.precursor_mass for s in library],
        [s.id for s in library],
        [s.is_decoy for s in library],
        encoder.dim,
    )

    q_chunks = []
    kept: list[Spectrum] = []
    for words, batch, _rej in oms_pipeline.encode_spectra(queries, cfg, ids, lv):
        q_chunks.append(words)
        kept.extend(batch)
    q_words = np.vstack(q_chunks)
    truth_map = dict(zip((q.id for q in queries), truth))
    return BenchData(
        index=index,
        query_words=q_words,
        query_ids=[s.id for s in kept],
        query_masses=np.array([s.precursor_mass for s in kept]),
        truth={qid: truth_map[qid] for qid in (s.id for s in kept)},
    )


def search_bench(
    data: BenchData,
    ber: float,
    flip_seed: int,
    fdr_threshold: float = 0.01,
    threads: int | None = 1,
) -> tuple[float, int]:
    """Search the (optionally corrupted) index; returns
    (rank-1 retrieval rate, FDR-accepted count)."""
    index = data.index
    if ber > 0.0:
        rng = hd_core.family_rng(flip_seed, _STREAM_FLIPS)
        flipped = flip_bits(index.words, index.dim, ber, rng)
        index = replace(index, words=flipped)
    matches = batch_search(
        data.query_words,
        data.query_ids,
        data.query_masses,
        index,
        window=None,
        k=1,
        threads=threads,
    )
    rank1 = [m[0] for m in matches if m]
    hits = sum(
        1
        for m in rank1
        if not m.is_decoy and data.truth.get(m.query_id) == m.reference_id
    )
    rate = hits / max(1, len(data.query_ids))
    accepted = fdr_filter(rank1, fdr_threshold).targets_above
    return rate, accepted


@dataclass(frozen=True)
class SweepSpec:
    """Grid definition for one sweep run."""

    kind: str  # robustness | dimension | rram
    dims: tuple[int, ...] = (8192,)
    id_bits: tuple[int, ...] = (1, 3)
    bers: tuple[float, ...] = (0.0, 0.01, 0.05, 0.1)
    fixed_ber: float = 0.05  # dimension sweep operating point
    levels: tuple[int, ...] = (2, 4, 8)
    time_buckets: tuple[str, ...] = TIME_BUCKETS
    rows: tuple[int, ...] = (4, 16, 64)
    seeds: tuple[int, ...] = (0, 1, 2)
    encoder_levels: int = 16
    chunked: bool = False
    chunk_count: int = 64
    adc_bits: int | None = 6
    ber_trials: int = 20000
    nmse_trials: int = 2000
    fdr_threshold: float = 0.01
    bench: SyntheticBenchSpec = field(default_factory=SyntheticBenchSpec)

    def __post_init__(self):
        if self.kind not in ("robustness", "dimension", "rram"):
            raise ConfigError(f"unknown sweep kind {self.kind!r}")
        for name in ("dims", "id_bits", "bers", "levels", "time_buckets", "rows", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        if len(self.seeds) < 3:
            raise ConfigError("need at least 3 seeds")
        for b in self.bers:
            if not 0.0 <= b <= 1.0:
                raise ConfigError("bers must be in [0, 1]")
        for bucket in self.time_buckets:
            if bucket not in TIME_BUCKETS:
                raise ConfigError(f"unknown time bucket {bucket!r}")


def _write_csv(path: str | Path | None, header: Sequence[str], rows: Iterable[Sequence]) -> list[tuple]:
    rows = [tuple(r) for r in rows]
    if path is not None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    return rows


def _encoder_for(spec: SweepSpec, dim: int, id_bits: int, seed: int) -> EncoderConfig:
    return EncoderConfig(
        dim=dim,
        levels=spec.encoder_levels,
        id_bits=id_bits,
        chunked=spec.chunked,
        chunk_count=spec.chunk_count,
        seed=seed,
    )


def sweep_robustness(spec: SweepSpec, out_csv: str | Path | None = None) -> list[tuple]:
    """Retrieval and accepted counts across (D, id_bits, ber, seed).

    Encodings are built once per (D, id_bits, seed) and re-searched per ber;
    rows come out sorted in that column order regardless of execution order.
    """
    results = {}
    for dim in spec.dims:
        for bits in spec.id_bits:
            for seed in spec.seeds:
                data = make_bench(spec.bench, seed, _encoder_for(spec, dim, bits, seed))
                for ber in spec.bers:
                    rate, accepted = search_bench(
                        data, ber, flip_seed=seed, fdr_threshold=spec.fdr_threshold
                    )
                    results[(dim, bits, ber, seed)] = (rate, accepted)
    rows = [
        (dim, bits, ber, seed, f"{results[(dim, bits, ber, seed)][0]:.6f}",
         results[(dim, bits, ber, seed)][1])
        for dim in spec.dims
        for bits in spec.id_bits
        for ber in spec.bers
        for seed in spec.seeds
    ]
    return _write_csv(
        out_csv, ("D", "id_bits", "ber", "seed", "retrieval_rate", "accepted_count"), rows
    )


def sweep_dimension(spec: SweepSpec, out_csv: str | Path | None = None) -> list[tuple]:
    """Retrieval across dimensions at the spec's fixed ber."""
    bits = spec.id_bits[0]
    rows = []
    for dim in spec.dims:
        for seed in spec.seeds:
            data = make_bench(spec.bench, seed, _encoder_for(spec, dim, bits, seed))
            rate, _accepted = search_bench(
                data, spec.fixed_ber, flip_seed=seed, fdr_threshold=spec.fdr_threshold
            )
            rows.append((dim, seed, f"{rate:.6f}"))
    return _write_csv(out_csv, ("D", "seed", "retrieval_rate"), rows)


def sweep_rram(
    spec: SweepSpec,
    out_csv: str | Path | None = None,
    noise: NoiseModel | None = None,
) -> list[tuple]:
    """Cell-level BER and MVM NMSE over (levels, time bucket, active rows).

    Values are means over the spec's seeds; BER does not depend on the row
    count but is repeated per row so each CSV row is self-contained.
    """
    if noise is None:
        noise = NoiseModel.default()
    rows = []
    for levels in spec.levels:
        n = {2: 1, 4: 2, 8: 3}[levels]
        for bucket in spec.time_buckets:
            bers = []
            nmses: dict[int, list[float]] = {r: [] for r in spec.rows}
            for seed in spec.seeds:
                cfg = RramConfig(levels_per_cell=levels, adc_bits=spec.adc_bits, seed=seed)
                rng = hd_core.family_rng(seed, xbar_sim._STREAM_MEASURE)
                bers.append(
                    xbar_sim.measure_ber(cfg, noise, bucket, spec.ber_trials, rng=rng)
                )
                for r in spec.rows:
                    nmses[r].append(
                        xbar_sim.measure_mvm_nmse(
                            cfg, noise, bucket, r, spec.nmse_trials, rng=rng
                        )
                    )
            ber = float(np.mean(bers))
            for r in spec.rows:
                rows.append(
                    (n, bucket, r, f"{ber:.8f}", f"{float(np.mean(nmses[r])):.8f}")
                )
    return _write_csv(out_csv, ("n", "time_bucket", "rows", "ber", "nmse"), rows)
