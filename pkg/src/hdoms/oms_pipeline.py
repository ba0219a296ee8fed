"""End-to-end open modification search.

Stages: ingest references (adding one decoy per target), encode both sides,
search each query against the references within the precursor-mass window,
then estimate the false discovery rate from how many decoys outscore real
references.  An optional hardware-emulation mode routes the encoded vectors
through the crossbar simulator instead of exact arithmetic: query
hypervectors take a multi-bit storage round trip (picking up bit errors)
and similarities are accumulated group-by-group through the sensing
equation and ADC.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import assoc_search, hd_core, spectra, xbar_sim
from .assoc_search import ReferenceIndex, ScoredMatch
from .errors import ConfigError, HdomsError, StageError
from .hd_core import EncoderConfig, WORD_BITS
from .spectra import BinConfig, PreprocessConfig, Spectrum
from .xbar_sim import NoiseModel, RramConfig

_STREAM_DECOYS = 5
_STREAM_EMULATION = 6

META_COLUMNS = ("id", "precursor_mass", "precursor_charge", "is_decoy")


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for a full search run."""

    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    binning: BinConfig = field(default_factory=BinConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    window: float | None = 500.0  # Da half-width; None = whole library
    k: int = 1
    fdr_threshold: float = 0.01
    add_decoys: bool = True
    decoy_seed: int = 0
    emulate_hardware: bool = False
    rram: RramConfig | None = None
    rram_time_bucket: str = "t0"
    noise: NoiseModel | None = None
    threads: int | None = None

    def __post_init__(self):
        if not 0.0 < self.fdr_threshold < 1.0:
            raise ConfigError("fdr_threshold must be in (0, 1)")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.window is not None and self.window < 0:
            raise ConfigError("window must be >= 0 or null")
        if self.emulate_hardware and self.rram is None:
            object.__setattr__(self, "rram", RramConfig())


@dataclass(frozen=True)
class FdrResult:
    """Outcome of the target-decoy filter at one configured threshold."""

    score_threshold: int
    accepted: list[ScoredMatch]
    targets_above: int
    decoys_above: int
    achieved_fdr: float
    threshold_found: bool = True
    min_attainable_fdr: float = 0.0

    @property
    def counts(self) -> tuple[int, int]:
        return (self.targets_above, self.decoys_above)


def generate_decoys(
    references: Sequence[Spectrum],
    seed: int,
    mz_range: tuple[float, float],
    rng: np.random.Generator | None = None,
) -> list[Spectrum]:
    """One decoy per target: cyclic m/z shift by a random 10-50 Da offset.

    Peak m/z values wrap around within mz_range; intensities, precursor mass
    and charge are preserved.  Decoy ids get a DECOY_ prefix and the decoy
    flag set.  Passing an rng continues an existing stream (for chunked
    callers); by default the stream derives from seed alone.
    """
    if rng is None:
        rng = hd_core.family_rng(seed, _STREAM_DECOYS)
    lo, hi = mz_range
    span = hi - lo
    decoys = []
    for ref in references:
        offset = float(rng.uniform(10.0, 50.0))
        shifted = lo + np.mod(ref.mz - lo + offset, span)
        decoys.append(
            Spectrum(
                id=f"DECOY_{ref.id}",
                precursor_mass=ref.precursor_mass,
                precursor_charge=ref.precursor_charge,
                mz=shifted,
                intensity=ref.intensity.copy(),
                is_decoy=True,
                preprocessed=ref.preprocessed,
            )
        )
    return decoys


def fdr_curve(matches: Sequence[ScoredMatch]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per distinct score s (descending): raw decoys/targets estimate and its
    monotonized q-value (cumulative minimum from the top score down)."""
    scores = np.array([m.similarity for m in matches], dtype=np.int64)
    decoy = np.array([m.is_decoy for m in matches], dtype=bool)
    order = np.argsort(-scores, kind="stable")
    scores, decoy = scores[order], decoy[order]
    cum_decoys = np.cumsum(decoy)
    cum_targets = np.cumsum(~decoy)
    # boundaries: last occurrence of each distinct score
    last = np.nonzero(np.diff(scores, append=scores[-1] - 1))[0]
    uniq = scores[last]
    raw = cum_decoys[last] / np.maximum(1, cum_targets[last])
    # q(s) = best estimate reachable by any threshold at or below s, so q is
    # non-increasing as the score threshold rises
    q = np.minimum.accumulate(raw[::-1])[::-1]
    return uniq, raw, q


def fdr_filter(matches: Sequence[ScoredMatch], threshold: float) -> FdrResult:
    """Pick the smallest score s with (#decoys >= s)/max(1, #targets >= s)
    under the threshold and accept the target matches scoring at least s.

    When no observed score qualifies the accepted set is empty and the
    smallest attainable estimate is reported instead.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigError("threshold must be in (0, 1)")
    if not matches:
        return FdrResult(0, [], 0, 0, 0.0, threshold_found=False)
    uniq, raw, q = fdr_curve(matches)
    ok = np.nonzero(raw <= threshold)[0]
    if ok.size == 0:
        return FdrResult(
            score_threshold=int(uniq[0]) + 1,
            accepted=[],
            targets_above=0,
            decoys_above=0,
            achieved_fdr=0.0,
            threshold_found=False,
            min_attainable_fdr=float(raw.min()),
        )
    pick = int(ok[-1])  # uniq is descending, so the last hit is the smallest score
    s = int(uniq[pick])
    accepted = [m for m in matches if m.similarity >= s and not m.is_decoy]
    decoys_above = int(sum(1 for m in matches if m.similarity >= s and m.is_decoy))
    achieved = float(q[pick])
    return FdrResult(
        score_threshold=s,
        accepted=accepted,
        targets_above=len(accepted),
        decoys_above=decoys_above,
        achieved_fdr=achieved,
        min_attainable_fdr=float(raw.min()),
    )


def write_store_meta(path: str | Path, spectra_list: Iterable[Spectrum]) -> str:
    """Write the sidecar CSV carrying per-row search metadata for a store."""
    meta_path = str(path) + ".meta.csv"
    with open(meta_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(META_COLUMNS)
        for s in spectra_list:
            writer.writerow(
                (s.id, f"{s.precursor_mass:.6f}", s.precursor_charge, "true" if s.is_decoy else "false")
            )
    return meta_path


def read_store_meta(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Read a store sidecar; returns (ids, masses, charges, decoy flags)."""
    meta_path = str(path) + ".meta.csv"
    ids: list[str] = []
    masses: list[float] = []
    charges: list[int] = []
    flags: list[bool] = []
    with open(meta_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != META_COLUMNS:
            raise ConfigError(f"{meta_path}: expected columns {','.join(META_COLUMNS)}")
        for row in reader:
            ids.append(row[0])
            masses.append(float(row[1]))
            charges.append(int(row[2]))
            flags.append(row[3] == "true")
    return ids, np.asarray(masses), np.asarray(charges, dtype=np.int64), np.asarray(flags, dtype=bool)


def encode_spectra(
    source: Iterable[Spectrum],
    cfg: PipelineConfig,
    ids: hd_core.IdFamily,
    lv: hd_core.LevelFamily,
    chunk: int = 4096,
) -> Iterator[tuple[np.ndarray, list[Spectrum], int]]:
    """Preprocess, bin and encode spectra in bounded chunks.

    Yields (packed rows, the spectra they came from, rejected count); spectra
    rejected by the peak filter are skipped and counted, never fatal.
    """
    batch: list[Spectrum] = []
    rejected = 0
    for spec in source:
        try:
            batch.append(spectra.preprocess(spec, cfg.preprocess))
        except HdomsError:
            rejected += 1
            continue
        if len(batch) >= chunk:
            binned = (spectra.bin_spectrum(s, cfg.binning) for s in batch)
            yield hd_core.encode_many(binned, ids, lv, cfg.encoder), batch, rejected
            batch, rejected = [], 0
    if batch or rejected:
        binned = (spectra.bin_spectrum(s, cfg.binning) for s in batch)
        yield hd_core.encode_many(binned, ids, lv, cfg.encoder), batch, rejected


def emulate_query_storage(
    words: np.ndarray, cfg: PipelineConfig, rng: np.random.Generator
) -> np.ndarray:
    """Round-trip packed query hypervectors through n-bit cell storage.

    Dimensions that do not divide by the cell width get zero bits appended
    for the last cell and trimmed again after readback.
    """
    rram = cfg.rram
    assert rram is not None
    n = rram.bits_per_cell
    dim = cfg.encoder.dim
    bits = hd_core.unpack_bits(words, dim)
    pad = (-dim) % n
    if pad:
        bits = np.pad(bits, ((0, 0), (0, pad)))
    g = xbar_sim.store_hypervector(bits.astype(bool), n, rram)
    noisy = xbar_sim._apply_noise(g, rram, cfg.noise, cfg.rram_time_bucket, rng)
    back = xbar_sim.read_hypervector(noisy, n, rram)
    if pad:
        back = back[:, :dim]
    return hd_core.pack_bits(back)


def _emulated_search(
    query_words: np.ndarray,
    query_ids: Sequence[str],
    query_masses: np.ndarray,
    index: ReferenceIndex,
    cfg: PipelineConfig,
    rng: np.random.Generator,
) -> list[list[ScoredMatch]]:
    """Search with similarities accumulated through the sensing path.

    References are held as differential pairs (one column per reference,
    programmed once with relaxation noise); each query drives its bits in
    groups of N pairs and the per-group MACs pass through the ADC before
    digital accumulation.  With sigma 0 and a continuous ADC this equals
    the exact search bit for bit.  Cost is O(queries x refs x D) float
    work: a desk-scale path, not the packed production kernel.
    """
    rram = cfg.rram
    assert rram is not None
    dim = index.dim
    n_rows = rram.max_active_rows
    groups = -(-dim // n_rows)
    pad = groups * n_rows - dim

    ref_bits = hd_core.unpack_bits(np.asarray(index.words), dim)
    ref_w = np.where(ref_bits, 1.0, -1.0).astype(np.float32)
    scale = replace(rram, w_max=1.0)
    g_plus, g_minus = xbar_sim.map_differential(ref_w, scale)
    g_plus = xbar_sim._apply_noise(g_plus, scale, cfg.noise, cfg.rram_time_bucket, rng)
    g_minus = xbar_sim._apply_noise(g_minus, scale, cfg.noise, cfg.rram_time_bucket, rng)
    diff = (g_plus - g_minus).astype(np.float32)  # (refs, dim)
    if pad:
        diff = np.pad(diff, ((0, 0), (0, pad)))
    diff = diff.reshape(len(index), groups, n_rows)

    out: list[list[ScoredMatch]] = []
    for qi in range(query_words.shape[0]):
        rows = assoc_search.candidate_range(index, float(query_masses[qi]), cfg.window)
        lo, hi = rows.start, rows.stop
        if hi <= lo:
            out.append([])
            continue
        q_bits = hd_core.unpack_bits(query_words[qi], dim)
        x = np.where(q_bits, 1.0, -1.0).astype(np.float32)
        if pad:
            x = np.pad(x, (0, pad))
        x = x.reshape(groups, n_rows)
        s = np.einsum("rgk,gk->rg", diff[lo:hi], x, optimize=True) / (
            n_rows * scale.g_max
        )
        v = scale.v_ref + s * scale.v_pulse
        if scale.adc_bits is None:
            mac = xbar_sim.decode_mac(v, scale)
        else:
            mac = xbar_sim.decode_mac(xbar_sim.adc_quantize(v, scale), scale, from_codes=True)
        sims = np.rint(mac.sum(axis=1)).astype(np.int64)
        np.clip(sims, -dim, dim, out=sims)

        k = min(cfg.k, hi - lo)
        kth = np.partition(sims, sims.size - k)[sims.size - k]
        cand = np.nonzero(sims >= kth)[0]
        ranked = sorted(
            cand,
            key=lambda i: (-int(sims[i]), index.ids[lo + i], int(index.positions[lo + i])),
        )[:k]
        out.append(
            [
                ScoredMatch(
                    query_id=str(query_ids[qi]),
                    reference_id=str(index.ids[lo + i]),
                    similarity=int(sims[i]),
                    is_decoy=bool(index.decoy_flags[lo + i]),
                )
                for i in ranked
            ]
        )
    return out


@dataclass
class StageReport:
    name: str
    seconds: float
    counts: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "seconds": round(self.seconds, 4), "counts": self.counts}


@dataclass
class RunReport:
    status: str = "ok"
    failed_stage: str | None = None
    error: str | None = None
    stages: list[StageReport] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    fdr: dict | None = None
    results_csv: str | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "config": self.config,
            "stages": [s.to_dict() for s in self.stages],
            "fdr": self.fdr,
            "results_csv": self.results_csv,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


class _StageTimer:
    def __init__(self, report: RunReport):
        self.report = report

    def run(self, name: str, fn, **counts):
        start = time.perf_counter()
        try:
            result = fn()
        except (HdomsError, OSError) as exc:
            self.report.status = "error"
            self.report.failed_stage = name
            self.report.error = str(exc)
            raise StageError(name, str(exc)) from exc
        self.report.stages.append(
            StageReport(name, time.perf_counter() - start, dict(counts))
        )
        return result


def _load_side(path: str, cfg: PipelineConfig):
    """Load one input: an MGF of spectra or a prebuilt store + sidecar.

    Returns (packed words or None, spectra list or None, ids, masses,
    decoy flags).
    """
    if str(path).endswith(".hdv"):
        words, dim, bits = hd_core.read_store(path, mmap=True)
        if bits != 1:
            raise ConfigError(f"{path}: search needs a binary store, got {bits}-bit")
        if dim != cfg.encoder.dim:
            raise ConfigError(f"{path}: store dim {dim} != configured {cfg.encoder.dim}")
        ids, masses, _charges, flags = read_store_meta(path)
        if len(ids) != words.shape[0]:
            raise ConfigError(f"{path}: sidecar rows != store rows")
        return np.asarray(words), None, ids, masses, flags
    loaded = list(spectra.load_mgf(path))
    if not loaded:
        raise ConfigError(f"{path}: no spectra")
    return None, loaded, None, None, None


def run_pipeline(
    query_path: str,
    ref_path: str,
    cfg: PipelineConfig,
    results_path: str | Path | None = None,
    report_path: str | Path | None = None,
) -> tuple[RunReport, FdrResult | None]:
    """Run the full search; returns (report, FDR result).

    Inputs may be MGF files or .hdv stores with sidecars.  Stage failures
    raise StageError after stamping the report (written to report_path when
    given, even on failure).
    """
    report = RunReport(
        config={
            "dim": cfg.encoder.dim,
            "levels": cfg.encoder.levels,
            "id_bits": cfg.encoder.id_bits,
            "chunked": cfg.encoder.chunked,
            "seed": cfg.encoder.seed,
            "window": cfg.window,
            "k": cfg.k,
            "fdr_threshold": cfg.fdr_threshold,
            "emulate_hardware": cfg.emulate_hardware,
        }
    )
    timer = _StageTimer(report)
    try:
        fdr = _run_stages(query_path, ref_path, cfg, results_path, report, timer)
    finally:
        if report_path is not None:
            report.write(report_path)
    return report, fdr


def _run_stages(
    query_path: str,
    ref_path: str,
    cfg: PipelineConfig,
    results_path: str | Path | None,
    report: RunReport,
    timer: _StageTimer,
) -> FdrResult | None:
    families: tuple[hd_core.IdFamily, hd_core.LevelFamily] | None = None

    def get_families() -> tuple[hd_core.IdFamily, hd_core.LevelFamily]:
        # built on first encode; store-only runs never pay for this
        nonlocal families
        if families is None:
            families = (
                hd_core.gen_id_family(cfg.binning.num_bins, cfg.encoder),
                hd_core.gen_level_family(cfg.encoder),
            )
        return families

    ref_words, ref_specs, ref_ids, ref_masses, ref_flags = timer.run(
        "ingest-references", lambda: _load_side(ref_path, cfg)
    )
    report.stages[-1].counts.update(
        parsed=len(ref_specs) if ref_specs is not None else int(ref_words.shape[0])
    )

    if ref_specs is not None:
        if cfg.add_decoys:
            def make_decoys():
                cleaned = []
                rejected = 0
                for s in ref_specs:
                    try:
                        cleaned.append(spectra.preprocess(s, cfg.preprocess))
                    except HdomsError:
                        rejected += 1
                mz_range = (cfg.binning.min_mz, cfg.binning.max_mz)
                return cleaned, generate_decoys(cleaned, cfg.decoy_seed, mz_range), rejected

            targets, decoys, n_rejected = timer.run("generate-decoys", make_decoys)
            report.stages[-1].counts.update(
                targets=len(targets), decoys=len(decoys), rejected=n_rejected
            )
            library = targets + decoys
        else:
            library, n_rejected = ref_specs, 0

        def encode_refs():
            ids, lv = get_families()
            chunks = []
            kept: list[Spectrum] = []
            rejected = n_rejected
            for words, batch, skipped in encode_spectra(library, cfg, ids, lv):
                chunks.append(words)
                kept.extend(batch)
                rejected += skipped
            packed = np.vstack(chunks) if chunks else np.empty(
                (0, cfg.encoder.dim // WORD_BITS), dtype=np.uint64
            )
            return packed, kept, rejected

        ref_words, kept, ref_rejected = timer.run("encode-references", encode_refs)
        ref_ids = [s.id for s in kept]
        ref_masses = np.array([s.precursor_mass for s in kept])
        ref_flags = np.array([s.is_decoy for s in kept], dtype=bool)
        report.stages[-1].counts.update(
            encoded=len(kept), rejected=ref_rejected, decoys=int(ref_flags.sum())
        )

    index = ReferenceIndex.build(ref_words, ref_masses, ref_ids, ref_flags, cfg.encoder.dim)

    q_words, q_specs, q_ids, q_masses, _q_flags = timer.run(
        "ingest-queries", lambda: _load_side(query_path, cfg)
    )
    report.stages[-1].counts.update(
        parsed=len(q_specs) if q_specs is not None else int(q_words.shape[0])
    )
    if q_specs is not None:
        def encode_queries():
            ids, lv = get_families()
            chunks = []
            kept: list[Spectrum] = []
            rejected = 0
            for words, batch, skipped in encode_spectra(q_specs, cfg, ids, lv):
                chunks.append(words)
                kept.extend(batch)
                rejected += skipped
            packed = np.vstack(chunks) if chunks else np.empty(
                (0, cfg.encoder.dim // WORD_BITS), dtype=np.uint64
            )
            return packed, kept, rejected

        q_words, q_kept, q_rejected = timer.run("encode-queries", encode_queries)
        q_ids = [s.id for s in q_kept]
        q_masses = np.array([s.precursor_mass for s in q_kept])
        report.stages[-1].counts.update(encoded=len(q_kept), rejected=q_rejected)
    else:
        q_masses = np.asarray(q_masses)

    if q_words.shape[0] == 0:
        report.status = "error"
        report.failed_stage = "encode-queries"
        report.error = "no queries survived preprocessing"
        raise StageError("encode-queries", "no queries survived preprocessing")

    if cfg.emulate_hardware:
        rng = hd_core.family_rng(cfg.encoder.seed, _STREAM_EMULATION)
        q_words = timer.run(
            "emulate-query-storage", lambda: emulate_query_storage(q_words, cfg, rng)
        )
        matches = timer.run(
            "search",
            lambda: _emulated_search(q_words, q_ids, q_masses, index, cfg, rng),
            queries=len(q_ids),
            references=len(index),
        )
    else:
        matches = timer.run(
            "search",
            lambda: assoc_search.batch_search(
                q_words, q_ids, q_masses, index, cfg.window, cfg.k, cfg.threads
            ),
            queries=len(q_ids),
            references=len(index),
        )

    if results_path is not None:
        assoc_search.write_results_csv(str(results_path), matches)
        report.results_csv = str(results_path)

    rank1 = [m[0] for m in matches if m]
    fdr = timer.run("fdr", lambda: fdr_filter(rank1, cfg.fdr_threshold))
    report.fdr = {
        "score_threshold": fdr.score_threshold,
        "targets_above": fdr.targets_above,
        "decoys_above": fdr.decoys_above,
        "achieved_fdr": round(fdr.achieved_fdr, 6),
        "threshold_found": fdr.threshold_found,
        "accepted": len(fdr.accepted),
    }
    return fdr
