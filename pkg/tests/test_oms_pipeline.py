import json

import numpy as np
import pytest

from hdoms.assoc_search import ScoredMatch
from hdoms.errors import ConfigError, StageError
from hdoms.hd_core import EncoderConfig, encode_many, gen_id_family, gen_level_family
from hdoms.oms_pipeline import (
    PipelineConfig,
    encode_spectra,
    fdr_curve,
    fdr_filter,
    generate_decoys,
    read_store_meta,
    run_pipeline,
    write_store_meta,
)
from hdoms.spectra import BinConfig, Spectrum, bin_spectrum, preprocess, write_mgf
from hdoms.xbar_sim import NoiseModel, RramConfig

from conftest import make_spectrum


def small_cfg(**kw):
    enc = EncoderConfig(dim=1024, levels=16, id_bits=1, seed=3)
    base = dict(
        binning=BinConfig(0.1, 100.0, 1600.0),
        encoder=enc,
        window=None,
        fdr_threshold=0.05,
    )
    base.update(kw)
    return PipelineConfig(**base)


# ---------------------------------------------------------------- decoys


def test_decoys_preserve_everything_but_mz():
    refs = [make_spectrum(seed=i, sid=f"r{i}") for i in range(20)]
    decoys = generate_decoys(refs, seed=4, mz_range=(100.0, 1600.0))
    assert len(decoys) == len(refs)
    for ref, dec in zip(refs, decoys):
        assert dec.id == f"DECOY_{ref.id}"
        assert dec.is_decoy
        assert dec.precursor_mass == ref.precursor_mass
        assert dec.precursor_charge == ref.precursor_charge
        assert np.allclose(np.sort(dec.intensity), np.sort(ref.intensity))
        assert len(dec) == len(ref)
        assert dec.mz.min() >= 100.0 and dec.mz.max() < 1600.0
        assert not np.allclose(np.sort(dec.mz), ref.mz)


def test_decoys_deterministic_per_seed():
    refs = [make_spectrum(seed=1, sid="r")]
    a = generate_decoys(refs, 7, (100.0, 1600.0))
    b = generate_decoys(refs, 7, (100.0, 1600.0))
    c = generate_decoys(refs, 8, (100.0, 1600.0))
    assert np.array_equal(a[0].mz, b[0].mz)
    assert not np.array_equal(a[0].mz, c[0].mz)


def test_decoy_encodings_near_orthogonal_to_targets():
    cfg = small_cfg()
    refs = [preprocess(make_spectrum(seed=100 + i, sid=f"r{i}")) for i in range(40)]
    decoys = generate_decoys(refs, 5, (100.0, 1600.0))
    ids = gen_id_family(cfg.binning.num_bins, cfg.encoder)
    lv = gen_level_family(cfg.encoder)
    tw = encode_many([bin_spectrum(s, cfg.binning) for s in refs], ids, lv, cfg.encoder)
    dw = encode_many([bin_spectrum(s, cfg.binning) for s in decoys], ids, lv, cfg.encoder)
    dim = cfg.encoder.dim
    sims = []
    for t, d in zip(tw, dw):
        ham = int(np.bitwise_count(t ^ d).sum())
        sims.append((dim - 2 * ham) / dim)
    # a decoy should look unrelated to the target it came from
    assert float(np.mean(np.abs(sims))) < 0.1


# ---------------------------------------------------------------- fdr


def mix(rng, n_targets, n_decoys, span=60):
    ms = []
    for i in range(n_targets):
        ms.append(ScoredMatch("q", f"t{i}", int(rng.integers(0, span)), False))
    for i in range(n_decoys):
        ms.append(ScoredMatch("q", f"d{i}", int(rng.integers(0, span)), True))
    return ms


def oracle_fdr(matches, threshold):
    """Exhaustive scan over every observed score as candidate threshold."""
    scores = sorted({m.similarity for m in matches})
    best = None
    for s in scores:
        decoys = sum(1 for m in matches if m.is_decoy and m.similarity >= s)
        targets = sum(1 for m in matches if not m.is_decoy and m.similarity >= s)
        est = decoys / max(1, targets)
        if est <= threshold:
            best = (s, est, targets, decoys)
            break  # scores ascend, first hit is the smallest
    return best


def test_fdr_filter_agrees_with_exhaustive_oracle():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n_t = int(rng.integers(1, 40))
        n_d = int(rng.integers(0, 40))
        matches = mix(rng, n_t, n_d)
        threshold = float(rng.uniform(0.01, 0.5))
        got = fdr_filter(matches, threshold)
        expect = oracle_fdr(matches, threshold)
        if expect is None:
            assert not got.threshold_found
            assert got.accepted == []
        else:
            s, est, targets, decoys = expect
            assert got.threshold_found
            assert got.score_threshold == s
            assert got.targets_above == targets
            assert got.decoys_above == decoys
            assert got.achieved_fdr == pytest.approx(est)
            assert all(m.similarity >= s and not m.is_decoy for m in got.accepted)
            assert len(got.accepted) == targets


def test_fdr_monotonicity_invariants():
    rng = np.random.default_rng(1)
    for trial in range(100):
        matches = mix(rng, int(rng.integers(5, 30)), int(rng.integers(1, 30)))
        uniq, raw, q = fdr_curve(matches)
        assert np.all(np.diff(uniq) < 0)  # descending unique scores
        # q is non-increasing as the score threshold rises
        assert np.all(np.diff(q[::-1]) <= 1e-15)
        assert np.all(q <= raw + 1e-15)
        # accepted set grows (weakly) with the allowed fdr
        last = -1
        for t in (0.01, 0.05, 0.1, 0.2, 0.5):
            res = fdr_filter(matches, t)
            assert res.achieved_fdr <= t + 1e-12
            assert len(res.accepted) >= last
            last = len(res.accepted)


def test_fdr_worked_example():
    matches = [
        ScoredMatch("q", "t0", 10, False),
        ScoredMatch("q", "t1", 9, False),
        ScoredMatch("q", "d0", 8, True),
        ScoredMatch("q", "t2", 7, False),
        ScoredMatch("q", "t3", 5, False),
        ScoredMatch("q", "d1", 4, True),
    ]
    res = fdr_filter(matches, 0.34)
    assert res.score_threshold == 5
    assert sorted(m.similarity for m in res.accepted) == [5, 7, 9, 10]
    assert res.achieved_fdr == pytest.approx(0.25)
    assert res.decoys_above == 1


def test_fdr_no_attainable_threshold():
    matches = [
        ScoredMatch("q", "d0", 50, True),
        ScoredMatch("q", "t0", 10, False),
    ]
    res = fdr_filter(matches, 0.05)
    assert not res.threshold_found
    assert res.accepted == []
    assert res.min_attainable_fdr > 0.05
    assert res.achieved_fdr == 0.0


def test_fdr_input_validation():
    with pytest.raises(ConfigError):
        fdr_filter([], 1.5)
    res = fdr_filter([], 0.05)
    assert res.accepted == [] and not res.threshold_found


# ---------------------------------------------------------------- stores


def test_store_meta_round_trip(tmp_path):
    path = str(tmp_path / "lib.hdv")
    specs = [make_spectrum(seed=i, sid=f"s{i}") for i in range(5)]
    specs[2] = generate_decoys([specs[2]], 0, (100.0, 1600.0))[0]
    write_store_meta(path, specs)
    ids, masses, charges, flags = read_store_meta(path)
    assert ids == [s.id for s in specs]
    assert np.allclose(masses, [s.precursor_mass for s in specs], atol=1e-6)
    assert list(charges) == [s.precursor_charge for s in specs]
    assert list(flags) == [s.is_decoy for s in specs]


def test_encode_spectra_counts_rejections():
    cfg = small_cfg()
    good = [make_spectrum(seed=i, sid=f"g{i}") for i in range(6)]
    bad = Spectrum("bad", 500.0, 2, np.array([100.0, 200.0]), np.array([1.0, 1.0]))
    ids = gen_id_family(cfg.binning.num_bins, cfg.encoder)
    lv = gen_level_family(cfg.encoder)
    out = list(encode_spectra(good[:3] + [bad] + good[3:], cfg, ids, lv))
    total = sum(w.shape[0] for w, _, _ in out)
    rejected = sum(r for _, _, r in out)
    assert total == 6 and rejected == 1


# ---------------------------------------------------------------- pipeline


@pytest.fixture(scope="module")
def bench_files(tmp_path_factory, small_dataset_module=None):
    from hdoms.experiments import SyntheticBenchSpec, synth_library

    tmp = tmp_path_factory.mktemp("bench")
    spec = SyntheticBenchSpec(library_size=150, query_count=25)
    refs, queries, truth = synth_library(spec, seed=2)
    ref_path = str(tmp / "refs.mgf")
    q_path = str(tmp / "queries.mgf")
    write_mgf(refs, ref_path)
    write_mgf(queries, q_path)
    return ref_path, q_path, truth


def test_run_pipeline_end_to_end(bench_files, tmp_path):
    ref_path, q_path, truth = bench_files
    out = str(tmp_path / "results.csv")
    rep_path = str(tmp_path / "report.json")
    report, fdr = run_pipeline(q_path, ref_path, small_cfg(), out, rep_path)
    assert report.status == "ok"
    assert fdr is not None
    lines = open(out).read().splitlines()
    assert lines[0] == "query_id,rank,reference_id,similarity,is_decoy"
    assert len(lines) == 26  # header + one rank-1 row per query
    data = json.loads(open(rep_path).read())
    names = [s["name"] for s in data["stages"]]
    assert names == [
        "ingest-references",
        "generate-decoys",
        "encode-references",
        "ingest-queries",
        "encode-queries",
        "search",
        "fdr",
    ]
    assert data["status"] == "ok"
    assert data["fdr"]["accepted"] == len(fdr.accepted)
    assert data["stages"][1]["counts"]["decoys"] == 150
    # most queries should find their true source in a library this small
    hits = 0
    for line in lines[1:]:
        qid, _, rid, _, _ = line.split(",")
        if truth[int(qid[5:])] == rid:
            hits += 1
    assert hits > 15


def test_run_pipeline_store_inputs_match_mgf(bench_files, tmp_path):
    ref_path, q_path, _ = bench_files
    cfg = small_cfg()
    direct = str(tmp_path / "direct.csv")
    run_pipeline(q_path, ref_path, cfg, direct)

    # pre-encode the references (with decoys) into a store, then search that
    from hdoms.hd_core import StoreWriter, gen_id_family, gen_level_family
    from hdoms.spectra import load_mgf

    ids = gen_id_family(cfg.binning.num_bins, cfg.encoder)
    lv = gen_level_family(cfg.encoder)
    refs = list(load_mgf(ref_path))
    cleaned = [preprocess(s, cfg.preprocess) for s in refs]
    library = cleaned + generate_decoys(
        cleaned, cfg.decoy_seed, (cfg.binning.min_mz, cfg.binning.max_mz)
    )
    store = str(tmp_path / "refs.hdv")
    with StoreWriter(store, cfg.encoder.dim) as w:
        for words, batch, _ in encode_spectra(library, cfg, ids, lv):
            w.add(words)
    write_store_meta(store, library)

    via_store = str(tmp_path / "store.csv")
    run_pipeline(q_path, store, cfg, via_store)
    assert open(direct).read() == open(via_store).read()


def test_run_pipeline_stage_failure_stamps_report(tmp_path):
    bad = str(tmp_path / "missing.mgf")
    rep = str(tmp_path / "report.json")
    with pytest.raises(StageError) as err:
        run_pipeline(bad, bad, small_cfg(), None, rep)
    assert err.value.stage == "ingest-references"
    data = json.loads(open(rep).read())
    assert data["status"] == "error"
    assert data["failed_stage"] == "ingest-references"
    assert data["error"]


def test_run_pipeline_store_dim_mismatch(bench_files, tmp_path):
    ref_path, q_path, _ = bench_files
    cfg = small_cfg()
    store = str(tmp_path / "refs.hdv")
    from hdoms.hd_core import write_store

    write_store(store, np.zeros((3, 8), dtype=np.uint64), dim=512)
    write_store_meta(store, [make_spectrum(seed=i, sid=f"x{i}") for i in range(3)])
    with pytest.raises(StageError):
        run_pipeline(q_path, store, cfg)


def test_emulated_search_with_ideal_hardware_matches_exact(bench_files, tmp_path):
    ref_path, q_path, _ = bench_files
    ideal = RramConfig(levels_per_cell=8, adc_bits=None)
    exact_csv = str(tmp_path / "exact.csv")
    emu_csv = str(tmp_path / "emu.csv")
    run_pipeline(q_path, ref_path, small_cfg(), exact_csv)
    run_pipeline(
        q_path,
        ref_path,
        small_cfg(emulate_hardware=True, rram=ideal, noise=None),
        emu_csv,
    )
    assert open(exact_csv).read() == open(emu_csv).read()


def test_emulated_search_with_noise_still_finds_most(bench_files, tmp_path):
    ref_path, q_path, truth = bench_files
    cfg = small_cfg(
        emulate_hardware=True,
        rram=RramConfig(levels_per_cell=4, adc_bits=8),
        noise=NoiseModel.default(),
        rram_time_bucket="60min",
    )
    out = str(tmp_path / "noisy.csv")
    report, _ = run_pipeline(q_path, ref_path, cfg, out)
    assert report.status == "ok"
    stage_names = [s.name for s in report.stages]
    assert "emulate-query-storage" in stage_names
    hits = 0
    for line in open(out).read().splitlines()[1:]:
        qid, _, rid, _, _ = line.split(",")
        if truth[int(qid[5:])] == rid:
            hits += 1
    assert hits > 12  # noise hurts but must not collapse retrieval


def test_pipeline_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(fdr_threshold=0.0)
    with pytest.raises(ConfigError):
        PipelineConfig(k=0)
    with pytest.raises(ConfigError):
        PipelineConfig(window=-5.0)
    cfg = PipelineConfig(emulate_hardware=True)
    assert cfg.rram is not None  # auto-filled
