import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdoms.errors import ConfigError, DimensionMismatchError, DomainError, MissingIdError
from hdoms.hd_core import (
    EncoderConfig,
    Hypervector,
    StoreWriter,
    encode,
    encode_many,
    family_rng,
    gen_id_family,
    gen_level_family,
    pack_bits,
    quantize_intensity,
    read_store,
    unpack_bits,
    write_store,
)
from hdoms.spectra import BinnedVector


def bv(indices, values, num_bins=500):
    return BinnedVector(
        "q",
        np.asarray(indices, dtype=np.int64),
        np.asarray(values, dtype=np.float64),
        num_bins,
        0.1,
        (100.0, 1600.0),
        0,
    )


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(0)
    for dim in (64, 128, 1024):
        bits = rng.integers(0, 2, size=dim).astype(np.uint8)
        assert np.array_equal(unpack_bits(pack_bits(bits), dim), bits)


def test_hypervector_hamming_matches_bit_count():
    rng = np.random.default_rng(1)
    a = Hypervector.random(512, rng)
    b = Hypervector.random(512, rng)
    expect = int(np.sum(a.to_bits() != b.to_bits()))
    assert a.hamming(b) == expect
    assert a.dot(b) == 512 - 2 * expect
    assert a.dot(a) == 512
    assert a.hamming(a) == 0


def test_hypervector_dot_equals_bipolar_dot():
    rng = np.random.default_rng(2)
    a = Hypervector.random(256, rng)
    b = Hypervector.random(256, rng)
    assert a.dot(b) == int(a.to_bipolar() @ b.to_bipolar())


def test_hypervector_dimension_mismatch():
    rng = np.random.default_rng(3)
    with pytest.raises(DimensionMismatchError):
        Hypervector.random(128, rng).hamming(Hypervector.random(256, rng))


def test_encoder_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(dim=100)  # not a multiple of 64
    with pytest.raises(ConfigError):
        EncoderConfig(dim=128, levels=100)  # dim % 2Q != 0
    with pytest.raises(ConfigError):
        EncoderConfig(id_bits=4)
    with pytest.raises(ConfigError):
        EncoderConfig(dim=1024, chunked=True, chunk_count=7)  # chunk_count must divide dim
    cfg = EncoderConfig(dim=1024, levels=16)
    assert cfg.flip_bits == 1024 // 32


def test_id_family_values_exclude_zero():
    for bits, mag in ((1, 1), (2, 2), (3, 4)):
        cfg = EncoderConfig(dim=256, levels=4, id_bits=bits, seed=9)
        fam = gen_id_family(50, cfg)
        vals = np.unique(fam.values)
        assert 0 not in vals
        assert vals.min() == -mag and vals.max() == mag
        expect = set(range(-mag, 0)) | set(range(1, mag + 1))
        assert set(vals.tolist()) <= expect
        # all magnitudes appear for a family this large
        assert set(vals.tolist()) == expect


def test_level_family_exact_hamming_ladder():
    cfg = EncoderConfig(dim=1024, levels=16, seed=4)
    lv = gen_level_family(cfg)
    step = cfg.flip_bits
    for i in range(16):
        for j in range(16):
            assert lv.hamming(i, j) == abs(i - j) * step
    # endpoints differ in exactly half the positions
    assert lv.hamming(0, 15) == 15 * step


def test_level_family_chunked_ladder_and_structure():
    cfg = EncoderConfig(dim=1024, levels=8, chunked=True, chunk_count=32, seed=4)
    lv = gen_level_family(cfg)
    step = cfg.flip_bits
    for i in range(8):
        for j in range(8):
            assert lv.hamming(i, j) == abs(i - j) * step
    # each level vector is constant within every chunk
    chunk = 1024 // 32
    vecs = lv.vectors.reshape(8, 32, chunk)
    assert np.all(vecs == vecs[:, :, :1])


def test_chunked_config_needs_enough_chunks():
    # flips per step = 512/(2*16) = 16 bits = 4 chunks of 4; 15 steps * 4 > 8 chunks
    with pytest.raises(ConfigError):
        EncoderConfig(dim=512, levels=16, chunked=True, chunk_count=8)


def test_quantize_intensity():
    assert quantize_intensity(0.0, 16) == 0
    assert quantize_intensity(1.0, 16) == 15
    assert quantize_intensity(0.5, 16) == 8
    assert quantize_intensity(0.999, 16) == 15
    with pytest.raises(DomainError):
        quantize_intensity(1.5, 16)
    with pytest.raises(DomainError):
        quantize_intensity(-0.1, 16)


def scalar_encode(binned, ids, lv, cfg):
    """Independent oracle: per-dimension integer sums, pure python."""
    Q = cfg.levels
    peak_max = binned.values.max()
    acc = np.zeros(cfg.dim, dtype=np.int64)
    for idx, val in zip(binned.indices, binned.values):
        q = min(int((val / peak_max) * Q), Q - 1)
        acc += ids.values[idx].astype(np.int64) * lv.vectors[q].astype(np.int64)
    bits = (acc >= 0).astype(np.uint8)  # ties break positive
    return bits


@pytest.mark.parametrize("id_bits", [1, 2, 3])
def test_encode_matches_scalar_oracle(id_bits):
    cfg = EncoderConfig(dim=512, levels=16, id_bits=id_bits, seed=21)
    ids = gen_id_family(300, cfg)
    lv = gen_level_family(cfg)
    rng = np.random.default_rng(7)
    for trial in range(20):
        n = int(rng.integers(1, 40))
        idx = np.sort(rng.choice(300, size=n, replace=False))
        vals = rng.uniform(0.01, 1.0, size=n)
        binned = bv(idx, vals, num_bins=300)
        got = encode(binned, ids, lv, cfg)
        assert np.array_equal(got.to_bits(), scalar_encode(binned, ids, lv, cfg))


def test_encode_empty_is_all_positive():
    cfg = EncoderConfig(dim=256, levels=4, seed=2)
    ids = gen_id_family(10, cfg)
    lv = gen_level_family(cfg)
    out = encode(bv([], [], num_bins=10), ids, lv, cfg)
    assert np.all(out.to_bipolar() == 1)


def test_encode_missing_id_raises():
    cfg = EncoderConfig(dim=256, levels=4, seed=2)
    ids = gen_id_family(10, cfg)
    lv = gen_level_family(cfg)
    with pytest.raises(MissingIdError):
        encode(bv([11], [1.0], num_bins=20), ids, lv, cfg)


def test_encode_many_matches_single(tiny_families, tiny_encoder):
    _, ids, lv = tiny_families
    rng = np.random.default_rng(3)
    batch = []
    for _ in range(6):
        n = int(rng.integers(3, 30))
        idx = np.sort(rng.choice(len(ids), size=n, replace=False))
        batch.append(bv(idx, rng.uniform(0.01, 1, size=n), num_bins=len(ids)))
    words = encode_many(batch, ids, lv, tiny_encoder)
    assert words.shape == (6, tiny_encoder.dim // 64)
    for row, one in zip(words, batch):
        assert np.array_equal(row, encode(one, ids, lv, tiny_encoder).words)


def test_families_deterministic_per_seed():
    cfg = EncoderConfig(dim=512, levels=8, id_bits=2, seed=13)
    a = gen_id_family(40, cfg)
    b = gen_id_family(40, cfg)
    assert np.array_equal(a.values, b.values)
    other = gen_id_family(40, EncoderConfig(dim=512, levels=8, id_bits=2, seed=14))
    assert not np.array_equal(a.values, other.values)
    lv_a = gen_level_family(cfg)
    lv_b = gen_level_family(cfg)
    assert np.array_equal(lv_a.vectors, lv_b.vectors)


def test_id_and_level_streams_are_independent():
    cfg = EncoderConfig(dim=512, levels=8, seed=13)
    ids = gen_id_family(4, cfg)
    lv = gen_level_family(cfg)
    # regenerating one family never changes the other
    assert np.array_equal(gen_level_family(cfg).vectors, lv.vectors)
    assert np.array_equal(gen_id_family(4, cfg).values, ids.values)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_similarity_tracks_shared_peaks(seed):
    """Encodings of overlapping peak sets score above disjoint ones."""
    cfg = EncoderConfig(dim=2048, levels=16, seed=17)
    ids = gen_id_family(600, cfg)
    lv = gen_level_family(cfg)
    rng = np.random.default_rng(seed)
    base_idx = np.sort(rng.choice(600, size=30, replace=False))
    vals = rng.uniform(0.3, 1.0, size=30)
    a = encode(bv(base_idx, vals, 600), ids, lv, cfg)
    # keep 20 of 30 peaks
    keep = np.sort(rng.choice(30, size=20, replace=False))
    b = encode(bv(base_idx[keep], vals[keep], 600), ids, lv, cfg)
    # disjoint control
    rest = np.setdiff1d(np.arange(600), base_idx)
    c_idx = np.sort(rng.choice(rest, size=30, replace=False))
    c = encode(bv(c_idx, rng.uniform(0.3, 1.0, 30), 600), ids, lv, cfg)
    assert a.dot(b) > a.dot(c)


def test_store_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    words = rng.integers(0, 2**64, size=(17, 8), dtype=np.uint64)
    path = str(tmp_path / "x.hdv")
    write_store(path, words, dim=512)
    got, dim, precision = read_store(path)
    assert dim == 512 and precision == 1
    assert np.array_equal(got, words)
    mm, _, _ = read_store(path, mmap=True)
    assert np.array_equal(np.asarray(mm), words)


def test_store_multibit_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    vals = rng.integers(-4, 5, size=(9, 256)).astype(np.int8)
    vals[vals == 0] = 1
    path = str(tmp_path / "m.hdv")
    write_store(path, vals, dim=256, precision_bits=3)
    got, dim, precision = read_store(path)
    assert (dim, precision) == (256, 3)
    assert np.array_equal(got, vals)


def test_store_writer_incremental_equals_one_shot(tmp_path):
    rng = np.random.default_rng(7)
    words = rng.integers(0, 2**64, size=(25, 4), dtype=np.uint64)
    one = str(tmp_path / "one.hdv")
    inc = str(tmp_path / "inc.hdv")
    write_store(one, words, dim=256)
    with StoreWriter(inc, dim=256) as w:
        w.add(words[:10])
        w.add(words[10:])
    assert open(one, "rb").read() == open(inc, "rb").read()


def test_read_store_rejects_truncated(tmp_path):
    path = str(tmp_path / "bad.hdv")
    words = np.zeros((4, 4), dtype=np.uint64)
    write_store(path, words, dim=256)
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[:-8])
    with pytest.raises(Exception):
        read_store(path)


def test_family_rng_streams_differ():
    a = family_rng(0, 1).integers(0, 1 << 30, size=8)
    b = family_rng(0, 2).integers(0, 1 << 30, size=8)
    assert not np.array_equal(a, b)
