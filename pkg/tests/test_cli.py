import json

import numpy as np
import pytest

from hdoms.cli import main
from hdoms.experiments import SyntheticBenchSpec, synth_library
from hdoms.spectra import write_mgf


@pytest.fixture(scope="module")
def mgf_pair(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    spec = SyntheticBenchSpec(library_size=120, query_count=15)
    refs, queries, _ = synth_library(spec, seed=9)
    ref_path = str(tmp / "refs.mgf")
    q_path = str(tmp / "queries.mgf")
    write_mgf(refs, ref_path)
    write_mgf(queries, q_path)
    return ref_path, q_path


BENCH_FLAGS = ["--dim", "1024", "--bin-width", "0.1", "--min-mz", "100", "--max-mz", "1600"]


def test_search_command_writes_results_and_report(mgf_pair, tmp_path, capsys):
    ref_path, q_path = mgf_pair
    out = str(tmp_path / "res.csv")
    rep = str(tmp_path / "rep.json")
    code = main(
        ["search", "--queries", q_path, "--refs", ref_path, "--out", out,
         "--report", rep, "--window", "open", *BENCH_FLAGS]
    )
    assert code == 0
    assert open(out).readline().startswith("query_id,rank")
    report = json.loads(open(rep).read())
    assert report["status"] == "ok"
    assert report["config"]["dim"] == 1024
    assert "accepted" in capsys.readouterr().out


def test_search_threads_do_not_change_output(mgf_pair, tmp_path):
    ref_path, q_path = mgf_pair
    outs = []
    for threads, name in ((1, "a.csv"), (4, "b.csv")):
        out = str(tmp_path / name)
        code = main(
            ["--threads", str(threads), "search", "--queries", q_path,
             "--refs", ref_path, "--out", out, "--window", "open", *BENCH_FLAGS]
        )
        assert code == 0
        outs.append(open(out, "rb").read())
    assert outs[0] == outs[1]


def test_search_rerun_is_byte_identical(mgf_pair, tmp_path):
    ref_path, q_path = mgf_pair
    a = str(tmp_path / "a.csv")
    b = str(tmp_path / "b.csv")
    for out in (a, b):
        assert main(
            ["search", "--queries", q_path, "--refs", ref_path, "--out", out, *BENCH_FLAGS]
        ) == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_config_file_and_flag_precedence(mgf_pair, tmp_path):
    ref_path, q_path = mgf_pair
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "encoder": {"dim": 512},
        "binning": {"bin_width": 0.1, "min_mz": 100.0, "max_mz": 1600.0},
        "window": None,
    }))
    rep = str(tmp_path / "rep.json")
    out = str(tmp_path / "res.csv")
    # flag overrides the file's dim
    code = main(["search", "--queries", q_path, "--refs", ref_path, "--out", out,
                 "--report", rep, "--config", str(cfg), "--dim", "1024"])
    assert code == 0
    assert json.loads(open(rep).read())["config"]["dim"] == 1024


def test_unknown_config_key_is_usage_error(mgf_pair, tmp_path):
    ref_path, q_path = mgf_pair
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"encoder": {"dimension": 512}}')
    code = main(["search", "--queries", q_path, "--refs", ref_path,
                 "--out", str(tmp_path / "r.csv"), "--config", str(cfg)])
    assert code == 2


def test_missing_input_is_runtime_error(tmp_path):
    code = main(["search", "--queries", str(tmp_path / "no.mgf"),
                 "--refs", str(tmp_path / "no.mgf"), "--out", str(tmp_path / "r.csv")])
    assert code == 1


def test_encode_then_search_store(mgf_pair, tmp_path, capsys):
    ref_path, q_path = mgf_pair
    store = str(tmp_path / "refs.hdv")
    code = main(["encode", "--input", ref_path, "--out", store, "--add-decoys", *BENCH_FLAGS])
    assert code == 0
    assert "encoded 120" in capsys.readouterr().out

    direct = str(tmp_path / "direct.csv")
    via = str(tmp_path / "via.csv")
    assert main(["search", "--queries", q_path, "--refs", ref_path,
                 "--out", direct, *BENCH_FLAGS]) == 0
    assert main(["search", "--queries", q_path, "--refs", store,
                 "--out", via, *BENCH_FLAGS]) == 0
    assert open(direct, "rb").read() == open(via, "rb").read()


def test_encode_quiet_keeps_stdout_empty(mgf_pair, tmp_path, capsys):
    ref_path, _ = mgf_pair
    store = str(tmp_path / "q.hdv")
    code = main(["--quiet", "encode", "--input", ref_path, "--out", store, *BENCH_FLAGS])
    assert code == 0
    assert capsys.readouterr().out == ""


def test_decoys_command(mgf_pair, tmp_path, capsys):
    ref_path, _ = mgf_pair
    out = str(tmp_path / "decoys.mgf")
    code = main(["decoys", "--input", ref_path, "--out", out,
                 "--min-mz", "100", "--max-mz", "1600", "--seed", "3"])
    assert code == 0
    from hdoms.spectra import load_mgf

    decoys = list(load_mgf(out))
    assert len(decoys) == 120
    assert all(d.is_decoy and d.id.startswith("DECOY_") for d in decoys)


def test_sweep_command(tmp_path):
    spec = {
        "kind": "rram",
        "levels": [2, 8],
        "time_buckets": ["t0"],
        "rows": [64],
        "seeds": [0, 1, 2],
        "ber_trials": 2000,
        "nmse_trials": 200,
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out = str(tmp_path / "rram.csv")
    assert main(["sweep", "--spec", str(spec_path), "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "n,time_bucket,rows,ber,nmse"
    assert len(lines) == 3


def test_simulate_command_with_zero_noise(tmp_path):
    out = str(tmp_path / "sim.csv")
    code = main(["simulate", "--out", out, "--noise", "zero", "--levels", "2,4",
                 "--buckets", "t0", "--rows", "16", "--seeds", "0,1,2",
                 "--ber-trials", "1000", "--nmse-trials", "100"])
    assert code == 0
    rows = open(out).read().splitlines()[1:]
    assert len(rows) == 2
    assert all(float(r.split(",")[3]) == 0.0 for r in rows)


def test_emulated_search_cli_matches_exact(mgf_pair, tmp_path):
    ref_path, q_path = mgf_pair
    exact = str(tmp_path / "exact.csv")
    emu = str(tmp_path / "emu.csv")
    assert main(["search", "--queries", q_path, "--refs", ref_path,
                 "--out", exact, *BENCH_FLAGS]) == 0
    assert main(["search", "--queries", q_path, "--refs", ref_path, "--out", emu,
                 "--emulate", "--noise", "zero", "--adc-bits", "none",
                 "--levels-per-cell", "4", *BENCH_FLAGS]) == 0
    assert open(exact, "rb").read() == open(emu, "rb").read()


def test_invalid_window_flag_is_usage_error(mgf_pair, tmp_path):
    ref_path, q_path = mgf_pair
    with pytest.raises(SystemExit) as err:
        main(["search", "--queries", q_path, "--refs", ref_path,
              "--out", str(tmp_path / "r.csv"), "--window", "sometimes"])
    assert err.value.code == 2
