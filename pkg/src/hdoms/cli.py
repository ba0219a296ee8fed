"""Command line entry point.

Subcommands: encode, search, sweep, simulate, decoys.  Settings resolve as
defaults < --config JSON file < explicit flags; unknown config keys are
rejected.  Diagnostics go to stderr; with --quiet, stdout carries nothing
but data.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys

from . import config as cfgmod
from . import hd_core, oms_pipeline, spectra, xbar_sim
from .errors import ConfigError, HdomsError, StageError
from .experiments import SweepSpec, sweep_dimension, sweep_robustness, sweep_rram
from .oms_pipeline import PipelineConfig, generate_decoys
from .xbar_sim import NoiseModel

logger = logging.getLogger("hdoms")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_UNSET = object()  # distinguishes "flag not given" from an explicit None value


def _parse_window(text: str) -> float:
    if text.lower() in ("open", "none", "inf", "full"):
        return float("inf")
    return float(text)


def _parse_adc(text: str):
    return None if text.lower() in ("none", "ideal") else int(text)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p)


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(p for p in text.split(",") if p)


def _load_noise(spec: str | None) -> NoiseModel | None:
    if spec is None:
        return None
    if spec == "default":
        return NoiseModel.default()
    if spec == "zero":
        return NoiseModel.zero()
    return NoiseModel.from_file(spec)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    file_cfg = cfgmod.load_json(args.config) if args.config else {}

    flags: dict = {}
    encoder: dict = {}
    binning: dict = {}
    rram: dict = {}
    if getattr(args, "dim", None) is not None:
        encoder["dim"] = args.dim
    if getattr(args, "id_bits", None) is not None:
        encoder["id_bits"] = args.id_bits
    if getattr(args, "levels", None) is not None:
        encoder["levels"] = args.levels
    if getattr(args, "chunked", None):
        encoder["chunked"] = True
    if getattr(args, "chunk_count", None) is not None:
        encoder["chunk_count"] = args.chunk_count
    if getattr(args, "seed", None) is not None:
        encoder["seed"] = args.seed
    if getattr(args, "bin_width", None) is not None:
        binning["bin_width"] = args.bin_width
    if getattr(args, "min_mz", None) is not None:
        binning["min_mz"] = args.min_mz
    if getattr(args, "max_mz", None) is not None:
        binning["max_mz"] = args.max_mz
    if getattr(args, "window", None) is not None:
        flags["window"] = args.window
    if getattr(args, "k", None) is not None:
        flags["k"] = args.k
    if getattr(args, "fdr_threshold", None) is not None:
        flags["fdr_threshold"] = args.fdr_threshold
    if getattr(args, "no_decoys", None):
        flags["add_decoys"] = False
    if getattr(args, "decoy_seed", None) is not None:
        flags["decoy_seed"] = args.decoy_seed
    if getattr(args, "emulate", None):
        flags["emulate_hardware"] = True
    if getattr(args, "time_bucket", None) is not None:
        flags["rram_time_bucket"] = args.time_bucket
    if getattr(args, "levels_per_cell", None) is not None:
        rram["levels_per_cell"] = args.levels_per_cell
    if getattr(args, "adc_bits", _UNSET) is not _UNSET:
        rram["adc_bits"] = args.adc_bits
    if args.threads is not None:
        flags["threads"] = args.threads
    if encoder:
        flags["encoder"] = encoder
    if binning:
        flags["binning"] = binning
    if rram:
        flags["rram"] = rram

    merged = cfgmod.merge(file_cfg, flags)
    noise_file = merged.pop("noise_file", None)
    noise = _load_noise(getattr(args, "noise", None) or noise_file)
    cfg = cfgmod.from_dict(PipelineConfig, merged)
    if noise is not None:
        cfg = dataclasses.replace(cfg, noise=noise)
    return cfg


def cmd_encode(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    ids = hd_core.gen_id_family(cfg.binning.num_bins, cfg.encoder)
    lv = hd_core.gen_level_family(cfg.encoder)
    decoy_rng = hd_core.family_rng(cfg.decoy_seed, 5) if args.add_decoys else None
    mz_range = (cfg.binning.min_mz, cfg.binning.max_mz)

    encoded = decoys = rejected = 0
    meta_path = str(args.out) + ".meta.csv"
    with hd_core.StoreWriter(args.out, cfg.encoder.dim) as writer, open(
        meta_path, "w", newline=""
    ) as meta_fh:
        meta = csv.writer(meta_fh, lineterminator="\n")
        meta.writerow(oms_pipeline.META_COLUMNS)

        def emit(words, batch):
            writer.add(words)
            for s in batch:
                meta.writerow(
                    (s.id, f"{s.precursor_mass:.6f}", s.precursor_charge,
                     "true" if s.is_decoy else "false")
                )

        stream = spectra.load_mgf(args.input)
        for words, batch, skipped in oms_pipeline.encode_spectra(stream, cfg, ids, lv):
            emit(words, batch)
            encoded += len(batch)
            rejected += skipped
            if decoy_rng is not None and batch:
                dec = generate_decoys(batch, cfg.decoy_seed, mz_range, rng=decoy_rng)
                binned = (spectra.bin_spectrum(d, cfg.binning) for d in dec)
                emit(hd_core.encode_many(binned, ids, lv, cfg.encoder), dec)
                decoys += len(dec)

    if encoded == 0:
        logger.error("encode: no spectra survived preprocessing")
        return EXIT_RUNTIME
    if not args.quiet:
        print(f"encoded {encoded} spectra (+{decoys} decoys), rejected {rejected} -> {args.out}")
    return EXIT_OK


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    report, fdr = oms_pipeline.run_pipeline(
        args.queries, args.refs, cfg, results_path=args.out, report_path=args.report
    )
    if not args.quiet and fdr is not None:
        print(
            f"accepted {len(fdr.accepted)} matches at fdr<={cfg.fdr_threshold}"
            f" (threshold {fdr.score_threshold}, achieved {fdr.achieved_fdr:.4f})"
        )
    return EXIT_OK if report.status == "ok" else EXIT_RUNTIME


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = cfgmod.from_dict(SweepSpec, cfgmod.load_json(args.spec))
    noise = _load_noise(args.noise)
    if spec.kind == "robustness":
        rows = sweep_robustness(spec, args.out)
    elif spec.kind == "dimension":
        rows = sweep_dimension(spec, args.out)
    else:
        rows = sweep_rram(spec, args.out, noise=noise)
    if not args.quiet:
        print(f"{spec.kind} sweep: {len(rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = SweepSpec(
        kind="rram",
        levels=args.levels,
        time_buckets=args.buckets,
        rows=args.rows,
        seeds=args.seeds,
        adc_bits=args.adc_bits,
        ber_trials=args.ber_trials,
        nmse_trials=args.nmse_trials,
    )
    noise = _load_noise(args.noise) or NoiseModel.default()
    rows = sweep_rram(spec, args.out, noise=noise)
    if not args.quiet:
        print(f"rram grid: {len(rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_decoys(args: argparse.Namespace) -> int:
    loaded = list(spectra.load_mgf(args.input))
    decoys = generate_decoys(loaded, args.seed, (args.min_mz, args.max_mz))
    n = spectra.write_mgf(decoys, args.out)
    if not args.quiet:
        print(f"wrote {n} decoys -> {args.out}")
    return EXIT_OK


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (defaults < file < flags)")
    p.add_argument("--dim", type=int, help="hypervector dimension")
    p.add_argument("--id-bits", type=int, dest="id_bits", help="ID precision bits (1-3)")
    p.add_argument("--levels", type=int, help="intensity quantization levels Q")
    p.add_argument("--chunked", action="store_true", default=None, help="chunked level vectors")
    p.add_argument("--chunk-count", type=int, dest="chunk_count")
    p.add_argument("--seed", type=int, help="encoder family seed")
    p.add_argument("--bin-width", type=float, dest="bin_width")
    p.add_argument("--min-mz", type=float, dest="min_mz")
    p.add_argument("--max-mz", type=float, dest="max_mz")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdoms",
        description="Hyperdimensional open modification search with an RRAM crossbar simulator",
    )
    parser.add_argument("--quiet", action="store_true", help="stdout carries only data")
    parser.add_argument("--threads", type=int, help="worker cap (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode an MGF into a hypervector store")
    p.add_argument("--input", required=True, help="MGF file")
    p.add_argument("--out", required=True, help="output .hdv store (sidecar .meta.csv added)")
    p.add_argument("--add-decoys", action="store_true", dest="add_decoys")
    _add_encoder_flags(p)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("search", help="search queries against references with FDR control")
    p.add_argument("--queries", required=True, help="MGF or .hdv store")
    p.add_argument("--refs", required=True, help="MGF or .hdv store")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--report", help="run report JSON")
    p.add_argument("--window", type=_parse_window, help="mass window half-width in Da, or 'open'")
    p.add_argument("--k", type=int, help="matches kept per query")
    p.add_argument("--fdr-threshold", type=float, dest="fdr_threshold")
    p.add_argument("--no-decoys", action="store_true", dest="no_decoys",
                   help="do not add decoys to MGF references")
    p.add_argument("--decoy-seed", type=int, dest="decoy_seed")
    p.add_argument("--emulate", action="store_true", help="route through the crossbar simulator")
    p.add_argument("--noise", help="noise table: 'default', 'zero' or a file path")
    p.add_argument("--time-bucket", dest="time_bucket", choices=xbar_sim.TIME_BUCKETS)
    p.add_argument("--levels-per-cell", type=int, dest="levels_per_cell", choices=(2, 4, 8))
    p.add_argument("--adc-bits", type=_parse_adc, dest="adc_bits", default=_UNSET,
                   help="ADC bits, or 'none' for ideal readout")
    _add_encoder_flags(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("sweep", help="run a sweep from a JSON spec")
    p.add_argument("--spec", required=True, help="sweep spec JSON")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--noise", help="noise table for rram sweeps")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("simulate", help="run the cell BER / MVM NMSE grid standalone")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--noise", help="noise table: 'default', 'zero' or a file path")
    p.add_argument("--levels", type=_int_list, default=(2, 4, 8))
    p.add_argument("--buckets", type=_str_list, default=xbar_sim.TIME_BUCKETS)
    p.add_argument("--rows", type=_int_list, default=(4, 16, 64))
    p.add_argument("--seeds", type=_int_list, default=(0, 1, 2))
    p.add_argument("--adc-bits", type=_parse_adc, dest="adc_bits", default=6)
    p.add_argument("--ber-trials", type=int, dest="ber_trials", default=20000)
    p.add_argument("--nmse-trials", type=int, dest="nmse_trials", default=2000)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("decoys", help="write a decoy MGF for a target MGF")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-mz", type=float, dest="min_mz", default=50.5)
    p.add_argument("--max-mz", type=float, dest="max_mz", default=2500.0)
    p.set_defaults(fn=cmd_decoys)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except ConfigError as exc:
        logger.error("config: %s", exc)
        return EXIT_USAGE
    except StageError as exc:
        logger.error("stage %s failed: %s", exc.stage, exc)
        return EXIT_RUNTIME
    except HdomsError as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
