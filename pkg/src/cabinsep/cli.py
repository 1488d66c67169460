"""Command-line interface.

Subcommands: separate, simulate, ir (gen/extract/ism), eval, bench,
init-weights. Exit codes: 0 ok, 2 input error, 3 config/weights error,
4 numerical failure. Commands validate their inputs before writing any
output file. The CABINSEP_THREADS environment variable caps batch
parallelism for multi-file evaluation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .augment import SceneManifest, mix_scene
from .dsp import DEFAULT_SAMPLE_RATE, StftConfig, read_wav, write_wav
from .errors import (
    InvalidConfig,
    InvalidInput,
    InvalidManifest,
    NumericalError,
    WeightShapeError,
)
from .irlab import (
    ExcitationSpec,
    RoomSpec,
    cabin_room,
    extract_ir,
    gen_excitation,
    inverse_filter_ess,
    simulate_ism,
    write_ir,
)
from .metrics import (
    PositioningEntry,
    PositioningResult,
    rtf_benchmark,
    si_snr,
    zone_positioning,
)
from .model import (
    ModelConfig,
    ModelWeights,
    count_macs,
    count_params,
    init_random,
    variant_config,
)
from .mvdr import MvdrConfig
from .pipeline import separate_waveform

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


def _max_workers() -> int:
    raw = os.environ.get("CABINSEP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidConfig(f"CABINSEP_THREADS must be an integer, got {raw!r}")


def _load_model_config(args) -> ModelConfig:
    if getattr(args, "config", None):
        text = Path(args.config).read_text()
        cfg = ModelConfig.from_text(text)
    else:
        cfg = variant_config(args.variant)
    if getattr(args, "chunk_seconds", None) is not None:
        cfg = replace(cfg, chunk_lookback_seconds=args.chunk_seconds)
    return cfg


def _mvdr_config(args) -> MvdrConfig:
    return MvdrConfig(
        forgetting=args.forgetting,
        loading=args.loading,
        recompute_every=args.cadence,
    )


# ---------------------------------------------------------------------------
# separate
# ---------------------------------------------------------------------------

def cmd_separate(args) -> int:
    wave, rate = read_wav(args.input)
    if rate != DEFAULT_SAMPLE_RATE:
        raise InvalidInput(f"{args.input}: expected 16 kHz audio, got {rate} Hz")
    n_chan = wave.shape[0]
    if n_chan == 1:
        cfg = replace(variant_config(args.variant), zones=1, variant=None)
        weights = None
    else:
        cfg = _load_model_config(args)
        if n_chan != cfg.zones:
            raise InvalidInput(
                f"{args.input}: {n_chan} channels but the configuration expects {cfg.zones}"
            )
        if not args.weights:
            raise InvalidConfig("multichannel separation requires --weights")
        weights = ModelWeights.load(args.weights)

    result = separate_waveform(
        wave, weights, cfg, StftConfig(), _mvdr_config(args), start=args.start
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for z in range(result.zones.shape[0]):
        name = f"zone{z + 1}.wav"
        write_wav(out_dir / name, result.zones[z], DEFAULT_SAMPLE_RATE)
        names.append(name)
    report = {
        "input": str(args.input),
        "zones": int(result.zones.shape[0]),
        "samples": int(result.zones.shape[1]),
        "outputs": names,
        "per_zone_rms": [float(np.sqrt(np.mean(result.zones[z] ** 2)))
                         for z in range(result.zones.shape[0])],
        "mvdr": {"forgetting": args.forgetting, "loading": args.loading,
                 "recompute_every": args.cadence},
    }
    (out_dir / "separate_report.json").write_text(json.dumps(report, indent=2))
    print(f"wrote {len(names)} zone files to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _load_ir_set(directory, zones: int):
    """Per-microphone IR set from a directory of mic0.wav .. mic{Z-1}.wav."""
    from .irlab import read_ir

    directory = Path(directory)
    irs = []
    for m in range(zones):
        path = directory / f"mic{m}.wav"
        if not path.exists():
            raise InvalidInput(f"IR set {directory} is missing {path.name}")
        irs.append(read_ir(path))
    return irs


def cmd_simulate(args) -> int:
    manifest = SceneManifest.from_json(Path(args.manifest).read_text())
    irs_by_zone = None
    if args.strategy:
        if args.seed is None:
            raise InvalidConfig("--strategy draws an IR assignment and requires --seed")
        from .irlab import mix_ir_sets

        simulated = (_load_ir_set(args.simulated_ir_dir, manifest.zones)
                     if args.simulated_ir_dir else None)
        recorded = (_load_ir_set(args.recorded_ir_dir, manifest.zones)
                    if args.recorded_ir_dir else None)
        rng = np.random.default_rng(args.seed)
        irs_by_zone = {
            entry.zone: mix_ir_sets(simulated, recorded, args.strategy,
                                    entry.zone, rng)
            for entry in manifest.speakers
        }
    render = mix_scene(manifest, base_dir=Path(args.manifest).parent,
                       irs_by_zone=irs_by_zone)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_wav(out_dir / "mixture.wav", render.mixture, manifest.sample_rate)
    for zone in render.occupied_zones:
        write_wav(out_dir / f"zone{zone + 1}_label.wav",
                  render.speech_labels[zone], manifest.sample_rate)
    write_wav(out_dir / "noise_label.wav", render.noise_label, manifest.sample_rate)
    (out_dir / "scene_report.json").write_text(json.dumps({
        "manifest": str(args.manifest),
        "zones": manifest.zones,
        "occupied_zones": [z + 1 for z in render.occupied_zones],
        "samples": int(render.mixture.shape[1]),
    }, indent=2))
    print(f"rendered scene with zones {render.occupied_zones} to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ir
# ---------------------------------------------------------------------------

def _excitation_spec(args) -> ExcitationSpec:
    if args.kind == "ess":
        return ExcitationSpec(kind="ess", f_start=args.f_start, f_end=args.f_end,
                              duration=args.duration)
    if args.kind == "mls":
        return ExcitationSpec(kind="mls", order=args.order)
    return ExcitationSpec(kind="tsp", length=args.length, stretch=args.stretch)


def cmd_ir_gen(args) -> int:
    spec = _excitation_spec(args)
    signal = gen_excitation(spec)
    write_wav(args.out, signal, spec.sample_rate)
    if args.kind == "ess" and args.inverse_out:
        write_wav(args.inverse_out, inverse_filter_ess(spec), spec.sample_rate)
    print(f"wrote {args.kind} excitation ({signal.shape[0]} samples) to {args.out}")
    return EXIT_OK


def cmd_ir_extract(args) -> int:
    spec = _excitation_spec(args)
    recording, _ = read_wav(args.recording)
    ir = extract_ir(recording[0], spec, ir_length=args.ir_length)
    ir.origin = "recorded"
    write_ir(args.out, ir)
    print(f"extracted {args.ir_length}-tap IR to {args.out}")
    return EXIT_OK


def cmd_ir_ism(args) -> int:
    if args.room:
        doc = json.loads(Path(args.room).read_text())
        room = RoomSpec(
            dimensions=tuple(doc["dimensions"]),
            source=tuple(doc["source"]),
            mics=tuple(tuple(m) for m in doc["mics"]),
            reflection=(tuple(doc["reflection"])
                        if isinstance(doc["reflection"], list) else doc["reflection"]),
            max_order=int(doc.get("max_order", 3)),
            ir_length=int(doc.get("ir_length", 2048)),
            sample_rate=int(doc.get("sample_rate", DEFAULT_SAMPLE_RATE)),
        )
    elif args.preset == "cabin":
        if not args.source:
            raise InvalidInput("--preset cabin requires --source x,y,z")
        source = tuple(float(v) for v in args.source.split(","))
        room = cabin_room(source, reflection=args.reflection, max_order=args.max_order,
                          ir_length=args.ir_length)
    else:
        raise InvalidInput("provide --room FILE or --preset cabin")
    ir = simulate_ism(room, args.mic)
    ir.zone = args.mic
    write_ir(args.out, ir)
    print(f"simulated IR (mic {args.mic}, {room.ir_length} taps) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _eval_pair(est_dir: Path, label_dir: Path, true_zone: int | None) -> dict:
    rows = []
    zones = []
    zone = 1
    while (est_dir / f"zone{zone}.wav").exists():
        est, _ = read_wav(est_dir / f"zone{zone}.wav")
        label_path = label_dir / f"zone{zone}_label.wav"
        if not label_path.exists():
            label_path = label_dir / f"zone{zone}.wav"
        zones.append(est[0])
        if label_path.exists():
            label, _ = read_wav(label_path)
            n = min(est.shape[1], label.shape[1])
            rows.append({"zone": zone, "si_snr_db": si_snr(est[0, :n], label[0, :n])})
        zone += 1
    if not zones:
        raise InvalidInput(f"no zone*.wav files found in {est_dir}")
    report = {"estimates": str(est_dir), "rows": rows}
    if rows:
        report["si_snr_mean_db"] = float(np.mean([r["si_snr_db"] for r in rows]))
    if true_zone is not None:
        length = min(z.shape[0] for z in zones)
        entry = zone_positioning(np.stack([z[:length] for z in zones]), true_zone - 1)
        report["positioning"] = {
            "true_zone": true_zone,
            "predicted_zone": None if entry.predicted_zone is None
            else entry.predicted_zone + 1,
        }
    return report


def cmd_eval(args) -> int:
    est_dirs = [Path(p) for p in args.est_dir]
    label_dirs = [Path(p) for p in args.label_dir]
    if len(est_dirs) != len(label_dirs):
        raise InvalidInput("--est-dir and --label-dir must be given the same number of times")
    true_zones = args.true_zone or [None] * len(est_dirs)
    if len(true_zones) not in (0, len(est_dirs)):
        raise InvalidInput("--true-zone must be given once per --est-dir (or not at all)")

    workers = _max_workers()
    if workers > 1 and len(est_dirs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_eval_pair, est_dirs, label_dirs, true_zones))
    else:
        reports = [_eval_pair(e, l, t) for e, l, t in zip(est_dirs, label_dirs, true_zones)]

    aggregate = {"utterances": reports}
    positioning = PositioningResult()
    for report in reports:
        if "positioning" in report:
            pos = report["positioning"]
            predicted = pos["predicted_zone"]
            positioning.add(PositioningEntry(
                pos["true_zone"] - 1, None if predicted is None else predicted - 1))
    if positioning.entries:
        aggregate["positioning_accuracy"] = positioning.accuracy
    text = json.dumps(aggregate, indent=2)
    if args.report:
        Path(args.report).write_text(text)
        print(f"wrote evaluation report to {args.report}")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    cfg = variant_config(args.variant)
    weights = init_random(cfg, args.seed)
    rng = np.random.default_rng(args.seed)
    samples = int(args.seconds * DEFAULT_SAMPLE_RATE)
    wave = rng.standard_normal((cfg.zones, samples)) * 0.05

    def run():
        separate_waveform(wave, weights, cfg)

    rtf = rtf_benchmark(run, args.seconds, runs=args.runs, warmup=1)
    macs = count_macs(cfg, seconds=args.seconds)
    report = {
        "variant": args.variant,
        "params": count_params(cfg),
        "gmacs_per_second": macs.gmacs_per_second,
        "mac_items": macs.items,
        **rtf.to_dict(),
    }
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text)
        print(f"wrote benchmark report to {args.report}")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# init-weights
# ---------------------------------------------------------------------------

def cmd_init_weights(args) -> int:
    cfg = variant_config(args.variant)
    weights = init_random(cfg, args.seed)
    weights.save(args.out)
    print(f"wrote {args.variant} weights (seed {args.seed}, "
          f"{count_params(cfg)} params) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cabinsep",
                                     description="Multi-zone in-cabin speech separation")
    sub = parser.add_subparsers(dest="command", required=True)

    sep = sub.add_parser("separate", help="separate a Z-channel mixture into zone files")
    sep.add_argument("--input", required=True)
    sep.add_argument("--weights")
    sep.add_argument("--out-dir", required=True)
    sep.add_argument("--variant", choices=("S", "M", "L"), default="S")
    sep.add_argument("--config", help="model config as key=value text (overrides --variant)")
    sep.add_argument("--lambda", dest="forgetting", type=float, default=1.0,
                     help="covariance forgetting factor")
    sep.add_argument("--loading", type=float, default=1e-4)
    sep.add_argument("--cadence", type=int, default=1,
                     help="recompute beamformer weights every N frames")
    sep.add_argument("--chunk-seconds", type=float, default=None,
                     help="limit conformer attention lookback")
    sep.add_argument("--start", type=int, default=0, choices=(0, 1))
    sep.set_defaults(func=cmd_separate)

    sim = sub.add_parser("simulate", help="render a scene manifest to WAV files")
    sim.add_argument("--manifest", required=True)
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--strategy", choices=("mixed", "added", "only", "simulated"),
                     help="draw each speaker's IR assignment from IR-set directories")
    sim.add_argument("--simulated-ir-dir", help="directory of mic0.wav..mic{Z-1}.wav")
    sim.add_argument("--recorded-ir-dir", help="directory of mic0.wav..mic{Z-1}.wav")
    sim.add_argument("--seed", type=int, help="required with --strategy")
    sim.set_defaults(func=cmd_simulate)

    ir = sub.add_parser("ir", help="impulse-response tools")
    ir_sub = ir.add_subparsers(dest="ir_command", required=True)

    def add_excitation_args(p):
        p.add_argument("--kind", choices=("ess", "mls", "tsp"), required=True)
        p.add_argument("--f-start", type=float, default=20.0)
        p.add_argument("--f-end", type=float, default=8000.0)
        p.add_argument("--duration", type=float, default=3.0)
        p.add_argument("--order", type=int, default=14)
        p.add_argument("--length", type=int, default=16384)
        p.add_argument("--stretch", type=int, default=None)

    gen = ir_sub.add_parser("gen", help="generate an excitation signal")
    add_excitation_args(gen)
    gen.add_argument("--out", required=True)
    gen.add_argument("--inverse-out", help="also write the ESS inverse filter")
    gen.set_defaults(func=cmd_ir_gen)

    ext = ir_sub.add_parser("extract", help="deconvolve a recorded excitation")
    add_excitation_args(ext)
    ext.add_argument("--recording", required=True)
    ext.add_argument("--out", required=True)
    ext.add_argument("--ir-length", type=int, default=2048)
    ext.set_defaults(func=cmd_ir_extract)

    ism = ir_sub.add_parser("ism", help="simulate a shoebox impulse response")
    ism.add_argument("--room", help="RoomSpec JSON file")
    ism.add_argument("--preset", choices=("cabin",))
    ism.add_argument("--source", help="x,y,z meters (with --preset)")
    ism.add_argument("--reflection", type=float, default=0.35)
    ism.add_argument("--max-order", type=int, default=3)
    ism.add_argument("--ir-length", type=int, default=2048)
    ism.add_argument("--mic", type=int, required=True)
    ism.add_argument("--out", required=True)
    ism.set_defaults(func=cmd_ir_ism)

    ev = sub.add_parser("eval", help="SI-SNR / positioning report")
    ev.add_argument("--est-dir", action="append", required=True)
    ev.add_argument("--label-dir", action="append", required=True)
    ev.add_argument("--true-zone", action="append", type=int,
                    help="1-based true zone, once per --est-dir")
    ev.add_argument("--report")
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="RTF and MAC report for a variant")
    bench.add_argument("--variant", choices=("S", "M", "L"), required=True)
    bench.add_argument("--seconds", type=float, default=4.0)
    bench.add_argument("--runs", type=int, default=5)
    bench.add_argument("--seed", type=int, required=True)
    bench.add_argument("--report")
    bench.set_defaults(func=cmd_bench)

    init = sub.add_parser("init-weights", help="write a random weight container")
    init.add_argument("--variant", choices=("S", "M", "L"), required=True)
    init.add_argument("--seed", type=int, required=True)
    init.add_argument("--out", required=True)
    init.set_defaults(func=cmd_init_weights)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, WeightShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidInput, InvalidManifest, FileNotFoundError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
