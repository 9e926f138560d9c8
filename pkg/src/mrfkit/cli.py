"""Command-line entry point (installed as ``drone``).

Every command exits nonzero on failure after printing one
machine-parsable diagnostic line ``DRONE_ERROR code=<CODE>: <text>`` to
stderr. All randomness flows from ``--seed``; no command consults
ambient entropy.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .bench import speed_benchmark, threads_context, write_timing_csv
from .dictionary import (
    add_noise,
    build_dictionary,
    load_dictionary,
    normalize,
    parse_grid_spec,
    save_dictionary,
    subsample,
)
from .epg import TissueParams, epg_simulate
from .maps import fmt, load_stack, save_param_map_csv, save_stack
from .matcher import match_map
from .network import OutputScaler, load_model, reconstruct_map, save_model
from .phantom import (
    brain_phantom,
    labels_to_param_map,
    load_label_raster,
    load_label_table,
    load_phantom_spec,
    render_phantom,
    simulate_stack,
)
from .repro import RECIPES, SCALES, run_recipe
from .schedule import default_schedule, load_schedule
from .study import density_study, write_study_rows_csv, write_study_summary_csv
from .training import TrainConfig, TrainingDivergedError, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"DRONE_ERROR code=USAGE: {message}\n")
        self.print_usage(sys.stderr)
        raise SystemExit(2)


def _error_code(exc: BaseException) -> str:
    if isinstance(exc, TrainingDivergedError):
        return "DIVERGED"
    if isinstance(exc, FileNotFoundError):
        return "NOT_FOUND"
    if isinstance(exc, (ValueError, KeyError)):
        return "VALIDATION"
    if isinstance(exc, OSError):
        return "IO"
    return "INTERNAL"


def _load_schedule_arg(path: str | None):
    return load_schedule(path) if path else default_schedule()


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread cap")
    parser.add_argument("--out-dir", default=".", help="directory for outputs")


def build_parser() -> _Parser:
    parser = _Parser(prog="drone", description="MR fingerprinting toolkit")
    parser.add_argument("--version", action="version", version=f"drone {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one fingerprint")
    _common(p)
    p.add_argument("--t1", type=float, required=True, help="T1 in ms")
    p.add_argument("--t2", type=float, required=True, help="T2 in ms")
    p.add_argument("--schedule", help="schedule file (default: built-in)")
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV (frame,magnitude)")

    pd = sub.add_parser("dict", help="dictionary operations")
    dsub = pd.add_subparsers(dest="dict_command", required=True)

    p = dsub.add_parser("build", help="simulate a dictionary over a grid")
    _common(p)
    p.add_argument("--grid", required=True, help="e.g. t1=1:10:5000,t2=1:10:2000")
    p.add_argument("--schedule", help="schedule file (default: built-in)")
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--out", required=True)

    p = dsub.add_parser("subsample", help="keep every K-th entry")
    _common(p)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--out", required=True)

    p = dsub.add_parser("noise", help="add Gaussian noise to the atoms")
    _common(p)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--reference", choices=("atom_max", "absolute"), default="atom_max")
    p.add_argument("--out", required=True)

    p = dsub.add_parser("normalize", help="scale every atom to unit norm")
    _common(p)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a reconstruction network")
    _common(p)
    p.add_argument("--dict", dest="dict_path", required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--noise-mode", choices=("atom_max", "absolute"), default="atom_max")
    p.add_argument(
        "--input-norm", choices=("none", "unit_norm"), default="unit_norm"
    )
    p.add_argument("--t1-max", type=float, default=5000.0, help="output scaler max T1")
    p.add_argument("--t2-max", type=float, default=2000.0, help="output scaler max T2")

    p = sub.add_parser("reconstruct", help="network reconstruction of a stack")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="stack file")
    p.add_argument("--out", required=True, help="output parameter-map CSV")

    p = sub.add_parser("match", help="dictionary matching of a stack")
    _common(p)
    p.add_argument("--dict", dest="dict_path", required=True)
    p.add_argument("--input", required=True, help="stack file")
    p.add_argument("--out", required=True, help="output parameter-map CSV")
    p.add_argument("--timing", help="optional timing CSV")

    p = sub.add_parser("phantom", help="render a numerical phantom")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", action="store_true", help="built-in brain phantom")
    src.add_argument("--spec", help="phantom spec file")
    src.add_argument("--labels", help="8-bit label raster file")
    p.add_argument("--table", help="label table CSV (with --labels)")
    p.add_argument("--size", type=int, default=128, help="built-in phantom size")
    p.add_argument("--schedule", help="schedule file (default: built-in)")
    p.add_argument("--out-stack", required=True)
    p.add_argument("--out-truth", required=True, help="truth parameter-map CSV")

    p = sub.add_parser("study", help="dictionary-density vs error study")
    _common(p)
    p.add_argument("--dict", dest="dict_path", required=True)
    p.add_argument("--factors", default="2,5,10,20,40,60")
    p.add_argument("--test-noise", type=float, default=0.005)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--noise-reference", choices=("dict_max", "per_atom"), default="dict_max")
    p.add_argument(
        "--fixed-epochs",
        action="store_true",
        help="train every factor the literal epoch count instead of matching steps",
    )

    p = sub.add_parser("bench", help="time network vs matching reconstruction")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dict", dest="dict_path", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--timing-csv", help="optional timing CSV")

    p = sub.add_parser("repro", help="run a reproduction recipe")
    _common(p)
    p.add_argument("recipe", choices=RECIPES)
    p.add_argument("--scale", choices=SCALES, default="desk")

    return parser


def _cmd_simulate(args) -> int:
    schedule = _load_schedule_arg(args.schedule)
    magnitudes = epg_simulate(TissueParams(args.t1, args.t2), schedule, args.k_max)
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("frame,magnitude\n")
        for i, m in enumerate(magnitudes):
            f.write(f"{i},{fmt(m)}\n")
    print(f"wrote {len(magnitudes)}-frame fingerprint to {args.out}")
    return 0


def _cmd_dict(args) -> int:
    if args.dict_command == "build":
        schedule = _load_schedule_arg(args.schedule)
        dictionary = build_dictionary(parse_grid_spec(args.grid), schedule, args.k_max)
        save_dictionary(dictionary, args.out)
        print(f"built dictionary: {dictionary.n_entries} entries x "
              f"{dictionary.n_frames} frames -> {args.out}")
        return 0
    dictionary = load_dictionary(args.in_path)
    if args.dict_command == "subsample":
        out = subsample(dictionary, args.factor)
        print(f"subsampled x{args.factor}: {dictionary.n_entries} -> {out.n_entries} entries")
    elif args.dict_command == "noise":
        out = add_noise(dictionary, args.sigma, args.seed, reference=args.reference)
        print(f"added noise sigma={args.sigma} ({args.reference}), seed={args.seed}")
    else:
        out = normalize(dictionary)
        print(f"normalized {out.n_entries} atoms")
    save_dictionary(out, args.out)
    return 0


def _cmd_train(args) -> int:
    dictionary = load_dictionary(args.dict_path)
    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        noise_sigma=args.noise_sigma,
        noise_mode=args.noise_mode,
        seed=args.seed,
        input_normalization=args.input_norm,
    )
    scaler = OutputScaler(args.t1_max, args.t2_max)
    net, trace = train(dictionary, config, scaler=scaler)
    save_model(net, args.out)
    print(
        f"trained {config.epochs} epochs on {dictionary.n_entries} entries; "
        f"loss {fmt(trace[0])} -> {fmt(trace[-1])}; model -> {args.out}"
    )
    return 0


def _cmd_reconstruct(args) -> int:
    net = load_model(args.model)
    stack = load_stack(args.input)
    if net.schedule_digest != stack.schedule_digest:
        print("warning: model and stack schedule digests differ", file=sys.stderr)
    with threads_context(args.threads):
        param_map = reconstruct_map(net, stack)
    save_param_map_csv(param_map, args.out)
    print(f"reconstructed {int(stack.mask.sum())} voxels -> {args.out}")
    return 0


def _cmd_match(args) -> int:
    dictionary = load_dictionary(args.dict_path)
    if not dictionary.normalized:
        dictionary = normalize(dictionary)
    stack = load_stack(args.input)
    with threads_context(args.threads):
        param_map, elapsed_ms = match_map(dictionary, stack)
    save_param_map_csv(param_map, args.out)
    if args.timing:
        with open(args.timing, "w", encoding="utf-8", newline="\n") as f:
            f.write("method,voxel_count,dict_entries,wall_ms,per_voxel_us\n")
            voxels = int(stack.mask.sum())
            f.write(
                f"match,{voxels},{dictionary.n_entries},{fmt(elapsed_ms)},"
                f"{fmt(1000.0 * elapsed_ms / voxels)}\n"
            )
    print(f"matched {int(stack.mask.sum())} voxels in {elapsed_ms:.1f} ms -> {args.out}")
    return 0


def _cmd_phantom(args) -> int:
    schedule = _load_schedule_arg(args.schedule)
    if args.labels:
        if not args.table:
            raise ValueError("--labels requires --table")
        truth = labels_to_param_map(
            load_label_raster(args.labels), load_label_table(args.table)
        )
        stack = simulate_stack(truth, schedule)
    else:
        spec = brain_phantom(args.size, args.size) if args.builtin else load_phantom_spec(args.spec)
        truth, stack = render_phantom(spec, schedule)
    save_stack(stack, args.out_stack)
    save_param_map_csv(truth, args.out_truth)
    print(
        f"rendered phantom {truth.width}x{truth.height} "
        f"({int(truth.mask.sum())} voxels) -> {args.out_stack}, {args.out_truth}"
    )
    return 0


def _cmd_study(args) -> int:
    import os

    dictionary = load_dictionary(args.dict_path)
    factors = [int(f) for f in args.factors.split(",") if f.strip()]
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    with threads_context(args.threads):
        result = density_study(
            dictionary,
            factors,
            test_noise_sigma=args.test_noise,
            repetitions=args.reps,
            train_config=config,
            noise_reference=args.noise_reference,
            steps_matched=not args.fixed_epochs,
        )
    os.makedirs(args.out_dir, exist_ok=True)
    rows_path = os.path.join(args.out_dir, "study_rows.csv")
    summary_path = os.path.join(args.out_dir, "study_summary.csv")
    write_study_rows_csv(result, rows_path)
    write_study_summary_csv(result, summary_path)
    for s in result.summary:
        print(
            f"factor {s.factor:3d} {s.method:5s}: rmse t1 {s.mean_rmse_t1:8.2f} "
            f"+/- {s.std_rmse_t1:7.2f}  t2 {s.mean_rmse_t2:8.2f} +/- {s.std_rmse_t2:7.2f}"
        )
    for key, fit in result.fits.items():
        print(f"fit {key}: slope={fit.slope:.3f} intercept={fit.intercept:.2f} r2={fit.r2:.3f}")
    print(f"wrote {rows_path}, {summary_path}")
    return 0


def _cmd_bench(args) -> int:
    net = load_model(args.model)
    dictionary = load_dictionary(args.dict_path)
    if not dictionary.normalized:
        dictionary = normalize(dictionary)
    stack = load_stack(args.stack)
    result = speed_benchmark(
        net, dictionary, stack, runs=args.runs, threads=args.threads
    )
    for key in ("nn", "match"):
        r = result[key]
        print(
            f"{r.method:5s}: {r.wall_ms:10.2f} ms over {r.voxel_count} voxels "
            f"({r.per_voxel_us:.2f} us/voxel, dictionary {r.dict_entries} entries)"
        )
    print(f"speed ratio (match/nn): {result['ratio']:.1f}x")
    if args.timing_csv:
        write_timing_csv([result["nn"], result["match"]], args.timing_csv)
        print(f"wrote {args.timing_csv}")
    return 0


def _cmd_repro(args) -> int:
    summary = run_recipe(
        args.recipe,
        scale_name=args.scale,
        seed=args.seed,
        out_dir=args.out_dir,
        threads=args.threads,
    )
    if not summary["pass"]:
        failed = [c["name"] for c in summary["checks"] if not c["pass"]]
        sys.stderr.write(
            f"DRONE_ERROR code=CHECK_FAILED: recipe {args.recipe} failed "
            f"checks: {','.join(failed)}\n"
        )
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "dict":
            return _cmd_dict(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "reconstruct":
            return _cmd_reconstruct(args)
        if args.command == "match":
            return _cmd_match(args)
        if args.command == "phantom":
            return _cmd_phantom(args)
        if args.command == "study":
            return _cmd_study(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_repro(args)
    except Exception as exc:  # single-line machine-parsable exit contract
        message = " ".join(str(exc).split())
        sys.stderr.write(f"DRONE_ERROR code={_error_code(exc)}: {message}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
