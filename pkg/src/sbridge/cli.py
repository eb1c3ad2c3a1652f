"""Command-line entry point.

Subcommands: ``gen-data``, ``schedule-dump``, ``train``, ``enhance`` and
``simulate``.  A JSON config file (``--config``) may supply per-subcommand
defaults that explicit flags override; the effective configuration is echoed
to ``<out-dir>/run_manifest.json`` so every run is reproducible from its
artifacts.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence, 5 failed statistical check.
"""

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .bridge import DivergenceError
from .datasets import (DataError, DatasetSpec, generate_dataset, load_dataset,
                       read_wav, write_wav)
from .denoisers import OracleDenoiser
from .enhance import enhance_signal
from .metrics import MetricReport, si_sdr, snr, spectral_log_mse
from .schedules import SCHEDULES, make_schedule
from .seeding import derive_rng
from .simulate import (DEFAULT_TIMES, simulate_statistics, toy_endpoints,
                       write_rows_csv)
from .training import (TrainConfig, TrainingDivergedError, load_checkpoint,
                       save_checkpoint, train)
from .transforms import CompressedSTFT

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_STATS = 5

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def _write_manifest(out_dir, command, args):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    effective = {k: v for k, v in vars(args).items()
                 if k not in ("func", "config") and not k.startswith("_")}
    manifest = {"command": command, "package_version": __version__,
                "effective_config": effective}
    with open(out_dir / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    print(f"[{command}] effective config: "
          + json.dumps(effective, sort_keys=True, default=str))


def _parse_int_list(text):
    try:
        return [int(part) for part in str(text).split(",") if part]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")


# -- gen-data ------------------------------------------------------------------


def cmd_gen_data(args):
    spec = DatasetSpec(
        task=args.task, n_examples=args.n_examples, duration_s=args.duration,
        snr_range_db=tuple(args.snr_range), t60_range_s=tuple(args.t60_range),
        clean_kind=args.clean_kind, noise_kind=args.noise_kind,
        master_seed=args.seed, clean_dir=args.clean_dir, noise_dir=args.noise_dir)
    _write_manifest(args.out_dir, "gen-data", args)
    records = generate_dataset(spec, args.out_dir)
    print(f"[gen-data] wrote {len(records)} examples to {args.out_dir}")
    return EXIT_OK


# -- schedule-dump --------------------------------------------------------------


def cmd_schedule_dump(args):
    kinds = [k.strip().lower() for k in args.schedules.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in SCHEDULES]
    if unknown:
        raise ConfigError(f"unknown schedule name(s): {unknown}; choose from {sorted(SCHEDULES)}")
    _write_manifest(args.out_dir, "schedule-dump", args)
    path = Path(args.out_dir) / "schedules.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "schedule", "w_x", "w_y", "sigma_x_sq"])
        for kind in kinds:
            schedule = make_schedule(kind)
            grid = np.linspace(0.0, schedule.T, args.points)
            w_x, w_y = schedule.weights(grid)
            var = schedule.marginal_variance(grid)
            for i, t in enumerate(grid):
                writer.writerow([f"{t:.10g}", kind, f"{w_x[i]:.12g}",
                                 f"{w_y[i]:.12g}", f"{var[i]:.12g}"])
    print(f"[schedule-dump] wrote {path}")
    return EXIT_OK


# -- train -----------------------------------------------------------------------


def _split_validation(pairs, fraction, seed):
    if fraction <= 0 or len(pairs) < 2:
        return pairs, None
    n_val = max(1, int(round(fraction * len(pairs))))
    order = derive_rng(seed, 99).permutation(len(pairs))
    val = [pairs[i] for i in order[:n_val]]
    rest = [pairs[i] for i in order[n_val:]]
    return rest, val


def cmd_train(args):
    pairs = load_dataset(args.data_dir)
    resume_state = None
    if args.resume:
        checkpoint = load_checkpoint(args.resume)
        if not checkpoint.training_state:
            raise ConfigError(f"checkpoint {args.resume} carries no resumable state")
        cfg = checkpoint.train_config
        if args.epochs is not None:
            cfg.max_epochs = args.epochs
        transform = checkpoint.transform
        schedule = checkpoint.schedule
        resume_state = checkpoint.training_state
    else:
        if args.schedule not in ("sbve", "sbvp"):
            raise ConfigError("training uses the bridge process; --schedule must be sbve or sbvp")
        cfg = TrainConfig(
            lambda_aux=args.lambda_aux, aux_kind=None if args.aux_kind == "none" else args.aux_kind,
            lr=args.lr, batch_size=args.batch_size, ema_decay=args.ema_decay,
            max_epochs=args.epochs if args.epochs is not None else 50,
            patience=args.patience, seed=args.seed,
            hidden_sizes=tuple(_parse_int_list(args.hidden)),
            select_by="si_sdr" if args.select_by_si_sdr else "val_loss")
        transform = CompressedSTFT().fit()
        schedule = make_schedule(args.schedule)
    _write_manifest(args.out_dir, "train", args)
    train_pairs, val_pairs = _split_validation(pairs, args.val_fraction, cfg.seed)
    result = train(train_pairs, schedule, transform, cfg,
                   val_pairs=val_pairs, resume_state=resume_state)
    out_dir = Path(args.out_dir)
    save_checkpoint(out_dir / "checkpoint.npz", result, transform, schedule)
    with open(out_dir / "training_curve.csv", "w", newline="") as fh:
        fields = sorted({k for row in result.history for k in row})
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(result.history)
    final = result.history[-1]["train_loss"] if result.history else float("nan")
    print(f"[train] {len(result.history)} epochs, final train loss {final:.6g}, "
          f"checkpoint at {out_dir / 'checkpoint.npz'}")
    return EXIT_OK


# -- enhance ----------------------------------------------------------------------


def _enhance_one(index, pair, denoiser_factory, transform, schedule, args, n_steps,
                 out_dir, trajectory_dir):
    example_id = pair.meta.get("id", f"{index:04d}")
    degraded = pair.degraded
    clean = pair.clean
    scale = float(np.max(np.abs(degraded.samples))) or 1.0
    denoiser = denoiser_factory(pair, scale)
    hook = None
    trajectory = []
    if trajectory_dir is not None:
        clean_coeffs = transform.analyze_array(clean.samples / scale) if clean is not None else None

        def hook(step, t, state):
            row = {"step": step, "t": t,
                   "state_rms": float(np.sqrt(np.mean(np.abs(state) ** 2)))}
            if clean_coeffs is not None:
                row["dist_to_clean_rms"] = float(
                    np.sqrt(np.mean(np.abs(state - clean_coeffs) ** 2)))
            trajectory.append(row)

    estimate = enhance_signal(
        degraded, denoiser, transform, schedule, sampler=args.sampler,
        n_steps=n_steps, rng=derive_rng(args.seed, 10, index), hook=hook)
    if out_dir is not None:
        write_wav(out_dir / f"{example_id}_enhanced.wav",
                  np.asarray(estimate, dtype=np.float64))
    metrics = None
    if clean is not None:
        metrics = {
            "si_sdr_in": si_sdr(clean.samples, degraded.samples),
            "si_sdr_out": si_sdr(clean.samples, estimate),
            "snr_in": snr(clean.samples, degraded.samples),
            "snr_out": snr(clean.samples, estimate),
            "spectral_log_mse": spectral_log_mse(
                transform.analyze_array(clean.samples),
                transform.analyze_array(estimate)),
        }
    if trajectory_dir is not None:
        with open(trajectory_dir / f"{example_id}_steps{n_steps}.csv", "w", newline="") as fh:
            fields = ["step", "t", "state_rms"] + (
                ["dist_to_clean_rms"] if clean is not None else [])
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(trajectory)
    return example_id, metrics


def cmd_enhance(args):
    step_counts = _parse_int_list(args.steps)
    input_path = Path(args.input)
    out_dir = Path(args.out_dir)
    _write_manifest(out_dir, "enhance", args)
    enhanced_dir = out_dir / "enhanced"
    enhanced_dir.mkdir(parents=True, exist_ok=True)
    trajectory_dir = None
    if args.dump_trajectory:
        trajectory_dir = out_dir / "trajectories"
        trajectory_dir.mkdir(parents=True, exist_ok=True)

    if input_path.is_dir():
        pairs = load_dataset(input_path)
    else:
        if args.oracle:
            raise ConfigError("--oracle requires a paired dataset directory")
        signal = read_wav(input_path, expected_rate=16000)
        pairs = [SimpleNamespace(degraded=signal, clean=None,
                                 meta={"id": input_path.stem})]

    if args.oracle:
        transform = CompressedSTFT().fit()
        schedule = make_schedule(args.schedule)

        def denoiser_factory(pair, scale):
            return OracleDenoiser(transform.analyze_array(pair.clean.samples / scale))
    else:
        if not args.checkpoint:
            raise ConfigError("either --checkpoint or --oracle is required")
        checkpoint = load_checkpoint(args.checkpoint)
        transform = checkpoint.transform
        schedule = checkpoint.schedule
        model = checkpoint.ema_denoiser if args.use_ema else checkpoint.denoiser

        def denoiser_factory(pair, scale):
            return model

    sweep_rows = []
    for n_steps in step_counts:
        report = MetricReport()
        target_dir = enhanced_dir if n_steps == step_counts[-1] else None

        def work(item):
            index, pair = item
            return _enhance_one(index, pair, denoiser_factory, transform,
                                schedule, args, n_steps, target_dir, trajectory_dir)

        items = list(enumerate(pairs))
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(work, items))
        else:
            results = [work(item) for item in items]
        for example_id, metrics in results:
            if metrics is not None:
                report.add(example_id, **metrics)
        if report.rows:
            suffix = f"_steps{n_steps}" if len(step_counts) > 1 else ""
            report.write_csv(out_dir / f"metrics{suffix}.csv")
            report.write_json(out_dir / f"metrics{suffix}.json")
            summary = report.summary()
            sweep_rows.append({"n_steps": n_steps,
                               **{f"{k}_mean": v["mean"] for k, v in summary.items()},
                               **{f"{k}_std": v["std"] for k, v in summary.items()}})
            print(f"[enhance] steps={n_steps} "
                  f"si_sdr_in={summary['si_sdr_in']['mean']:.2f} dB "
                  f"si_sdr_out={summary['si_sdr_out']['mean']:.2f} dB")
        else:
            print(f"[enhance] steps={n_steps} wrote enhanced audio (no references, no metrics)")
    if len(sweep_rows) > 1:
        with open(out_dir / "metrics_by_steps.csv", "w", newline="") as fh:
            fields = sorted({k for row in sweep_rows for k in row})
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(sweep_rows)
    return EXIT_OK


# -- simulate -----------------------------------------------------------------------


def cmd_simulate(args):
    kinds = (sorted(SCHEDULES) if args.schedule == "all"
             else [k.strip().lower() for k in args.schedule.split(",") if k.strip()])
    unknown = [k for k in kinds if k not in SCHEDULES]
    if unknown:
        raise ConfigError(f"unknown schedule name(s): {unknown}")
    times = ([float(v) for v in args.t_grid.split(",")] if args.t_grid
             else list(DEFAULT_TIMES))
    _write_manifest(args.out_dir, "simulate", args)
    rng = derive_rng(args.seed, 8)
    x, y = toy_endpoints(args.toy_dim)
    all_rows, all_ok = [], True
    for kind in kinds:
        schedule = make_schedule(kind)
        rows, ok = simulate_statistics(
            schedule, times=times, n_trajectories=args.trajectories, rng=rng,
            x=x, y=y, corrupt_variance=args.corrupt_variance)
        all_rows += rows
        all_ok &= ok
        print(f"[simulate] {kind}: {'PASS' if ok else 'FAIL'} "
              f"({sum(not r['passed'] for r in rows)} of {len(rows)} checks failed)")
    write_rows_csv(all_rows, Path(args.out_dir) / "simulate_moments.csv")
    return EXIT_OK if all_ok else EXIT_STATS


# -- argument wiring ------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sbridge",
        description="Bridge-process generative signal enhancement toolkit")
    parser.add_argument("--version", action="version", version=f"sbridge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file with per-subcommand defaults")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic paired dataset")
    common(p)
    p.add_argument("--task", choices=("denoise", "dereverb"), default="denoise")
    p.add_argument("--n-examples", type=int, default=8)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--snr-range", type=float, nargs=2, default=(-6.0, 14.0))
    p.add_argument("--t60-range", type=float, nargs=2, default=(0.4, 1.0))
    p.add_argument("--clean-kind", choices=("harmonic", "chirp", "ar2"), default="harmonic")
    p.add_argument("--noise-kind", choices=("white", "pink"), default="white")
    p.add_argument("--clean-dir", default=None,
                   help="use WAV files from this directory as clean material")
    p.add_argument("--noise-dir", default=None,
                   help="use WAV files from this directory as noise material")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("schedule-dump", help="dump schedule weights/variance as CSV")
    common(p)
    p.add_argument("--schedules", default="sbve,sbvp,ouve")
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_schedule_dump)

    p = sub.add_parser("train", help="train the small denoiser on a dataset")
    common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--schedule", choices=("sbve", "sbvp"), default="sbve")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lambda-aux", type=float, default=1e-3)
    p.add_argument("--aux-kind", choices=("l1", "soft_sisdr", "none"), default="l1")
    p.add_argument("--ema-decay", type=float, default=0.999)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--hidden", default="64,64")
    p.add_argument("--val-fraction", type=float, default=0.15)
    p.add_argument("--select-by-si-sdr", action="store_true",
                   help="select best epoch by validation SI-SDR instead of loss")
    p.add_argument("--resume", help="checkpoint to continue training from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance a WAV file or a dataset directory")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--oracle", action="store_true",
                   help="use the clean reference as the denoiser (paired data only)")
    p.add_argument("--schedule", choices=("sbve", "sbvp"), default="sbve",
                   help="schedule for --oracle runs (checkpoints carry their own)")
    p.add_argument("--sampler", choices=("sde", "ode"), default="sde")
    p.add_argument("--steps", default="50",
                   help="step count, or comma-separated counts for a sweep")
    p.add_argument("--use-ema", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dump-trajectory", action="store_true")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("simulate", help="Monte-Carlo check of the closed-form statistics")
    common(p)
    p.add_argument("--schedule", default="all")
    p.add_argument("--trajectories", type=int, default=100_000)
    p.add_argument("--t-grid", default=None, help="comma-separated times in (0, T)")
    p.add_argument("--toy-dim", type=int, default=2)
    p.add_argument("--corrupt-variance", type=float, default=1.0,
                   help="test hook: scale the sampled std to force failures")
    p.set_defaults(func=cmd_simulate)
    return parser


def _apply_config_file(parser, argv):
    """Let a JSON config supply defaults that explicit flags override."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    try:
        with open(known.config) as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {known.config}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if config.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {config.get('version')!r}")
    command = next((a for a in argv if not a.startswith("-")), None)
    section = config.get(command, {}) if command else {}
    if not isinstance(section, dict):
        raise ConfigError(f"config section {command!r} must be an object")
    subparsers = next(a for a in parser._actions
                      if isinstance(a, argparse._SubParsersAction))
    if command in subparsers.choices:
        target = subparsers.choices[command]
        valid = {a.dest for a in target._actions}
        unknown = set(section) - valid
        if unknown:
            raise ConfigError(f"unknown config keys for {command!r}: {sorted(unknown)}")
        target.set_defaults(**section)
    return argv


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, TrainingDivergedError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
