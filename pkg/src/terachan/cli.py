"""Command-line entry point: dataset / train / sample / eval subcommands.

Every subcommand is deterministic given (config, seed), writes its outputs
under --out-dir, and echoes the fully resolved configuration next to them.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import report
from .autodiff import Tensor
from .channel import (
    FormatError,
    SampleError,
    ScalerError,
    denormalize,
    read_dataset,
    read_scaler,
    write_dataset,
    write_scaler,
)
from .config import ConfigError, RunConfig, load_config
from .metrics import GridMismatchError, MetricError, angular_spread, delay_spread
from .model import arrays_to_params, generator_forward
from .plots import training_curves_figure
from .rng import stream
from .synthetic import Dataset, GeneratorConfigError, generate_dataset
from .training import DivergenceError, Trainer

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DIVERGED = 3

# stream ids for the sample subcommand
_SAMPLE_DIST, _SAMPLE_NOISE = 20, 21

_USER_ERRORS = (
    ConfigError,
    FormatError,
    SampleError,
    ScalerError,
    MetricError,
    GridMismatchError,
    GeneratorConfigError,
    ckpt_io.CheckpointError,
    FileNotFoundError,
    ValueError,
)


def _prepare_out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(cfg.to_text())
    return out


def load_dataset_files(dataset_path, scaler_path=None) -> Dataset:
    """Rebuild a Dataset from files; file order encodes the 80/20 split."""
    dataset_path = Path(dataset_path)
    if scaler_path is None:
        scaler_path = dataset_path.parent / "scaler.txt"
    samples = read_dataset(dataset_path)
    if len(samples) < 10:
        raise FormatError(f"dataset {dataset_path} has only {len(samples)} samples")
    scaler = read_scaler(scaler_path)
    n_train = int(len(samples) * 0.8)
    return Dataset(train=samples[:n_train], test=samples[n_train:], scaler=scaler, config=None)


def cmd_dataset(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = _prepare_out_dir(args, cfg)
    dataset = generate_dataset(cfg.generator_config())
    write_dataset(out / "dataset.txt", dataset.train + dataset.test)
    write_scaler(out / "scaler.txt", dataset.scaler)
    ds = np.mean([delay_spread(s) for s in dataset.all_samples])
    sp = np.mean([angular_spread(s) for s in dataset.all_samples])
    print(f"wrote {len(dataset.train)} train + {len(dataset.test)} test samples to {out / 'dataset.txt'}")
    print(f"mean delay spread {ds * 1e9:.2f} ns, mean angular spread {sp:.2f} deg")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = _prepare_out_dir(args, cfg)
    dataset = load_dataset_files(args.dataset, args.scaler)
    train_cfg = cfg.train_config()

    if args.resume:
        trainer = Trainer.from_checkpoint(dataset, ckpt_io.load(args.resume), train_cfg)
        print(f"resumed from {args.resume} at epoch {trainer.epoch}")
    else:
        trainer = Trainer(dataset, cfg.encoder_config(), train_cfg)

    stride = max(1, train_cfg.epochs // 50)

    def progress(epoch, deltas):
        if deltas is not None:
            print(
                f"epoch {epoch}/{train_cfg.epochs}: delay spread gap "
                f"{deltas['delay_spread_delta']:.1%}, angular spread gap "
                f"{deltas['angle_spread_delta']:.1%}"
            )
        elif epoch % stride == 0:
            row = trainer.log.rows[-1]
            print(f"epoch {epoch}/{train_cfg.epochs}: d_loss {row['d_loss']:.4f}, "
                  f"penalty {row['penalty']:.4f}")

    try:
        trainer.run(out_dir=out, progress=progress)
    except DivergenceError as err:
        print(f"training diverged: {err}", file=sys.stderr)
        ckpt_io.save(out / "checkpoint_diverged.bin", trainer.checkpoint())
        trainer.log.write_csv(out / "trainlog.csv")
        return EXIT_DIVERGED
    if trainer.log.rows:
        training_curves_figure(trainer.log.rows, out / "trainlog.png")
    print(f"finished {trainer.epoch} epochs; final checkpoint at {out / 'checkpoint_final.bin'}")
    return EXIT_OK


def _sample_distances(args, scaler, rng) -> np.ndarray:
    if args.distance is not None:
        return np.full(args.count, args.distance)
    if args.distance_range is not None:
        lo, hi = args.distance_range
    else:
        lo, hi = scaler.bounds["distance"]
    if not hi > lo > 0:
        raise ValueError(f"bad distance range ({lo}, {hi})")
    return rng.uniform(lo, hi, size=args.count)


def cmd_sample(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = _prepare_out_dir(args, cfg)
    ckpt = ckpt_io.load(args.checkpoint)
    if ckpt.scaler is None:
        raise ckpt_io.CheckpointError("checkpoint carries no scaler; cannot denormalize")
    if args.count < 0:
        raise ValueError("count must be >= 0")
    seed = cfg["seed"]
    distances = _sample_distances(args, ckpt.scaler, stream(seed, _SAMPLE_DIST))
    rng_z = stream(seed, _SAMPLE_NOISE)

    params = arrays_to_params(ckpt.gen_params)
    enc = ckpt.encoder_config
    samples = []
    for start in range(0, args.count, 256):
        block = distances[start:start + 256]
        conds = np.array([[ckpt.scaler.to01("distance", d)] for d in block])
        z = rng_z.standard_normal((len(block), enc.noise_dim))
        vecs = generator_forward(Tensor(z), Tensor(conds), params, enc).data
        samples.extend(
            denormalize(vecs[i], float(conds[i, 0]), ckpt.scaler) for i in range(len(block))
        )
    write_dataset(out / "dataset.txt", samples)
    print(f"wrote {len(samples)} generated samples to {out / 'dataset.txt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = _prepare_out_dir(args, cfg)
    real = read_dataset(args.real)
    generated = read_dataset(args.generated)
    if not real or not generated:
        raise MetricError("both datasets must be non-empty for evaluation")
    summary = report.write_report(
        real, generated, cfg.pdap_config(), out, ssim_gap=cfg["eval.ssim_distance_gap"]
    )
    print(f"PDAP RMSE: {summary['pdap_rmse_db']:.3f} dB")
    print(f"delay spread gap: {summary['delay_spread_gap_rel']:.1%}, "
          f"angular spread gap: {summary['angular_spread_gap_rel']:.1%}")
    if summary["ssim"]:
        print(f"median SSIM: {summary['ssim']['median']:.3f} over {summary['ssim']['pair_count']} pairs")
    print(f"report written under {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="terachan",
        description="Conditional transformer-GAN channel generator with statistics tooling.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key = value config file")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out-dir", default="out", help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", parents=[common], help="generate the synthetic ground-truth dataset")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", parents=[common], help="train the GAN on a dataset file")
    p.add_argument("--dataset", required=True, help="dataset file from the dataset subcommand")
    p.add_argument("--scaler", default=None, help="scaler file (default: scaler.txt next to dataset)")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="draw channel samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--distance", type=float, default=None, help="fixed link distance, meters")
    group.add_argument("--distance-range", type=float, nargs=2, default=None,
                       metavar=("MIN", "MAX"), help="uniform distance range, meters")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", parents=[common], help="compare two dataset files statistically")
    p.add_argument("--real", required=True, help="reference dataset file")
    p.add_argument("--generated", required=True, help="generated dataset file")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
