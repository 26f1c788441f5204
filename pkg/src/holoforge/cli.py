"""Command-line entry point.

Subcommands: dataset-synth, train, infer, reconstruct, evaluate, gradcheck.
Every run is deterministic given its flags; failures print one line to
stderr prefixed with `error:` and exit nonzero (1 for usage problems, 2 for
runtime failures).

This module reads HOLOFORGE_THREADS and caps the BLAS/OpenMP pools before
numpy is imported, which is why all heavy imports live inside the command
handlers and the package root imports nothing numeric.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _cap_threads():
    cap = os.environ.get("HOLOFORGE_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, cap)


_cap_threads()


class UsageError(Exception):
    """Bad flag values caught before any real work starts (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="holoforge",
                     description="RGB-only volumetric hologram toolkit: synthetic data, "
                                 "two-phase training, inference, and numerical refocusing.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                                parser_class=_Parser)
    parser.subcommands = sub

    p = sub.add_parser("dataset-synth", help="generate a synthetic RGB+hologram corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", required=True, type=_positive_int, help="number of samples")
    p.add_argument("--size", type=int, default=64, help="image size, power of two (default 64)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--wavelength", type=float, default=520e-9, help="meters (default 520e-9)")
    p.add_argument("--pitch", type=float, default=8e-6, help="pixel pitch in meters (default 8e-6)")
    p.add_argument("--layers", type=int, default=8, help="depth layers (default 8)")
    p.add_argument("--z-min", type=float, default=0.0, help="nearest plane in meters")
    p.add_argument("--z-max", type=float, default=6e-3, help="farthest plane in meters")
    p.add_argument("--workers", type=_positive_int, default=1, help="parallel sample generation")
    p.set_defaults(handler=cmd_dataset_synth)

    p = sub.add_parser("train", help="run phase 1, phase 2, or both")
    p.add_argument("--data", required=True, help="dataset root (with manifest.json)")
    p.add_argument("--phase", choices=["1", "2", "both"], default="both")
    p.add_argument("--epochs", type=_positive_int, default=20)
    p.add_argument("--batch", type=_positive_int, default=4)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--preset", choices=["toy", "paper"], default="toy")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--ckpt-out", required=True, help="directory for checkpoints and histories")
    p.add_argument("--init", help="checkpoint to start from (required for --phase 2)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("infer", help="predict depth, amplitude, and phase from one RGB image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--rgb", required=True, help="input PNG; resized to the model's input size")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_infer)

    p = sub.add_parser("reconstruct", help="numerically refocus a stored hologram")
    p.add_argument("--amp", required=True, help="amplitude PFM")
    p.add_argument("--phase", required=True, help="phase PFM")
    p.add_argument("--scale", type=float, default=1.0, help="amplitude scale factor (default 1)")
    p.add_argument("--z", action="append", type=float, required=True,
                   help="propagation distance in meters; repeat for a focal stack")
    p.add_argument("--wavelength", type=float, default=520e-9)
    p.add_argument("--pitch", type=float, default=8e-6)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report of a checkpoint against a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the autograd ops")
    p.add_argument("--ops", default="all", help="'all' or one op name")
    p.add_argument("--precision", choices=["64"], default="64",
                   help="checks always run in 64-bit mode")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(handler=cmd_gradcheck)

    return parser


# ---------------------------------------------------------------------------
# handlers

def cmd_dataset_synth(args) -> int:
    from holoforge import dataset, optics

    if not optics.is_power_of_two(args.size):
        raise UsageError(f"--size must be a power of two, got {args.size}")
    if args.n < 3:
        raise UsageError(f"--n must be at least 3 to fill three splits, got {args.n}")
    params = optics.PropagationParams(wavelength=args.wavelength, pitch=args.pitch,
                                      n_layers=args.layers, z_range=(args.z_min, args.z_max))
    manifest = dataset.generate_dataset(args.out, args.n, args.size, args.seed, params,
                                        workers=args.workers)
    counts = {s: len(manifest.split_ids(s)) for s in ("train", "val", "test")}
    print(f"wrote {args.n} samples ({counts['train']}/{counts['val']}/{counts['test']} "
          f"train/val/test) at size {args.size} to {args.out}")
    return 0


def _load_model(ckpt_path):
    from holoforge import checkpoint as ckpt_io
    from holoforge.model import ArchConfig, HoloNet

    arrays, meta = ckpt_io.load_checkpoint(ckpt_path)
    try:
        config = ArchConfig(input_size=int(meta["input_size"]),
                            encoder_channels=tuple(int(c) for c in meta["encoder_channels"]),
                            preset=meta.get("preset", "custom"))
    except KeyError as e:
        raise ValueError(f"checkpoint {ckpt_path} lacks architecture metadata ({e})") from None
    model = HoloNet(config)
    model.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("optim.")})
    return model, meta


def _mean_val_loss(model, samples, phase: int, cfg, loss_cfg) -> float:
    import numpy as np

    from holoforge import training
    from holoforge.autograd.tensor import Tensor, no_grad

    model.eval()
    losses = []
    for start in range(0, len(samples), cfg.batch_size):
        idx = range(start, min(start + cfg.batch_size, len(samples)))
        rgb, depth, amp, phase_gt = training.stack_batch(samples, idx)
        with no_grad():
            if phase == 1:
                ef = model.encode(Tensor(rgb))
                _, pred = model.decode(ef)
                loss = training.loss_phase1(pred, Tensor(depth), loss_cfg)
            else:
                out = model.forward(Tensor(rgb))
                loss = training.loss_phase2(out.amplitude, out.phase,
                                            Tensor(amp), Tensor(phase_gt), loss_cfg)
        losses.append(loss.item())
    return float(np.mean(losses))


def cmd_train(args) -> int:
    from holoforge import dataset, training
    from holoforge.model import build_model

    if args.phase == "2" and not args.init:
        raise UsageError("--phase 2 needs --init pointing at a phase-1 checkpoint")

    cfg = training.TrainConfig(epochs=args.epochs, batch_size=args.batch,
                               learning_rate=args.lr, seed=args.seed,
                               phase=args.phase, preset=args.preset)
    loss_cfg = training.LossConfig()
    manifest = dataset.load_manifest(args.data)
    train_samples = dataset.load_split(manifest, "train")
    val_samples = dataset.load_split(manifest, "val")
    ckpt_dir = Path(args.ckpt_out)
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    model = build_model(args.preset, seed=args.seed)
    if args.init:
        training.load_training_checkpoint(args.init, model)

    last_line = []

    def run_phase(phase: int):
        best = [float("inf")]

        def on_epoch(epoch, mdl, optim, history):
            training.save_training_checkpoint(
                ckpt_dir / f"phase{phase}_last.ckpt", mdl, optim,
                phase=phase, epoch=epoch + 1, seed=cfg.seed)
            if val_samples:
                vloss = _mean_val_loss(mdl, val_samples, phase, cfg, loss_cfg)
                history.setdefault("val_loss", []).append(vloss)
                if vloss < best[0]:
                    best[0] = vloss
                    training.save_training_checkpoint(
                        ckpt_dir / f"phase{phase}_best.ckpt", mdl, optim,
                        phase=phase, epoch=epoch + 1, seed=cfg.seed)

        runner = training.train_phase1 if phase == 1 else training.train_phase2
        history, optimizer = runner(model, train_samples, cfg, loss_cfg, on_epoch=on_epoch)
        training.save_training_checkpoint(ckpt_dir / f"phase{phase}_final.ckpt", model, optimizer,
                                          phase=phase, epoch=cfg.epochs, seed=cfg.seed)
        (ckpt_dir / f"history_phase{phase}.json").write_text(json.dumps(history, indent=2) + "\n")
        last_line.append(f"phase {phase}: {cfg.epochs} epochs, "
                         f"loss {history['epoch_loss'][0]:.6f} -> {history['epoch_loss'][-1]:.6f}")

    if args.phase in ("1", "both"):
        run_phase(1)
    if args.phase in ("2", "both"):
        run_phase(2)
    print("; ".join(last_line) + f"; checkpoints in {ckpt_dir}")
    return 0


def cmd_infer(args) -> int:
    from holoforge import image_io
    from holoforge.autograd.tensor import Tensor, no_grad

    model, meta = _load_model(args.ckpt)
    size = model.config.input_size
    rgb = image_io.load_png(args.rgb, size=size)
    if rgb.ndim != 3:
        raise ValueError(f"{args.rgb} is not a color image; the model takes (3,{size},{size}) RGB")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    model.eval()
    with no_grad():
        out = model.forward(Tensor(rgb[None]))
    maps = {"depth": out.depth.data[0, 0], "amp": out.amplitude.data[0, 0],
            "phase": out.phase.data[0, 0]}
    for name, arr in maps.items():
        image_io.save_pfm(arr, out_dir / f"{name}.pfm")
        image_io.save_png(arr, out_dir / f"{name}.png")
    print(f"inferred depth/amp/phase ({size}x{size}) from {args.rgb} into {out_dir}")
    return 0


def cmd_reconstruct(args) -> int:
    from holoforge import image_io, optics

    amp = image_io.load_pfm(args.amp)
    phase = image_io.load_pfm(args.phase)
    if amp.ndim != 2 or phase.ndim != 2:
        raise ValueError("amplitude and phase must be single-channel PFM images")
    params = optics.PropagationParams(wavelength=args.wavelength, pitch=args.pitch)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, z in enumerate(args.z):
        intensity = optics.reconstruct(amp, phase, args.scale, z, params)
        name = f"recon_{i:02d}.png"
        image_io.save_png(intensity.astype("float32"), out_dir / name)
        names.append(f"{name} (z={z:.6g} m)")
    print(f"wrote {len(names)} reconstruction(s) to {out_dir}: " + ", ".join(names))
    return 0


def cmd_evaluate(args) -> int:
    from holoforge import dataset, training

    model, meta = _load_model(args.ckpt)
    manifest = dataset.load_manifest(args.data)
    samples = dataset.load_split(manifest, args.split)
    report = training.evaluate(model, samples, split=args.split)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2) + "\n")
    print(f"split {args.split}: n={report['n']} "
          f"psnr_amp={report['psnr_amp']['mean']:.2f}dB ssim_amp={report['ssim_amp']['mean']:.4f} "
          f"psnr_phase={report['psnr_phase']['mean']:.2f}dB ssim_phase={report['ssim_phase']['mean']:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from holoforge.autograd import gradcheck

    if args.ops == "all":
        names = list(gradcheck.OP_CASES)
    elif args.ops in gradcheck.OP_CASES:
        names = [args.ops]
    else:
        known = ", ".join(gradcheck.OP_CASES)
        raise UsageError(f"unknown op '{args.ops}'; expected 'all' or one of: {known}")

    width = max(len(n) for n in names)
    print(f"{'op':<{width}}  cases  max_rel_err  verdict")
    failed = False
    for name in names:
        result = gradcheck.check_op(name, seed=args.seed)
        verdict = "pass" if result.passed else "FAIL"
        failed = failed or not result.passed
        print(f"{name:<{width}}  {result.cases:>5}  {result.max_rel_err:>11.3e}  {verdict}")
    if failed:
        print("error: at least one gradient check failed", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------

def _extract_config(argv):
    """Pull a leading/anywhere `--config FILE` out of argv; returns (dict, rest)."""
    rest = []
    overrides = {}
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a JSON file path")
            path = argv[i + 1]
            i += 2
        elif arg.startswith("--config="):
            path = arg.split("=", 1)[1]
            i += 1
        else:
            rest.append(arg)
            i += 1
            continue
        try:
            loaded = json.loads(Path(path).read_text())
        except OSError as e:
            raise UsageError(f"cannot read config file: {e}")
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {path} must hold a JSON object of flag defaults")
        overrides.update({k.replace("-", "_"): v for k, v in loaded.items()})
    return overrides, rest


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        overrides, argv = _extract_config(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    parser = build_parser()
    if overrides:
        # subparsers keep their own default tables, so a bare
        # parser.set_defaults on the root would be shadowed
        parser.set_defaults(**overrides)
        for sub in parser.subcommands.choices.values():
            sub.set_defaults(**{k: v for k, v in overrides.items()
                                if any(a.dest == k for a in sub._actions)})
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.handler(args) or 0
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
