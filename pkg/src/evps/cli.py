"""Command-line front end: simulate, solve, train, infer, eval, viz.

Exit codes: 0 success, 1 usage error, 2 data error. Every subcommand is
pipeable through files only, and every run writes its fully resolved
configuration next to its primary output (a .run.json sidecar, or the
[config] section of the eval report), so runs are self-describing and
reproducible. Heavy imports happen after argument parsing so the
--threads flag can pin BLAS pools before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

DEFAULT_ELEVATION = math.pi / 4


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this front end reserves 2 for
    data errors, so remap usage failures to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _threads_arg(value: str) -> str:
    if value != "auto" and (not value.isdigit() or int(value) < 1):
        raise argparse.ArgumentTypeError(
            f"must be a positive integer or 'auto', got {value!r}")
    return value


def _build_parser() -> _Parser:
    parser = _Parser(prog="evps", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", default="auto", type=_threads_arg,
                        help="worker threads for linear algebra (integer or 'auto')")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render a scene and synthesize events")
    p.add_argument("--kind", choices=("sphere", "gaussian-bumps", "ramp"),
                   default="sphere")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--radius", type=float, default=None,
                   help="sphere radius in pixels (default min(width, height))")
    p.add_argument("--tilt", type=float, default=math.pi / 6,
                   help="ramp tilt about the y axis, radians")
    p.add_argument("--randomize-brdf", action="store_true")
    p.add_argument("--frames-per-cycle", type=int, default=100)
    p.add_argument("--cycles", type=int, default=2)
    p.add_argument("--threshold-mean", type=float, default=0.2)
    p.add_argument("--threshold-std", type=float, default=0.02)
    p.add_argument("--period", type=float, default=1.0)
    p.add_argument("--elevation", type=float, default=DEFAULT_ELEVATION)
    p.add_argument("--direction", type=int, choices=(1, -1), default=1)
    p.add_argument("--azimuth-offset", type=float, default=0.0)
    p.add_argument("--events-out", required=True)
    p.add_argument("--normals-out", required=True)

    p = sub.add_parser("solve", help="analytic normal recovery from events")
    p.add_argument("--events", required=True)
    p.add_argument("--contrast", type=float, default=0.2,
                   help="contrast threshold C assumed for integration")
    p.add_argument("--elevation", type=float, default=None,
                   help="light elevation, radians (default: event file header)")
    p.add_argument("--segments", type=int, default=96)
    p.add_argument("--min-events", type=int, default=4)
    p.add_argument("--cycle", type=int, default=1,
                   help="rotation cycle to solve on (default second)")
    p.add_argument("--crop", type=int, default=None,
                   help="center-crop the sensor to this many pixels square")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the per-pixel network")
    p.add_argument("--pair", nargs=2, action="append", required=True,
                   metavar=("EVENTS", "NORMALS"),
                   help="event file + ground-truth normal file (repeatable)")
    p.add_argument("--preset", choices=("small", "paper"), default="small")
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--segments", type=int, default=96)
    p.add_argument("--cycle", type=int, default=1)
    p.add_argument("--crop", type=int, default=None)
    p.add_argument("--val-fraction", type=float, default=0.0,
                   help="fraction of scene pairs held out for validation")
    p.add_argument("--model-out", required=True)

    p = sub.add_parser("infer", help="network normal recovery from events")
    p.add_argument("--model", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--cycle", type=int, default=1)
    p.add_argument("--crop", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="compare a predicted normal map to ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--events", default=None,
                   help="event file enabling the per-event-count MAE table")
    p.add_argument("--cycle", type=int, default=1)
    p.add_argument("--crop", type=int, default=None)
    p.add_argument("--bin-width", type=int, default=2)
    p.add_argument("--max-count", type=int, default=20)
    p.add_argument("--max-degrees", type=float, default=45.0,
                   help="error figure color scale limit")
    p.add_argument("--report", required=True)

    p = sub.add_parser("viz", help="render a normal file (or error vs --gt) to an image")
    p.add_argument("--normals", required=True)
    p.add_argument("--gt", default=None,
                   help="ground-truth normal file; renders angular error instead")
    p.add_argument("--max-degrees", type=float, default=45.0)
    p.add_argument("--out", required=True)

    return parser


def _set_threads(threads: str):
    if threads == "auto":
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = threads


def _write_sidecar(primary_output, config: dict):
    with open(str(primary_output) + ".run.json", "w", encoding="ascii") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cycle(path, cycle, crop):
    from . import io, simulator
    stream = io.read_events(path)
    if crop is not None:
        stream = simulator.center_crop(stream, crop)
    return simulator.select_cycle(stream, cycle)


def _cmd_simulate(args) -> int:
    from . import io, simulator
    from .core import ContrastThresholdModel, LightTrajectory
    scene = simulator.make_scene(args.kind, seed=args.seed, width=args.width,
                                 height=args.height,
                                 randomize_brdf=args.randomize_brdf,
                                 radius=args.radius, tilt=args.tilt)
    trajectory = LightTrajectory(args.elevation, args.period, args.direction,
                                 args.azimuth_offset)
    frames = simulator.render_sequence(scene, trajectory,
                                       frames_per_cycle=args.frames_per_cycle,
                                       cycles=args.cycles)
    threshold = ContrastThresholdModel(args.threshold_mean, args.threshold_std,
                                       seed=args.seed + 1)
    stream = simulator.simulate_events(frames, threshold)
    io.write_events(stream, args.events_out)
    io.write_normals(scene.normals, args.normals_out)
    _write_sidecar(args.events_out, {
        "command": "simulate", "kind": args.kind, "seed": args.seed,
        "width": args.width, "height": args.height, "radius": args.radius,
        "tilt": args.tilt, "randomize_brdf": args.randomize_brdf,
        "frames_per_cycle": args.frames_per_cycle, "cycles": args.cycles,
        "threshold_mean": args.threshold_mean, "threshold_std": args.threshold_std,
        "threshold_seed": args.seed + 1, "period": args.period,
        "elevation": args.elevation, "direction": args.direction,
        "azimuth_offset": args.azimuth_offset, "events_out": args.events_out,
        "normals_out": args.normals_out, "n_events": len(stream),
    })
    print(f"wrote {len(stream)} events to {args.events_out}")
    return 0


def _cmd_solve(args) -> int:
    from . import analytic, io
    stream = _load_cycle(args.events, args.cycle, args.crop)
    elevation = args.elevation if args.elevation is not None else stream.trajectory.elevation
    nmap = analytic.solve_map(stream, contrast=args.contrast, elevation=elevation,
                              n_segments=args.segments, min_events=args.min_events)
    io.write_normals(nmap, args.out)
    _write_sidecar(args.out, {
        "command": "solve", "events": args.events, "contrast": args.contrast,
        "elevation": elevation, "segments": args.segments,
        "min_events": args.min_events, "cycle": args.cycle, "crop": args.crop,
        "out": args.out, "valid_pixels": int(nmap.mask.sum()),
    })
    print(f"solved {int(nmap.mask.sum())} pixels to {args.out}")
    return 0


def _crop_map(nmap, size):
    from .core import NormalMap
    if size > nmap.width or size > nmap.height:
        raise ValueError("crop exceeds the normal map")
    x0 = (nmap.width - size) // 2
    y0 = (nmap.height - size) // 2
    return NormalMap(nmap.normals[y0:y0 + size, x0:x0 + size],
                     nmap.mask[y0:y0 + size, x0:x0 + size])


def _cmd_train(args) -> int:
    import numpy as np

    from . import io, network, report, representation
    if not 0.0 <= args.val_fraction < 1.0:
        raise ValueError("--val-fraction must lie in [0, 1)")
    datasets = []
    for events_path, normals_path in args.pair:
        stream = _load_cycle(events_path, args.cycle, args.crop)
        gt = io.read_normals(normals_path)
        if args.crop is not None:
            gt = _crop_map(gt, args.crop)
        _, counts = representation.polarity_matrix(stream, args.segments)
        mask = gt.mask & (counts.reshape(gt.mask.shape) > 0)
        datasets.append(representation.build_dataset(
            stream, mask, n_segments=args.segments, ground_truth=gt))
    n_val = int(round(args.val_fraction * len(datasets)))
    if n_val >= len(datasets):
        raise ValueError("validation fraction leaves no training scenes")
    train_set = representation.PixelDataset.concatenate(datasets[:len(datasets) - n_val])
    val_set = (representation.PixelDataset.concatenate(datasets[len(datasets) - n_val:])
               if n_val else None)

    preset = network.small_config if args.preset == "small" else network.paper_config
    config = preset(input_width=args.segments, dropout=args.dropout, seed=args.seed)
    tcfg = network.TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                               epochs=args.epochs, seed=args.seed)
    model, history = network.train(network.init_model(config), train_set, tcfg,
                                   validation=val_set)
    io.write_model(model, args.model_out)
    report.write_history_csv(history, args.model_out + ".history.csv")
    report.save_loss_figure(history, args.model_out + ".loss.png")
    final_loss = history.losses[-1] if history.losses else None
    _write_sidecar(args.model_out, {
        "command": "train", "pairs": args.pair, "preset": args.preset,
        "widths": list(config.widths), "dropout": args.dropout,
        "epochs": args.epochs, "lr": args.lr, "batch": args.batch,
        "seed": args.seed, "segments": args.segments, "cycle": args.cycle,
        "crop": args.crop, "val_fraction": args.val_fraction,
        "train_samples": len(train_set),
        "val_samples": len(val_set) if val_set is not None else 0,
        "final_loss": final_loss, "model_out": args.model_out,
    })
    msg = f"trained on {len(train_set)} samples"
    if final_loss is not None:
        msg += f", final loss {final_loss:.6f}"
    print(msg + f", checkpoint at {args.model_out}")
    return 0


def _cmd_infer(args) -> int:
    from . import io, network
    model = io.read_model(args.model)
    stream = _load_cycle(args.events, args.cycle, args.crop)
    nmap = network.infer_map(model, stream)
    io.write_normals(nmap, args.out)
    _write_sidecar(args.out, {
        "command": "infer", "model": args.model, "events": args.events,
        "cycle": args.cycle, "crop": args.crop,
        "segments": model.config.input_width, "out": args.out,
        "valid_pixels": int(nmap.mask.sum()),
    })
    print(f"inferred {int(nmap.mask.sum())} pixels to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from . import evaluation, io, report
    pred = io.read_normals(args.pred)
    gt = io.read_normals(args.gt)
    overall = evaluation.mae(pred, gt)
    errmap = evaluation.error_map(pred, gt)
    summary = {
        "mae_degrees": overall,
        "evaluated_pixels": int(errmap.mask.sum()),
    }
    binned = None
    if args.events is not None:
        stream = _load_cycle(args.events, args.cycle, args.crop)
        binned = evaluation.mae_by_event_count(pred, gt, stream,
                                               bin_width=args.bin_width,
                                               max_count=args.max_count)
        summary["binned_pixels"] = int(binned.pixel_counts.sum())
        summary["binned_mae_degrees"] = binned.overall_mae()
    config = {
        "command": "eval", "pred": args.pred, "gt": args.gt,
        "events": args.events, "cycle": args.cycle, "crop": args.crop,
        "bin_width": args.bin_width, "max_count": args.max_count,
        "max_degrees": args.max_degrees, "report": args.report,
    }
    report.write_report(args.report, summary, config, binned)
    report.save_error_figure(errmap, args.report + ".error.png", args.max_degrees)
    if binned is not None:
        report.save_binned_figure(binned, args.report + ".bins.png")
    print(f"MAE {overall:.4f} deg over {summary['evaluated_pixels']} pixels; "
          f"report at {args.report}")
    return 0


def _cmd_viz(args) -> int:
    from . import evaluation, io
    nmap = io.read_normals(args.normals)
    if args.gt is None:
        rgb = io.visualize_normals(nmap)
    else:
        gt = io.read_normals(args.gt)
        rgb = io.visualize_error(evaluation.error_map(nmap, gt), args.max_degrees)
    io.save_image(rgb, args.out)
    _write_sidecar(args.out, {
        "command": "viz", "normals": args.normals, "gt": args.gt,
        "max_degrees": args.max_degrees, "out": args.out,
    })
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "solve": _cmd_solve,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        return _COMMANDS[args.command](args)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
