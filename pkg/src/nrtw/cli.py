"""Command-line entry points for every workflow.

Exit codes: 0 success, 2 usage error (argparse), 1 runtime failure with a
machine-readable ``error: ...`` line on stderr. Every run writes a manifest
next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time

from . import sweeps as sweeps_mod
from .sweeps import SweepConfig, build_nrt_curve, load_curve, save_curve, select_candidate
from .errors import NrtwError
from .formats import read_image, to_png_bytes, write_image
from .manifest import RunManifest
from .metrics import ROI, cnr, resolution_proxy, rmse, roi_std
from .networks import NetworkConfig
from .simulate import (
    NoiseSpec,
    PairedSample,
    PhantomSpec,
    add_noise,
    dataset_spec,
    default_profile,
    generate_phantom,
    window_to_bytes,
)
from .training import Checkpoint, TrainConfig, infer, recursive_infer, train


def _load_phantom_spec(path: str | None, size: int) -> PhantomSpec:
    if path is None:
        return dataset_spec(size)
    with open(path, "r", encoding="utf-8") as fh:
        return PhantomSpec.from_dict(json.load(fh))


def _parse_roi(text: str) -> ROI:
    # "label:row0,col0,height,width"
    label, _, coords = text.partition(":")
    if not coords:
        label, coords = "roi", text
    parts = coords.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(
            f"ROI must be label:row0,col0,height,width, got {text!r}"
        )
    r0, c0, h, w = (int(p) for p in parts)
    return ROI(row0=r0, col0=c0, height=h, width=w, label=label)


# ---------------------------------------------------------------------------
# subcommands


def cmd_phantom(args) -> int:
    spec = _load_phantom_spec(args.spec, args.size)
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(
        "phantom",
        {
            "spec": spec.to_dict(),
            "count": args.count,
            "sigma": args.sigma,
            "size": args.size,
        },
        seeds={"base": args.seed},
    )
    if args.spec:
        manifest.add_input("spec", args.spec)
    listing = []
    for i in range(args.count):
        clean = generate_phantom(spec, seed=args.seed + i)
        sample = add_noise(clean, NoiseSpec(sigma=args.sigma, seed=args.seed + i))
        entry = {}
        for kind, image in (
            ("clean", sample.clean),
            ("noisy", sample.noisy),
            ("noise", sample.noise),
        ):
            fname = f"{kind}_{i:04d}.img"
            write_image(
                os.path.join(args.out, fname),
                image,
                meta={"kind": kind, "index": i, "sigma": args.sigma,
                      "seed": args.seed + i, "dose_factor": sample.dose_factor},
            )
            manifest.add_output(fname, os.path.join(args.out, fname))
            entry[kind] = fname
        entry["dose_factor"] = sample.dose_factor
        listing.append(entry)
    with open(os.path.join(args.out, "samples.json"), "w", encoding="utf-8") as fh:
        json.dump({"samples": listing}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.write(os.path.join(args.out, "run_manifest.json"))
    print(f"wrote {args.count} paired samples to {args.out}")
    return 0


def load_dataset(data_dir: str) -> list[PairedSample]:
    listing_path = os.path.join(data_dir, "samples.json")
    if not os.path.isfile(listing_path):
        raise NrtwError(f"no samples.json in {data_dir}; run `nrtw phantom` first")
    with open(listing_path, "r", encoding="utf-8") as fh:
        listing = json.load(fh)["samples"]
    dataset = []
    for entry in listing:
        clean, _ = read_image(os.path.join(data_dir, entry["clean"]))
        noisy, _ = read_image(os.path.join(data_dir, entry["noisy"]))
        noise, _ = read_image(os.path.join(data_dir, entry["noise"]))
        dataset.append(
            PairedSample(
                clean=clean,
                noisy=noisy,
                noise=noise,
                dose_factor=float(entry.get("dose_factor", 1.0)),
            )
        )
    return dataset


def _net_config(args) -> NetworkConfig:
    if args.arch == "plain":
        return NetworkConfig(
            kind="plain",
            num_layers=args.layers,
            hidden_channels=args.channels,
        )
    return NetworkConfig(
        kind="unet",
        depth=args.depth,
        base_channels=args.base_channels,
    )


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    net_config = _net_config(args)
    train_config = TrainConfig(
        iterations=args.iters,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    manifest = RunManifest(
        "train",
        {
            "network": net_config.to_dict(),
            "training": {
                "iterations": args.iters,
                "learning_rate": args.lr,
                "batch_size": args.batch_size,
            },
            "data_dir": args.data,
        },
        seeds={"train": args.seed},
    )
    manifest.add_input("samples", os.path.join(args.data, "samples.json"))
    t0 = time.perf_counter()
    ckpt = train(dataset, net_config, train_config)
    manifest.add_timing("train_seconds", time.perf_counter() - t0)
    ckpt.save(args.out)
    manifest.add_output("checkpoint", args.out)
    manifest.record(
        "result",
        {
            "final_loss": ckpt.loss_history[-1],
            "initial_loss": ckpt.loss_history[0],
            "parameters": ckpt.params.total_size(),
        },
    )
    manifest.write(f"{args.out}.manifest.json")
    print(
        f"trained {net_config.kind} net for {args.iters} iterations; "
        f"loss {ckpt.loss_history[0]:.3e} -> {ckpt.loss_history[-1]:.3e}"
    )
    return 0


def cmd_denoise(args) -> int:
    ckpt = Checkpoint.load(args.ckpt)
    image, _ = read_image(args.input)
    manifest = RunManifest("denoise", {"k": args.k})
    manifest.add_input("checkpoint", args.ckpt)
    manifest.add_input("image", args.input)
    out = recursive_infer(ckpt, image, args.k) if args.k != 1 else infer(ckpt, image)
    write_image(args.out, out, meta={"kind": "denoised", "k": args.k})
    manifest.add_output("denoised", args.out)
    manifest.write(f"{args.out}.manifest.json")
    print(f"denoised {args.input} -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    ckpt = Checkpoint.load(args.ckpt)
    image, _ = read_image(args.input)
    clean = None
    if args.clean:
        clean, _ = read_image(args.clean)
    config = SweepConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        stop_threshold=args.stop,
        max_iterations=args.max_iters,
        cadence=args.cadence,
        k=args.k,
    )
    directions = {
        "both": sweeps_mod.DIRECTIONS,
        "low": (sweeps_mod.LOW,),
        "high": (sweeps_mod.HIGH,),
    }[args.direction]

    flat_roi = args.flat_roi
    edge_roi = args.edge_roi
    if flat_roi is None and image.shape == (128, 128):
        profile = default_profile(128)
        flat_roi = ROI(*profile.flat_roi, label="flat")
        edge_roi = edge_roi or ROI(*profile.edge_roi, label="edge")

    manifest = RunManifest(
        "sweep",
        {"sweep": config.to_dict(), "direction": args.direction},
    )
    manifest.add_input("checkpoint", args.ckpt)
    manifest.add_input("image", args.input)

    curve = build_nrt_curve(
        ckpt,
        image,
        config,
        clean=clean,
        flat_roi=flat_roi,
        edge_roi=edge_roi,
        directions=directions,
    )

    save_curve(curve, args.out)
    lo, hi = curve.index_range()
    iteration_seconds = [
        s
        for stats in curve.sweep_stats.values()
        for s in stats["iteration_seconds"]
    ]
    if iteration_seconds:
        manifest.record(
            "iteration_timing",
            {
                "iterations": len(iteration_seconds),
                "mean_seconds": statistics.fmean(iteration_seconds),
                "median_seconds": statistics.median(iteration_seconds),
                "max_seconds": max(iteration_seconds),
            },
        )
    manifest.record(
        "result",
        {
            "index_range": [lo, hi],
            "directions": dict(curve.direction_status),
            "candidates": len(curve.candidates),
        },
    )
    manifest.add_output("manifest", os.path.join(args.out, "manifest.json"))
    manifest.write(os.path.join(args.out, "run_manifest.json"))
    print(
        f"curve complete: indices [{lo}, {hi}], "
        f"statuses {curve.direction_status}"
    )
    return 0


def cmd_metrics(args) -> int:
    curve = load_curve(args.curve)
    clean = None
    if args.clean:
        clean, _ = read_image(args.clean)
    rois = args.roi or []
    rows = []
    for cand in curve.ordered():
        image = cand.image
        if clean is not None:
            rows.append((cand.signed_index, "rmse", f"{rmse(image, clean):.4f}"))
        else:
            rows.append((cand.signed_index, "rmse", "unavailable"))
        for roi in rois:
            rows.append(
                (cand.signed_index, f"std[{roi.label}]", f"{roi_std(image, roi):.4f}")
            )
        if args.cnr:
            fg, bg = args.cnr
            rows.append((cand.signed_index, "cnr", f"{cnr(image, fg, bg):.4f}"))
        if args.edge_roi:
            rows.append(
                (
                    cand.signed_index,
                    "resolution_proxy",
                    f"{resolution_proxy(image, args.edge_roi):.4f}",
                )
            )
        if cand.distance_to_target is not None:
            rows.append(
                (
                    cand.signed_index,
                    "distance_to_target",
                    f"{cand.distance_to_target:.4f}",
                )
            )
    print(f"{'index':>6}  {'metric':<24} value")
    for index, name, value in rows:
        print(f"{index:>6}  {name:<24} {value}")
    return 0


def cmd_export(args) -> int:
    curve = load_curve(args.curve)
    cand = select_candidate(curve, args.index)
    lo, hi = args.window
    gray = window_to_bytes(cand.image, lo, hi)
    with open(args.png, "wb") as fh:
        fh.write(to_png_bytes(gray))
    manifest = RunManifest(
        "export", {"index": args.index, "window": [lo, hi]}
    )
    manifest.add_input("curve_manifest", os.path.join(args.curve, "manifest.json"))
    manifest.add_output("png", args.png)
    manifest.write(f"{args.png}.manifest.json")
    print(f"exported candidate {args.index} to {args.png}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise NrtwError(f"address must be host:port, got {args.addr!r}")
    app = create_app(ckpt_dir=args.ckpt_dir, state_dir=args.state_dir)
    if args.ui_dir:
        if not os.path.isdir(args.ui_dir):
            raise NrtwError(f"UI directory {args.ui_dir!r} does not exist")
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=args.ui_dir, html=True), name="ui")
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrtw",
        description="Interactive denoising workbench: phantoms, training, "
        "tradeoff sweeps, metrics, export and serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="JSON config file; explicit flags take precedence"
    )

    p = sub.add_parser("phantom", help="generate paired phantom samples", parents=[common])
    p.add_argument("--spec", help="phantom spec JSON file (default: built-in profile)")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(func=cmd_phantom, _subparser=p)

    p = sub.add_parser("train", help="train a denoiser on a phantom dataset", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=["plain", "unet"], default="plain")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train, _subparser=p)

    p = sub.add_parser("denoise", help="run the denoiser on one image", parents=[common])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-K", "--k", type=int, default=1, help="recursive applications")
    p.set_defaults(func=cmd_denoise, _subparser=p)

    p = sub.add_parser("sweep", help="build a noise-resolution tradeoff curve", parents=[common])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--clean", help="clean reference for RMSE annotations")
    p.add_argument("--direction", choices=["both", "low", "high"], default="both")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--stop", type=float, default=0.01)
    p.add_argument("--cadence", type=int, default=10)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("-K", "--k", type=int, default=3)
    p.add_argument("--flat-roi", type=_parse_roi, help="label:row0,col0,h,w")
    p.add_argument("--edge-roi", type=_parse_roi)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep, _subparser=p)

    p = sub.add_parser("metrics", help="print a metric table for a curve", parents=[common])
    p.add_argument("--curve", required=True)
    p.add_argument("--clean")
    p.add_argument("--roi", type=_parse_roi, action="append")
    p.add_argument(
        "--cnr",
        nargs=2,
        type=_parse_roi,
        metavar=("FG", "BG"),
        help="foreground and background ROIs",
    )
    p.add_argument("--edge-roi", type=_parse_roi)
    p.set_defaults(func=cmd_metrics, _subparser=p)

    p = sub.add_parser("export", help="export a windowed candidate as PNG", parents=[common])
    p.add_argument("--curve", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument(
        "--window", nargs=2, type=float, default=[-160.0, 240.0],
        metavar=("LOW", "HIGH"),
    )
    p.add_argument("--png", required=True)
    p.set_defaults(func=cmd_export, _subparser=p)

    p = sub.add_parser("serve", help="run the HTTP service", parents=[common])
    p.add_argument("--addr", default="127.0.0.1:8470")
    p.add_argument("--ckpt-dir", required=True)
    p.add_argument("--state-dir", required=True)
    p.add_argument("--ui-dir", help="serve a built frontend from this directory")
    p.set_defaults(func=cmd_serve, _subparser=p)

    return parser


def _apply_config_file(args) -> None:
    """Config-file values fill in flags the user left at their defaults;
    explicit flags always win."""
    if not getattr(args, "config", None):
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    section = config.get(args.command, {})
    if not isinstance(section, dict):
        raise NrtwError(f"config section {args.command!r} must be an object")
    subparser = args._subparser
    for key, value in section.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise NrtwError(f"unknown config key {key!r} for {args.command!r}")
        if getattr(args, dest) == subparser.get_default(dest):
            setattr(args, dest, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return args.func(args)
    except NrtwError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
