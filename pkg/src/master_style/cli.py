"""Command-line entry point: ``master-style <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import snapshot
from .checks import GRAD_TOL, run_gradient_suite
from .config import ConfigError, ExperimentConfig, load_config
from .data import KINDS, gen_synthetic
from .experiments import TOY, Experiment
from .imageio import ImageFormatError, read_image, write_ppm
from .meta import LOG_HEADER, LogRow
from .objectives import distortion_demo
from .params import ParamStore
from .snapshot import SnapshotError
from .tensor import no_grad

CONFIG_NAME = "config.txt"
PRESETS = {"default": ExperimentConfig(), "toy": TOY}


class CliError(Exception):
    pass


# -- helpers -------------------------------------------------------------------


def _resolve_config(args, near: Path | None = None) -> ExperimentConfig:
    """Preset, then ``--config`` (or the config stored beside ``near``), then MASTER_SEED."""
    path = getattr(args, "config", None)
    if path is None and near is not None and (near.parent / CONFIG_NAME).exists():
        path = near.parent / CONFIG_NAME
    if path is not None and not Path(path).exists():
        raise CliError(f"config file not found: {path}")
    return load_config(path, base=PRESETS[getattr(args, "preset", "default")])


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_log(path: Path, log: Sequence[LogRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        w.writerows(r.as_tuple() for r in log)


def _read_image(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise CliError(f"image not found: {p}")
    return read_image(p)


def _load_params(path, exp: Experiment) -> ParamStore:
    p = Path(path)
    if not p.exists():
        raise CliError(f"snapshot not found: {p}")
    store = snapshot.load(p)
    expected = {n: t.shape for n, t in exp.init_params().items()}
    got = {n: t.shape for n, t in store.items()}
    if expected != got:
        missing = sorted(set(expected) - set(got))
        raise CliError(
            "snapshot does not match the configured architecture"
            + (f" (missing {missing[:3]})" if missing else " (shape mismatch)")
        )
    return store


def _check_size(img: np.ndarray, what: str) -> None:
    h, w = img.shape[:2]
    if h % 16 or w % 16:
        raise CliError(f"{what} image is {h}x{w}; both sides must be multiples of 16")


def _write_output_image(path, img: np.ndarray) -> None:
    img = np.clip(img, 0.0, 1.0)
    if str(path).lower().endswith(".png"):
        from PIL import Image

        from .imageio import to_bytes

        Image.fromarray(to_bytes(img)).save(path)
    else:
        write_ppm(path, img)


# -- subcommands -----------------------------------------------------------------


def cmd_train_meta(args) -> int:
    from .plotting import plot_losses

    cfg = _resolve_config(args)
    out = _out_dir(args.out)
    exp = Experiment(cfg)

    def progress(it, rows):
        if args.verbose and (it + 1) % 10 == 0:
            print(f"iter {it + 1}/{cfg.iterations} total={rows[-1].loss_total:.4f}", file=sys.stderr)

    theta, log = exp.train(on_iteration=progress)
    (out / CONFIG_NAME).write_text(cfg.dumps(), encoding="utf-8")
    snapshot.save(out / "params.bin", theta)
    _write_log(out / "losses.csv", log)
    plot_losses(log, out / "losses.png", title=f"meta training, seed {cfg.seed}")
    print(f"wrote {out}/params.bin, losses.csv ({len(log)} rows), {CONFIG_NAME}, losses.png")
    return 0


def cmd_adapt(args) -> int:
    from .plotting import plot_losses

    cfg = _resolve_config(args, Path(args.params))
    exp = Experiment(cfg)
    theta = _load_params(args.params, exp)
    style = _read_image(args.style)
    _check_size(style, "style")
    out = _out_dir(args.out)
    omega, log, _ = exp.adapt(theta, style)
    (out / CONFIG_NAME).write_text(cfg.dumps(), encoding="utf-8")
    snapshot.save(out / "params.bin", omega)
    _write_log(out / "losses.csv", log)
    plot_losses(log, out / "losses.png", window=min(10, max(1, len(log))), title="fast adaptation")
    print(f"wrote {out}/params.bin, losses.csv ({len(log)} rows), {CONFIG_NAME}, losses.png")
    return 0


def _stylize_setup(args):
    cfg = _resolve_config(args, Path(args.params))
    exp = Experiment(cfg)
    theta = _load_params(args.params, exp)
    content = _read_image(args.content)
    _check_size(content, "content")
    layers = cfg.layers if args.layers is None else args.layers
    if layers < 0:
        raise CliError("--layers must be >= 0")
    return exp, theta, content, layers


def cmd_stylize(args) -> int:
    exp, theta, content, layers = _stylize_setup(args)
    style = _read_image(args.style)
    _check_size(style, "style")
    with no_grad():
        img = exp.model.stylize(theta, content[None], style[None], layers).data[0]
    _write_output_image(args.out, img)
    print(f"wrote {args.out} (L={layers})")
    return 0


def cmd_stylize_multi(args) -> int:
    exp, theta, content, layers = _stylize_setup(args)
    styles = [_read_image(p) for p in args.style]
    for s in styles:
        _check_size(s, "style")
    with no_grad():
        img = exp.model.stylize_multi(theta, content[None], [s[None] for s in styles], layers).data[0]
    _write_output_image(args.out, img)
    print(f"wrote {args.out} ({len(styles)} styles, L={layers})")
    return 0


def cmd_interpolate(args) -> int:
    exp, theta, content, layers = _stylize_setup(args)
    a, b = _read_image(args.style_a), _read_image(args.style_b)
    _check_size(a, "style")
    _check_size(b, "style")
    with no_grad():
        img = exp.model.interpolate(theta, content[None], a[None], b[None], args.alpha, layers).data[0]
    _write_output_image(args.out, img)
    print(f"wrote {args.out} (alpha={args.alpha}, L={layers})")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(seed=args.seed, names=args.case or None, max_entries=args.max_entries)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<22} rel_err={r.error:.3e} (tol {GRAD_TOL:g})")
        if not r.passed and args.verbose:
            for name, e in sorted(r.per_param.items(), key=lambda kv: -kv[1])[:5]:
                print(f"    {name}: {e:.3e}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_demo_distortion(args) -> int:
    report = distortion_demo()
    for line in report.lines():
        print(line)
    if args.out:
        from .plotting import plot_distortion

        out = _out_dir(args.out)
        with open(out / "distortion.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("gamma", "cosine"))
            w.writerow(("before", report.cos_before))
            w.writerow(("residual", report.cos_after_residual))
            w.writerow(("attention", report.cos_after_attention))
            w.writerows(zip(report.gammas, report.cos_after_scaled))
        plot_distortion(report, out / "distortion.png")
    return 0


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"--ks expects comma-separated integers, got {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise CliError("--ks needs at least one k >= 1")
    return ks


def cmd_k_sweep(args) -> int:
    from .plotting import plot_k_sweep

    ks = _parse_ks(args.ks)
    cfg = _resolve_config(args)
    out = _out_dir(args.out)
    rows = Experiment(cfg).k_sweep(ks)
    (out / CONFIG_NAME).write_text(cfg.dumps(), encoding="utf-8")
    n = max(len(r.per_style) for r in rows)
    with open(out / "k_sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "style_loss"] + [f"style_{i}" for i in range(n)])
        for r in rows:
            w.writerow([r.k, r.style_loss, *r.per_style])
    plot_k_sweep(rows, out / "k_sweep.png")
    for r in rows:
        print(f"k={r.k} style_loss={r.style_loss:.6f}")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    size = args.size or cfg.image_size
    if size % 16:
        raise CliError("--size must be a multiple of 16")
    out = _out_dir(args.out)
    seed = cfg.data_seed if args.seed is None else args.seed
    for i, img in enumerate(gen_synthetic(args.kind, args.n, seed, size)):
        write_ppm(out / f"{args.kind}_{i:03d}.ppm", img)
    print(f"wrote {args.n} {args.kind} images to {out}")
    return 0


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="master-style", description="Meta-learned style transfer experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    def config_opts(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--preset", choices=sorted(PRESETS), default="default",
                        help="base configuration the config file overlays")

    sp = add("train-meta", cmd_train_meta, "meta-train from scratch and write the run directory")
    config_opts(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("-v", "--verbose", action="store_true")

    sp = add("adapt", cmd_adapt, "fast-adapt the style encoder to one style image")
    config_opts(sp)
    sp.add_argument("--params", required=True)
    sp.add_argument("--style", required=True)
    sp.add_argument("--out", required=True)

    for name, func, help_ in [
        ("stylize", cmd_stylize, "stylize one content image with one style"),
        ("stylize-multi", cmd_stylize_multi, "stylize with the merged tokens of several styles"),
        ("interpolate", cmd_interpolate, "blend two styles at the transformer output"),
    ]:
        sp = add(name, func, help_)
        config_opts(sp)
        sp.add_argument("--params", required=True)
        sp.add_argument("--content", required=True)
        sp.add_argument("--layers", type=int, default=None, help="transformer layers (defaults to config)")
        sp.add_argument("--out", required=True, help="output image (.ppm, or .png)")
        if name == "stylize":
            sp.add_argument("--style", required=True)
        elif name == "stylize-multi":
            sp.add_argument("--style", required=True, action="append", help="repeat for each style")
        else:
            sp.add_argument("--style-a", required=True)
            sp.add_argument("--style-b", required=True)
            sp.add_argument("--alpha", type=float, required=True)

    sp = add("gradcheck", cmd_gradcheck, "finite-difference gradient suite; exit 1 on failure")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--case", action="append", help="run only this case (repeatable)")
    sp.add_argument("--max-entries", type=int, default=4)
    sp.add_argument("-v", "--verbose", action="store_true")

    sp = add("demo-distortion", cmd_demo_distortion, "two-vector residual-fusion distortion example")
    sp.add_argument("--out", help="also write distortion.csv and distortion.png here")

    sp = add("k-sweep", cmd_k_sweep, "meta-train per k and report adapted style loss")
    config_opts(sp)
    sp.add_argument("--ks", default="1,2,3,4")
    sp.add_argument("--out", required=True)

    sp = add("gen-data", cmd_gen_data, "write synthetic content or style images as PPM")
    config_opts(sp)
    sp.add_argument("--kind", choices=KINDS, required=True)
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--size", type=int, default=None)
    sp.add_argument("--out", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, SnapshotError, ImageFormatError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
