"""
Command-line front end: ``lumina {train,enhance,decompose,evaluate,synth}``.

Exit codes: 0 success, 2 usage/configuration error, 3 data error
(unreadable or missing images, empty evaluation), 4 model error
(checkpoint cannot be loaded).

Settings resolve as command-line flags > ``--config`` file > built-in
defaults. Config files and run manifests share one plain ``key=value``
format, so ``lumina train --config out/manifest.txt`` replays a run.
Setting ``LUMINA_THREADS=1`` pins BLAS to one thread, which the
reproducibility guarantees assume.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import Dict, Optional


from . import __version__
from .checkpoint import checkpoint_load, checkpoint_save
from .data import (base_scenes, ensure_dir, list_images, load_pairs, read_png, save_pairs,
                   synth_pairs, to_image, to_tensor, write_png)
from .errors import CheckpointError, ConfigError, DataError, LuminaError
from .losses import LossWeights
from .metrics import evaluate_dir
from .networks import ABLATABLE, enhance
from .training import PROFILES, TrainConfig, format_log, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MODEL = 4

log = logging.getLogger("lumina")


class UsageError(LuminaError):
    pass


# ---------------------------------------------------------------------------
# key=value config files and manifests
# ---------------------------------------------------------------------------

def read_config(path) -> Dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_manifest(path, command: str, settings: Dict[str, object]):
    lines = [f"# lumina run manifest", f"command={command}", f"version={__version__}"]
    for key in sorted(settings):
        value = settings[key]
        if value is None:
            continue
        if isinstance(value, (list, tuple, set, frozenset)):
            value = ",".join(sorted(map(str, value)))
        lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


def _resolve(args, keys) -> Dict[str, Optional[str]]:
    """Merge flag values over config-file values for ``keys``."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None and flag != []:
            merged[key] = flag
        else:
            merged[key] = conf.get(key)
    return merged


@contextlib.contextmanager
def thread_limit():
    n = os.environ.get("LUMINA_THREADS")
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=int(n)):
        yield


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

TRAIN_KEYS = ("data", "out", "epochs", "crop", "lr", "lam", "seed", "weights", "profile",
              "phi_seed", "clamp_floor")


def _train_config(s) -> TrainConfig:
    kw = {}
    conv = {"epochs": int, "crop": int, "lr": float, "lam": float, "seed": int,
            "phi_seed": int, "clamp_floor": float}
    for key, fn in conv.items():
        if s.get(key) is not None:
            try:
                kw[key] = fn(s[key])
            except ValueError:
                raise UsageError(f"{key}: cannot parse {s[key]!r}") from None
    if s.get("weights") is not None:
        kw["weights"] = LossWeights.parse(str(s["weights"]))
    return TrainConfig.for_profile(s.get("profile") or "default", **kw)


def cmd_train(args) -> int:
    s = _resolve(args, TRAIN_KEYS)
    if not s["data"] or not s["out"]:
        args.parser.print_help(sys.stderr)
        raise UsageError("train needs --data and --out (by flag or config file)")
    config = _train_config(s)
    pairs = load_pairs(s["data"])
    out = ensure_dir(s["out"])
    log.info("training on %d pairs for %d epochs", len(pairs), config.epochs)
    result = train(config, pairs)
    checkpoint_save(result.params, out / "model.lumn")
    (out / "loss_log.tsv").write_text(format_log(result.log))
    settings = dict(config.as_dict(), data=s["data"], out=s["out"], profile=s.get("profile") or "default")
    write_manifest(out / "manifest.txt", "train", settings)
    return EXIT_OK


def _load_model(path):
    try:
        return checkpoint_load(path)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc


def _disabled(value):
    if value is None:
        return frozenset()
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    names = frozenset(x.strip() for x in items if x and x.strip())
    unknown = names - ABLATABLE
    if unknown:
        raise UsageError(f"--disable accepts {sorted(ABLATABLE)}, got {sorted(unknown)}")
    return names


def _outputs(inp: Path, output: Path):
    """(input file, output file) pairs; a directory input maps into a directory."""
    if inp.is_dir():
        ensure_dir(output)
        return [(p, output / p.name) for p in list_images(inp)], output / "manifest.txt"
    if output.suffix.lower() != ".png":
        ensure_dir(output)
        output = output / inp.name
    else:
        ensure_dir(output.parent)
    return [(inp, output)], output.with_suffix(".manifest.txt")


def _write_intermediates(dec, target: Path):
    for name in ("i", "R", "L", "R_f", "L_f"):
        write_png(target.with_name(f"{target.stem}_{name}.png"), to_image(getattr(dec, name)))


def _run_images(args, command: str, dump: bool) -> int:
    s = _resolve(args, ("model", "input", "output", "lam", "disable"))
    if not s["model"] or not s["input"] or not s["output"]:
        args.parser.print_help(sys.stderr)
        raise UsageError(f"{command} needs --model, --input and --output")
    lam = float(s["lam"]) if s.get("lam") is not None else PROFILES["default"]
    disabled = _disabled(s.get("disable"))
    params = _load_model(s["model"])
    inp = Path(s["input"])
    if not inp.exists():
        raise DataError(f"input {inp} does not exist")
    jobs, manifest = _outputs(inp, Path(s["output"]))
    if not jobs:
        raise DataError(f"no PNG images in {inp}")
    failures = 0
    for src, dst in jobs:
        try:
            img = read_png(src)
        except DataError as exc:
            log.error("%s", exc)
            failures += 1
            continue
        dec = enhance(params, to_tensor(img), lam, disabled)
        if command == "enhance":
            write_png(dst, to_image(dec.I_f))
        if dump:
            _write_intermediates(dec, dst)
    write_manifest(manifest, command, dict(model=s["model"], input=s["input"], output=s["output"],
                                           lam=lam, disable=sorted(disabled) or None))
    return EXIT_DATA if failures else EXIT_OK


def cmd_enhance(args) -> int:
    return _run_images(args, "enhance", args.dump_intermediates)


def cmd_decompose(args) -> int:
    return _run_images(args, "decompose", True)


def cmd_evaluate(args) -> int:
    s = _resolve(args, ("enhanced", "reference", "report"))
    if not s["enhanced"] or not s["reference"] or not s["report"]:
        args.parser.print_help(sys.stderr)
        raise UsageError("evaluate needs --enhanced, --reference and --report")
    for key in ("enhanced", "reference"):
        if not Path(s[key]).is_dir():
            raise DataError(f"{key} directory {s[key]} does not exist")
    report = evaluate_dir(s["enhanced"], s["reference"])
    ensure_dir(Path(s["report"]).parent)
    report.write(s["report"])
    write_manifest(Path(s["report"]).with_suffix(".manifest.txt"), "evaluate", s)
    sys.stdout.write(report.to_text())
    return EXIT_DATA if report.empty or report.errors else EXIT_OK


def cmd_synth(args) -> int:
    s = _resolve(args, ("base", "count", "seed", "out", "size"))
    if not s["out"]:
        args.parser.print_help(sys.stderr)
        raise UsageError("synth needs --out")
    count = int(s["count"]) if s.get("count") is not None else 8
    seed = int(s["seed"]) if s.get("seed") is not None else 0
    size = int(s["size"]) if s.get("size") is not None else 96
    if count < 1:
        raise UsageError("--count must be >= 1")
    if s.get("base"):
        paths = list_images(s["base"])
        if not paths:
            raise DataError(f"no PNG images under {s['base']}")
        bases = [read_png(p) for p in paths]
    else:
        bases = base_scenes(max(count, 1), size, seed)
    pairs = synth_pairs(bases, count, seed)
    out = ensure_dir(s["out"])
    save_pairs(pairs, out)
    write_manifest(out / "manifest.txt", "synth", dict(base=s.get("base"), count=count, seed=seed,
                                                       size=None if s.get("base") else size, out=s["out"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lumina", description="Paired-exposure Retinex low-light enhancement.")
    p.add_argument("--version", action="version", version=f"lumina {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("train", help="train on a directory of image pairs")
    t.add_argument("--config", help="key=value settings file (flags override it)")
    t.add_argument("--data", help="directory of <pair>/{a,b}.png")
    t.add_argument("--out", help="output directory")
    t.add_argument("--epochs", type=int)
    t.add_argument("--crop", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--lambda", dest="lam", type=float, help="illumination correction factor")
    t.add_argument("--seed", type=int)
    t.add_argument("--phi-seed", dest="phi_seed", type=int)
    t.add_argument("--weights", help="w0,w1,w2,w3")
    t.add_argument("--profile", choices=sorted(PROFILES))
    t.set_defaults(func=cmd_train, parser=t)

    for name, func in (("enhance", cmd_enhance), ("decompose", cmd_decompose)):
        e = sub.add_parser(name, help=f"{name} a PNG file or directory")
        e.add_argument("--config")
        e.add_argument("--model", help="checkpoint file")
        e.add_argument("--input")
        e.add_argument("--output")
        e.add_argument("--lambda", dest="lam", type=float)
        e.add_argument("--disable", action="append", choices=sorted(ABLATABLE), default=[],
                       help="skip a module (repeatable)")
        if name == "enhance":
            e.add_argument("--dump-intermediates", action="store_true",
                           help="also write i, R, L, R_f, L_f images")
        e.set_defaults(func=func, parser=e)

    v = sub.add_parser("evaluate", help="PSNR/SSIM of enhanced vs reference images")
    v.add_argument("--config")
    v.add_argument("--enhanced")
    v.add_argument("--reference")
    v.add_argument("--report", help="report path prefix (.txt and .csv are written)")
    v.set_defaults(func=cmd_evaluate, parser=v)

    y = sub.add_parser("synth", help="write synthetic low-light pairs")
    y.add_argument("--config")
    y.add_argument("--base", help="directory of well-lit PNGs (default: procedural scenes)")
    y.add_argument("--count", type=int)
    y.add_argument("--seed", type=int)
    y.add_argument("--size", type=int, help="procedural scene size")
    y.add_argument("--out")
    y.set_defaults(func=cmd_synth, parser=y)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        with thread_limit():
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"lumina: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"lumina: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except DataError as exc:
        print(f"lumina: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
