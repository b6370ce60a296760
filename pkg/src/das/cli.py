"""Command-line front end.

Run parameters come from three layers, later ones winning: ``RunConfig``
defaults, an optional INI config file (``[run]`` section, keys named after
``RunConfig`` fields), then command-line flags. Every run subcommand writes
``image.png``, ``trace.jsonl`` and ``manifest.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from das import __version__
from das.diagnostics import ablation_report, format_ablation, power_spectrum
from das.encoders import Encoder, ToyEncoder, load_embedding, save_embedding
from das.imageio import read_png, write_png
from das.optimizer import EncoderObjective, RunConfig, RunTrace
from das import tasks

log = logging.getLogger("das")

MANIFEST_VERSION = "1"

# config key -> (flag dest, parser)
_FIELD_TYPES = {
    "steps": int,
    "learning_rate": float,
    "resolutions": lambda s: tuple(int(x) for x in str(s).replace(" ", "").split(",") if x),
    "shift_max": int,
    "noise_std": float,
    "batch": int,
    "out_size": int,
    "seed": lambda s: int(str(s), 0),
    "init": str,
    "init_sigma": float,
    "augment": lambda s: s if isinstance(s, bool) else str(s).strip().lower() in ("1", "true", "yes", "on"),
    "reduction": str,
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"invalid config field {field!r}: {message}")


def read_config_file(path: str | Path) -> dict:
    """Read ``[run]`` from an INI file, or the ``config`` object of a JSON manifest."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"{path} does not exist")
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        data = data.get("config", data)
        return {k: (",".join(map(str, v)) if isinstance(v, list) else v) for k, v in data.items()}
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")
    if not parser.has_section("run"):
        raise ConfigError("run", f"{path} has no [run] section")
    return dict(parser.items("run"))


def build_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Merge defaults < file < flags and validate."""
    merged = {}
    for layer in (file_values, flag_values):
        for key, value in layer.items():
            if value is None:
                continue
            if key not in _FIELD_TYPES:
                raise ConfigError(key, "unknown key")
            try:
                merged[key] = _FIELD_TYPES[key](value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, str(exc)) from exc
    try:
        return RunConfig(**merged)
    except ValueError as exc:
        msg = str(exc)
        field = next((k for k in _FIELD_TYPES if k in msg.replace(" ", "_")), "config")
        if "resolution" in msg:
            field = "resolutions"
        raise ConfigError(field, msg) from exc


def make_encoder(spec: str, input_size: int) -> Encoder:
    kind, _, arg = spec.partition(":")
    if kind == "toy":
        return ToyEncoder(seed=int(arg, 0), input_size=input_size) if arg else ToyEncoder(input_size=input_size)
    if kind == "clip":
        from das.clip_backend import ClipModelSpec, load_clip

        if not arg:
            raise ValueError("clip encoder needs a weight path: clip:PATH")
        return load_clip(ClipModelSpec(arg, input_size=input_size))
    raise ValueError(f"unknown encoder {spec!r} (expected toy, toy:SEED or clip:PATH)")


def parse_weighted(text: str) -> tuple[str, float]:
    """``"some prompt:-0.3"`` -> ``("some prompt", -0.3)``."""
    body, sep, weight = text.rpartition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected TEXT:WEIGHT, got {text!r}")
    try:
        return body, float(weight)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weight in {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="INI file with a [run] section, or a previous manifest.json")
    g.add_argument("--steps", type=int)
    g.add_argument("--lr", dest="learning_rate", type=float)
    g.add_argument("--resolutions", help="comma-separated, e.g. 1,2,4,8,336")
    g.add_argument("--shift-max", type=int)
    g.add_argument("--noise-std", type=float)
    g.add_argument("--batch", type=int)
    g.add_argument("--out-size", type=int)
    g.add_argument("--seed", type=lambda s: int(s, 0))
    g.add_argument("--init", choices=["zeros", "gaussian"])
    g.add_argument("--init-sigma", type=float)
    g.add_argument("--no-augment", dest="augment", action="store_const", const=False)
    g.add_argument("--reduction", choices=["mean", "normalized"])
    p.add_argument("--encoder", action="append", help="toy, toy:SEED or clip:PATH (repeat for an ensemble)")
    p.add_argument("--out", default="das_out", help="output directory")
    p.add_argument("--save-canvas", action="store_true", help="also write the full canvas")
    p.add_argument("--spectrum", action="store_true", help="also write spectrum.json for the result")


def _add_target_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("targets")
    g.add_argument("--prompt", action="append", default=[], help="text prompt with weight 1")
    g.add_argument("--prompt-weight", action="append", default=[], type=parse_weighted, metavar="TEXT:W")
    g.add_argument("--target-image", action="append", default=[], help="PATH or PATH:WEIGHT")
    g.add_argument("--target-embedding", action="append", default=[], help="embedding JSON, PATH or PATH:WEIGHT")
    g.add_argument("--gallery", action="store_true", help="add the standard aesthetic modifier prompts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="das", description="Multi-resolution gradient-ascent image synthesis")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize an image from prompts or embeddings")
    _add_run_flags(p)
    _add_target_flags(p)

    p = sub.add_parser("reconstruct", help="invert the embedding of an image or embedding file")
    _add_run_flags(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--embedding")

    p = sub.add_parser("modify", help="start from an image and ascend towards targets")
    _add_run_flags(p)
    _add_target_flags(p)
    p.add_argument("--image", required=True)

    p = sub.add_parser("style", help="move a content image towards a style image's embedding")
    _add_run_flags(p)
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--style-weight", type=float, default=1.0)
    p.add_argument("--content-weight", type=float, default=0.0)

    p = sub.add_parser("gram-style", help="feature/Gram-matrix style transfer")
    _add_run_flags(p)
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--layer-weights", default="1,1")
    p.add_argument("--content-weight", type=float, default=1.0)
    p.add_argument("--variant", choices=["das", "pixel"], default="das")

    p = sub.add_parser("inpaint", help="fill the white part of a mask")
    _add_run_flags(p)
    _add_target_flags(p)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="PNG; white = generate, black = keep")

    p = sub.add_parser("spectrum", help="radial power spectrum slope of a PNG")
    p.add_argument("image")
    p.add_argument("--csv", help="also write the radial bins as CSV")

    p = sub.add_parser("ablate", help="pixel / pixel+augment / multi-resolution comparison")
    _add_run_flags(p)
    _add_target_flags(p)

    p = sub.add_parser("embed", help="write the embedding of an image (or a prompt) to JSON")
    p.add_argument("--image")
    p.add_argument("--text")
    p.add_argument("--encoder", default="toy")
    p.add_argument("--out-size", type=int, default=224)
    p.add_argument("--output", required=True)
    return parser


def _path_weight(text: str) -> tuple[str, float]:
    if Path(text).exists():
        return text, 1.0
    body, sep, w = text.rpartition(":")
    if sep:
        try:
            return body, float(w)
        except ValueError:
            pass
    return text, 1.0


def _targets(args) -> list[tasks.TargetSource]:
    out = [tasks.TargetSource.text(p, 1.0) for p in args.prompt]
    out += [tasks.TargetSource.text(t, w) for t, w in args.prompt_weight]
    if args.gallery:
        out += [tasks.TargetSource.text(t, w) for t, w in tasks.GALLERY_MODIFIERS]
    for item in args.target_image:
        path, w = _path_weight(item)
        out.append(tasks.TargetSource.image(read_png(path), w, Path(path).name))
    for item in args.target_embedding:
        path, w = _path_weight(item)
        out.append(tasks.TargetSource.embedding(load_embedding(path), w, Path(path).name))
    if not out:
        raise ValueError("no targets: give --prompt, --prompt-weight, --target-image or --target-embedding")
    return out


def _run_config(args) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k, None) for k in _FIELD_TYPES}
    return build_config(file_values, flags)


def _write_outputs(args, cfg: RunConfig, encoders: Sequence[Encoder], trace: RunTrace,
                   extra: Optional[dict], argv: Sequence[str], started: float) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {"image": "image.png", "trace": "trace.jsonl"}
    write_png(out / "image.png", trace.image)
    trace.write_jsonl(out / "trace.jsonl")
    if args.save_canvas:
        write_png(out / "canvas.png", trace.canvas)
        artifacts["canvas"] = "canvas.png"
    if args.spectrum:
        (out / "spectrum.json").write_text(power_spectrum(trace.image).to_json())
        artifacts["spectrum"] = "spectrum.json"
    manifest = _base_manifest(args, cfg, encoders, argv)
    manifest.update({
        "artifacts": artifacts,
        "final_objective": trace.final_objective,
        "final_scores": trace.final_scores,
        "wall_clock_s": round(time.perf_counter() - started, 3),
    })
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _base_manifest(args, cfg: RunConfig, encoders: Sequence[Encoder], argv: Sequence[str]) -> dict:
    return {
        "manifest_version": MANIFEST_VERSION,
        "package_version": __version__,
        "command": args.command,
        "argv": list(argv),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "encoders": [{"name": e.name, "checksum": getattr(e, "checksum", None)} for e in encoders],
    }


def _write_ablation(args, cfg, encoders, rows, argv, started) -> None:
    # timings live only in the manifest so ablation.json is reproducible byte for byte
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = [{k: v for k, v in dataclasses.asdict(r).items() if k != "runtime_s"} for r in rows]
    (out / "ablation.json").write_text(json.dumps(table, indent=2, sort_keys=True))
    manifest = _base_manifest(args, cfg, encoders, argv)
    manifest["artifacts"] = {"ablation": "ablation.json"}
    manifest["runtime_s"] = {r.name: round(r.runtime_s, 3) for r in rows}
    manifest["wall_clock_s"] = round(time.perf_counter() - started, 3)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _load_input(path: str, size: int) -> np.ndarray:
    return tasks.fit_to(read_png(path), size)


def _run(args, argv) -> int:
    started = time.perf_counter()
    if args.command == "spectrum":
        report = power_spectrum(read_png(args.image))
        if args.csv:
            Path(args.csv).write_text(report.to_csv())
        print(report.to_json())
        return 0

    if args.command == "embed":
        enc = make_encoder(args.encoder, args.out_size)
        if bool(args.image) == bool(args.text):
            raise ConfigError("embed", "give exactly one of --image or --text")
        vec = enc.text_embed(args.text) if args.text else enc.embed(_load_input(args.image, args.out_size))
        save_embedding(args.output, vec)
        return 0

    cfg = _run_config(args)
    encoders = [make_encoder(s, cfg.out_size) for s in (args.encoder or ["toy"])]
    extra = None
    if args.command == "generate":
        trace = tasks.generate(encoders, _targets(args), cfg)
    elif args.command == "reconstruct":
        if args.image:
            trace, report = tasks.reconstruct(encoders, _load_input(args.image, cfg.out_size), cfg)
        else:
            source = tasks.TargetSource.embedding(load_embedding(args.embedding), 1.0, "reference")
            trace = tasks.generate(encoders, [source], cfg)
            report = tasks.ReconstructionReport(
                {k.split(":", 1)[1]: v for k, v in trace.final_scores.items()},
                cfg.out_size * cfg.out_size * 3, encoders[0].dim)
        extra = {"reconstruction": {"cosines": report.cosines, "compression_ratio": report.ratio_text}}
        print(f"compression {report.ratio_text}; final cosine "
              + ", ".join(f"{k}={v:.4f}" for k, v in report.cosines.items()))
    elif args.command == "modify":
        trace = tasks.modify(encoders, _load_input(args.image, cfg.out_size), _targets(args), cfg)
    elif args.command == "style":
        trace = tasks.style_transfer_embed(
            encoders, _load_input(args.content, cfg.out_size), _load_input(args.style, cfg.out_size),
            cfg, args.style_weight, args.content_weight)
    elif args.command == "gram-style":
        weights = [float(w) for w in args.layer_weights.split(",")]
        trace = tasks.style_transfer_gram(
            encoders[0], read_png(args.content), read_png(args.style), cfg,
            weights, args.content_weight, args.variant)
    elif args.command == "inpaint":
        mask = read_png(args.mask).mean(axis=2)
        trace = tasks.inpaint(encoders, _load_input(args.image, cfg.out_size),
                              tasks.fit_to(mask[..., None], cfg.out_size)[..., 0], _targets(args), cfg)
    elif args.command == "ablate":
        objective = EncoderObjective(encoders, tasks.resolve_targets(_targets(args), encoders), cfg.reduction)
        rows = ablation_report(cfg, objective)
        print(format_ablation(rows))
        _write_ablation(args, cfg, encoders, rows, argv, started)
        return 0
    else:  # pragma: no cover - argparse rejects unknown commands
        raise ConfigError("command", args.command)

    _write_outputs(args, cfg, encoders, trace, extra, argv, started)
    log.info("wrote %s", args.out)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args, argv)
    except ConfigError as exc:
        print(f"das: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"das: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
