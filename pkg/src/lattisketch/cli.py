"""Command-line entry point wiring the whole pipeline.

Subcommands: ingest, train, heal, generate, img2sketch, eval, audit-grad,
render, params. Settings resolve in three layers: built-in defaults, then
a key=value config file (--config), then explicit flags. Commands that
take a checkpoint read the model configuration from the checkpoint header
instead of the config file.

Every command that produces files writes exactly one manifest.json next
to them (command, resolved config, seed, inputs, outputs, checkpoint
hash). Outputs carry no timestamps, so identical inputs give
byte-identical files. Exit codes: 0 success, 2 usage, 3 data error,
4 numeric/model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .decoder import DecoderConfig, generate
from .encoder import EncoderConfig, count_parameters, init_encoder_params, reparameterize
from .errors import LattisketchError, MalformedRecord, OutOfRange
from .graph_builder import GraphConfig
from .lattice import LatticeConfig
from .params import checkpoint_hash
from .pipeline_eval import HealRequest, edge_to_sketch, heal, healing_sweep
from .sketch_data import (VectorSketch, parse_quickdraw_line, rasterize, read_pgm,
                          render_svg, sketch_from_json_obj, sketch_to_json_obj,
                          write_pgm)
from .trainer import (PipelineConfig, TrainConfig, finite_diff_audit, audit_probe,
                      fit, init_params, load_dataset, load_model)

# config file keys: name -> (section, dataclass field, parser)
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(v: str) -> bool:
    try:
        return _BOOL[v.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {v!r}")


CONFIG_KEYS = {
    "d": ("encoder", "d", int),
    "k": ("encoder", "K", int),
    "dropout_rate": ("encoder", "dropout_rate", float),
    "pooling": ("encoder", "pooling", str),
    "embed_mode": ("encoder", "embed_mode", str),
    "mlp_depth": ("encoder", "mlp_depth", int),
    "row_normalize": ("encoder", "row_normalize", _parse_bool),
    "bn_momentum": ("encoder", "bn_momentum", float),
    "hidden_size": ("decoder", "hidden_size", int),
    "mixtures": ("decoder", "M", int),
    "n_max": ("decoder", "n_max", int),
    "temperature": ("decoder", "temperature", float),
    "n": ("lattice", "n", int),
    "side": ("lattice", "side", int),
    "proximity": ("graph", "proximity", str),
    "d_t": ("graph", "d_t", float),
    "self_loops": ("graph", "self_loops", _parse_bool),
    "lr0": ("train", "lr0", float),
    "decay": ("train", "decay", float),
    "beta1": ("train", "beta1", float),
    "beta2": ("train", "beta2", float),
    "eps": ("train", "eps", float),
    "clip": ("train", "clip", float),
    "clip_mode": ("train", "clip_mode", str),
    "batch_size": ("train", "batch_size", int),
    "iterations": ("train", "iterations", int),
    "p_mask_train": ("train", "p_mask_train", float),
    "seed": ("train", "seed", int),
    "checkpoint_every": ("train", "checkpoint_every", int),
    "dtype": ("train", "dtype", str),
}


def parse_config_file(path) -> dict:
    """key=value lines, '#' comments; unknown keys are rejected."""
    sections: dict = {"encoder": {}, "decoder": {}, "lattice": {}, "graph": {}, "train": {}}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MalformedRecord(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise MalformedRecord(f"{path}:{lineno}: unknown config key {key!r}")
            section, field_name, caster = CONFIG_KEYS[key]
            try:
                sections[section][field_name] = caster(value)
            except ValueError as exc:
                raise MalformedRecord(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return sections


def build_pipeline_config(args) -> PipelineConfig:
    """defaults <- config file <- command-line flags."""
    sections = parse_config_file(args.config) if getattr(args, "config", None) else {
        "encoder": {}, "decoder": {}, "lattice": {}, "graph": {}, "train": {}}
    if getattr(args, "seed", None) is not None:
        sections["train"]["seed"] = args.seed
    if getattr(args, "n", None) is not None:
        sections["lattice"]["n"] = args.n
    if getattr(args, "pmask", None) is not None:
        sections["train"]["p_mask_train"] = args.pmask
    enc = EncoderConfig(**sections["encoder"])
    lattice = LatticeConfig(**sections["lattice"])
    enc = replace(enc, side=lattice.side)
    graph = GraphConfig(**{**sections["graph"], "embed_mode": enc.embed_mode})
    dec = DecoderConfig(**{**sections["decoder"], "z_dim": enc.d})
    train = TrainConfig(**sections["train"])
    return PipelineConfig(lattice=lattice, graph=graph, encoder=enc,
                          decoder=dec, train=train)


def write_manifest(out_dir: Path, command: str, config: dict, seed,
                   inputs, outputs, checkpoint=None) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(Path(p).name) for p in outputs],
        "checkpoint_hash": checkpoint_hash(checkpoint) if checkpoint else None,
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_sketch_lines(path) -> list:
    """Sketches from a JSON-lines file; accepts raw QuickDraw records
    ({"drawing": ...}) and canonical records ({"steps": ...})."""
    sketches = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}: {exc}") from exc
            if isinstance(obj, dict) and "steps" in obj:
                sketches.append(sketch_from_json_obj(obj))
            else:
                sketches.append(parse_quickdraw_line(line))
    return sketches


def _rasters_from_input(path, side: int):
    """One or more rasters from a .pgm image or a JSON-lines sketch file."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return [read_pgm(path)]
    return [rasterize(s, side) for s in _load_sketch_lines(path)]


def _write_sketch_outputs(out_dir: Path, stem: str, sketch: VectorSketch,
                          lattice=None) -> list:
    written = []
    svg_path = out_dir / f"{stem}.svg"
    svg_path.write_text(render_svg(sketch), encoding="utf-8")
    written.append(svg_path)
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(sketch_to_json_obj(sketch)) + "\n", encoding="utf-8")
    written.append(json_path)
    if lattice is not None:
        lat_path = out_dir / f"{stem}.lattice.json"
        lat_path.write_text(json.dumps(lattice.to_json_obj()) + "\n", encoding="utf-8")
        written.append(lat_path)
    return written


def _ensure_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    pcfg = build_pipeline_config(args)
    out = _ensure_out(args)
    raster_dir = out / "rasters"
    raster_dir.mkdir(exist_ok=True)
    outputs = []
    n_kept = n_empty = 0
    for input_path in args.inputs:
        stem = Path(input_path).stem
        kept = []
        with open(input_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                sk = parse_quickdraw_line(line)
                if sk.is_empty():
                    n_empty += 1
                    continue
                kept.append(sk)
                if args.limit and len(kept) >= args.limit:
                    break
        jsonl_path = out / f"{stem}.jsonl"
        with open(jsonl_path, "w", encoding="utf-8") as fh:
            for sk in kept:
                fh.write(json.dumps(sketch_to_json_obj(sk)) + "\n")
        outputs.append(jsonl_path)
        for i, sk in enumerate(kept):
            pgm_path = raster_dir / f"{stem}_{i:05d}.pgm"
            write_pgm(rasterize(sk, pcfg.lattice.side), pgm_path)
            outputs.append(pgm_path)
        n_kept += len(kept)
    write_manifest(out, "ingest", pcfg.configs_dict(), pcfg.train.seed,
                   args.inputs, outputs)
    print(f"ingested {n_kept} sketches ({n_empty} empty drawings skipped)")
    return 0


def cmd_train(args) -> int:
    pcfg = build_pipeline_config(args)
    out = _ensure_out(args)
    summary = fit(args.data, pcfg, out, resume=args.resume)
    write_manifest(out, "train", pcfg.configs_dict(), pcfg.train.seed,
                   list(args.data), [summary["checkpoint"], summary["loss_csv"]],
                   checkpoint=summary["checkpoint"])
    print(f"trained {summary['iterations']} iterations on {summary['items']} items")
    print(f"checkpoint {summary['checkpoint']}")
    print(f"loss log {summary['loss_csv']}")
    return 0


def cmd_heal(args) -> int:
    bundle = load_model(args.checkpoint)
    out = _ensure_out(args)
    p_mask = 0.1 if args.pmask is None else args.pmask
    rasters = _rasters_from_input(args.input, bundle.pcfg.lattice.side)
    outputs = []
    for i, raster in enumerate(rasters):
        req = HealRequest(raster=raster, p_mask=p_mask, n=args.n,
                          seed=[args.seed or 0, i])
        sketch, surviving = heal(req, bundle)
        outputs += _write_sketch_outputs(out, f"heal_{i:04d}", sketch, surviving)
    write_manifest(out, "heal", bundle.pcfg.configs_dict(),
                   args.seed or 0, [args.input], outputs, checkpoint=args.checkpoint)
    print(f"healed {len(rasters)} sketch(es) at p_mask={p_mask}")
    return 0


def cmd_generate(args) -> int:
    bundle = load_model(args.checkpoint)
    out = _ensure_out(args)
    dec_cfg = bundle.pcfg.decoder
    outputs = []
    inputs = []
    if args.input:
        inputs.append(args.input)
        from .pipeline_eval import encode_raster

        raster = _rasters_from_input(args.input, bundle.pcfg.lattice.side)[0]
        psi = encode_raster(raster, bundle, args.n)
    else:
        psi = None
    for i in range(args.count):
        rng = np.random.default_rng([args.seed or 0, i])
        if psi is None:
            z = rng.standard_normal(dec_cfg.z_dim)
        else:
            z = reparameterize(psi, bundle.store, rng=rng).z
        sketch = generate(z, bundle.store, dec_cfg, rng)
        outputs += _write_sketch_outputs(out, f"gen_{i:04d}", sketch)
    write_manifest(out, "generate", bundle.pcfg.configs_dict(),
                   args.seed or 0, inputs, outputs, checkpoint=args.checkpoint)
    print(f"generated {args.count} sketch(es)")
    return 0


def cmd_img2sketch(args) -> int:
    bundle = load_model(args.checkpoint)
    out = _ensure_out(args)
    raster = read_pgm(args.input)
    sketch, lattice = edge_to_sketch(raster, bundle, n=args.n, seed=args.seed or 0)
    outputs = _write_sketch_outputs(out, "img2sketch", sketch, lattice)
    write_manifest(out, "img2sketch", bundle.pcfg.configs_dict(),
                   args.seed or 0, [args.input], outputs, checkpoint=args.checkpoint)
    print("synthesized 1 sketch from the edge map")
    return 0


def cmd_eval(args) -> int:
    bundle = load_model(args.checkpoint)
    out = _ensure_out(args)
    side = bundle.pcfg.lattice.side
    n_max = bundle.pcfg.decoder.n_max
    rasters, labels = [], []
    for path in args.data:
        sketches, file_labels, _ = load_dataset([path], n_max)
        if args.limit:
            sketches = sketches[: args.limit]
            file_labels = file_labels[: args.limit]
        rasters += [rasterize(s, side) for s in sketches]
        labels += file_labels
    p_masks = [float(v) for v in args.pmask_list.split(",")]
    rows, csv_text = healing_sweep(rasters, labels, bundle, p_masks,
                                   n=args.n, seed=args.seed or 0)
    csv_path = out / "metrics.csv"
    csv_path.write_text(csv_text, encoding="utf-8")
    write_manifest(out, "eval", bundle.pcfg.configs_dict(), args.seed or 0,
                   list(args.data), [csv_path], checkpoint=args.checkpoint)
    print(f"{'p_mask':>8} {'top1':>8} {'top3':>8} {'points':>10} {'failures':>9}")
    for r in rows:
        print(f"{r['p_mask']:>8.2f} {r['top1']:>8.4f} {r['top3']:>8.4f} "
              f"{r['mean_points']:>10.1f} {r['failures']:>9d}")
    print(f"metrics written to {csv_path}")
    return 0


def cmd_audit_grad(args) -> int:
    if args.config:
        pcfg = build_pipeline_config(args)
    else:
        # default probe-sized model
        enc = EncoderConfig(d=8, K=2, dropout_rate=0.1, side=256)
        dec = DecoderConfig(hidden_size=8, M=2, n_max=16, z_dim=8)
        pcfg = PipelineConfig(encoder=enc, decoder=dec,
                              train=TrainConfig(seed=args.seed or 0, dtype="float64"))
    if pcfg.encoder.d > 16 or pcfg.decoder.hidden_size > 8 or pcfg.decoder.M > 2:
        raise OutOfRange("audit-grad needs a small config: d <= 16, hidden <= 8, M <= 2")
    store = init_params(pcfg, seed=args.seed or 0, dtype=np.float64)
    probe = audit_probe(pcfg, seed=args.seed or 0)
    report = finite_diff_audit(store, probe, pcfg)
    worst = 0.0
    print(f"{'array':<24} {'checked':>8} {'max_rel_err':>14}")
    for name, entry in report.items():
        print(f"{name:<24} {entry['checked']:>8d} {entry['max_rel_err']:>14.3e}")
        worst = max(worst, entry["max_rel_err"])
    print(f"worst relative error {worst:.3e} (tolerance {args.tol:.1e})")
    if args.out:
        out = _ensure_out(args)
        report_path = out / "audit.csv"
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write("array,checked,max_rel_err\n")
            for name, entry in report.items():
                fh.write(f"{name},{entry['checked']},{entry['max_rel_err']:.6e}\n")
        write_manifest(out, "audit-grad", pcfg.configs_dict(),
                       args.seed or 0, [], [report_path])
    if worst >= args.tol:
        print(f"error: AUDIT_FAILED: max relative error {worst:.3e} >= {args.tol:.1e}",
              file=sys.stderr)
        return 4
    return 0


def cmd_render(args) -> int:
    pcfg = build_pipeline_config(args)
    out = _ensure_out(args)
    sketches = _load_sketch_lines(args.input)
    outputs = []
    for i, sk in enumerate(sketches):
        if args.format in ("svg", "both"):
            path = out / f"render_{i:04d}.svg"
            path.write_text(render_svg(sk), encoding="utf-8")
            outputs.append(path)
        if args.format in ("pgm", "both"):
            path = out / f"render_{i:04d}.pgm"
            write_pgm(rasterize(sk, pcfg.lattice.side), path)
            outputs.append(path)
    write_manifest(out, "render", pcfg.configs_dict(), pcfg.train.seed,
                   [args.input], outputs)
    print(f"rendered {len(sketches)} sketch(es)")
    return 0


def cmd_params(args) -> int:
    pcfg = build_pipeline_config(args)
    rng = np.random.default_rng(pcfg.train.seed)
    enc_store = init_encoder_params(pcfg.encoder, rng, dtype=np.float32)
    per_array, total = count_parameters(enc_store)
    for name, count in per_array.items():
        print(f"{name} {count}")
    print(f"total {total}")
    if args.all:
        full = init_params(pcfg)
        model_per_array, model_total = count_parameters(full)
        for name, count in model_per_array.items():
            if name not in per_array:
                print(f"{name} {count}")
        print(f"decoder total {model_total - total}")
        print(f"model total {model_total}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lattisketch",
        description="Lattice point sampling, graph encoding and stroke generation.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--n", type=int, help="lattice grid (lines per direction)")
    common.add_argument("--pmask", type=float, help="lattice corruption probability")
    common.add_argument("--checkpoint", help="model checkpoint path")
    common.add_argument("--out", help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="QuickDraw JSON-lines -> canonical dataset + rasters")
    p.add_argument("inputs", nargs="+", help="QuickDraw JSON-lines files")
    p.add_argument("--limit", type=int, default=0, help="max sketches per file")
    p.set_defaults(func=cmd_ingest, need_out=True)

    p = sub.add_parser("train", parents=[common], help="fit the model")
    p.add_argument("--data", nargs="+", required=True,
                   help="JSON-lines dataset files (one per category)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train, need_out=True)

    p = sub.add_parser("heal", parents=[common],
                       help="regenerate sketches from corrupted lattices")
    p.add_argument("--input", required=True, help="PGM raster or JSON-lines sketches")
    p.set_defaults(func=cmd_heal, need_out=True, need_checkpoint=True)

    p = sub.add_parser("generate", parents=[common],
                       help="sample sketches from the prior or an encoded input")
    p.add_argument("--input", help="optional PGM/JSON-lines input to encode")
    p.add_argument("--count", type=int, default=1, help="number of samples")
    p.set_defaults(func=cmd_generate, need_out=True, need_checkpoint=True)

    p = sub.add_parser("img2sketch", parents=[common],
                       help="edge-map PGM -> vector sketch")
    p.add_argument("--input", required=True, help="edge map (binary PGM)")
    p.set_defaults(func=cmd_img2sketch, need_out=True, need_checkpoint=True)

    p = sub.add_parser("eval", parents=[common],
                       help="healing sweep + retrieval metrics")
    p.add_argument("--data", nargs="+", required=True,
                   help="JSON-lines dataset files (one per category)")
    p.add_argument("--pmask-list", default="0.0,0.1,0.3",
                   help="comma-separated corruption levels")
    p.add_argument("--limit", type=int, default=0, help="max sketches per file")
    p.set_defaults(func=cmd_eval, need_out=True, need_checkpoint=True)

    p = sub.add_parser("audit-grad", parents=[common],
                       help="finite-difference gradient audit (small config)")
    p.add_argument("--tol", type=float, default=1e-3, help="max relative error allowed")
    p.set_defaults(func=cmd_audit_grad)

    p = sub.add_parser("render", parents=[common],
                       help="sketch JSON-lines -> SVG and/or PGM")
    p.add_argument("--input", required=True, help="JSON-lines sketches")
    p.add_argument("--format", choices=("svg", "pgm", "both"), default="svg")
    p.set_defaults(func=cmd_render, need_out=True)

    p = sub.add_parser("params", parents=[common],
                       help="parameter-count report for the encoder")
    p.add_argument("--all", action="store_true",
                   help="also count decoder arrays and the model total")
    p.set_defaults(func=cmd_params)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage/help printing
        return int(exc.code or 0)
    if getattr(args, "need_out", False) and not args.out:
        print("error: USAGE: --out is required for this command", file=sys.stderr)
        return 2
    if getattr(args, "need_checkpoint", False) and not args.checkpoint:
        print("error: USAGE: --checkpoint is required for this command", file=sys.stderr)
        return 2
    try:
        return args.func(args) or 0
    except LattisketchError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
