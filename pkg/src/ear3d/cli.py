"""``ear3d`` command-line entry point.

Exit codes: 0 success, 1 user error, 2 internal error. Every subcommand
writes ``run_manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .checkpoint import load_checkpoint
from .config import MetricOptions, TrainConfig, load_train_config
from .dataset import DatasetManifest, make_dataset
from .errors import EarError, InvalidArgumentError
from .experiments import ablation_matrix, angle_sweep, validate_angle
from .io import load_image, load_volume, save_image, save_volume
from .mesh import marching_cubes
from .metrics import REPORT_METRICS, MetricReport, sample_metrics, surface_distance_error
from .phantom import PhantomDistribution, PhantomSpec, generate_phantom
from .projector import ProjectionGeometry, expand_dimension, minmax_rescale, project_drr, to_display
from .train import evaluate, train
from .volume import Volume

log = logging.getLogger("ear3d")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UsageError(EarError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    try:
        values = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(values) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return values


def _pair(text):
    return _floats(text, 2)


def _triple(text):
    return _floats(text, 3)


def _max_value(text: str):
    return None if text == "auto" else float(text)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_manifest(directory: Path, args: argparse.Namespace, config: dict | None = None,
                       inputs: list | None = None) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for p in inputs or []:
        p = Path(p)
        if p.is_file():
            hashes[str(p)] = _sha256(p)
    manifest = {
        "command": args.command,
        "arguments": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()
                      if k not in ("func",) and not callable(v)},
        "config": config or {},
        "seed": getattr(args, "seed", None),
        "input_sha256": hashes,
        "versions": {"ear3d": __version__, "torch": torch.__version__, "numpy": np.__version__},
    }
    path = directory / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return path


def _resolve_train_config(args) -> TrainConfig:
    cfg = load_train_config(args.config) if args.config else TrainConfig.for_profile(getattr(args, "profile", "desk32"))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    for key in ("max_steps", "max_epochs", "warmup_epochs"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    if getattr(args, "profile", None) and not args.config:
        pass
    return replace(cfg, **changes)


def _emit(args, summary: str, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(summary)


# ----------------------------------------------------------------------------- commands


def cmd_phantom_gen(args) -> int:
    out = Path(args.out)
    seed = args.seed if args.seed is not None else 0
    dist = PhantomDistribution(base=PhantomSpec(grid_shape=(args.grid,) * 3))
    written = []
    for i in range(args.count):
        spec = dist.sample(np.random.default_rng([seed, i]))
        vol, mask = generate_phantom(spec)
        written.append(str(save_volume(vol, out / f"phantom_{i:04d}.vol", extra={"spec": asdict(spec)})))
        save_volume(mask, out / f"phantom_{i:04d}_mask.vol")
    write_run_manifest(out, args, {"grid": args.grid})
    _emit(args, f"wrote {len(written)} phantoms to {out}", {"volumes": written})
    return EXIT_OK


def cmd_drr(args) -> int:
    vol = load_volume(args.volume)
    pitch = args.pitch
    if pitch is None:
        pitch = min(vol.spacing) * (args.sdd / args.sod if args.beam == "cone" else 1.0)
    geom = ProjectionGeometry(sod=args.sod, sdd=args.sdd, euler_alpha=args.alpha, euler_beta=args.beta,
                              detector_shape=(vol.shape[0], vol.shape[2]) if args.detector is None else args.detector,
                              pixel_pitch=pitch, beam=args.beam)
    img = project_drr(vol, geom)
    if args.display:
        img = to_display(img)
    out = save_image(img, args.out, spacing=(pitch, pitch), extra={"geometry": asdict(geom), "display": args.display})
    write_run_manifest(out.parent, args, asdict(geom), [args.volume])
    _emit(args, f"wrote {img.shape[0]}x{img.shape[1]} projection to {out}",
          {"image": str(out), "shape": list(img.shape), "max": float(img.max())})
    return EXIT_OK


def cmd_dataset_make(args) -> int:
    if len(args.split) != 3:
        raise InvalidArgumentError("--split needs three ratios")
    seed = args.seed if args.seed is not None else 0
    dist = PhantomDistribution(base=PhantomSpec(grid_shape=(args.grid,) * 3))
    manifest = make_dataset(args.out, args.count, dist, angle_pair=(args.angle1, args.angle2), split=args.split,
                            seed=seed)
    write_run_manifest(Path(args.out), args, {"grid": args.grid, "split": list(args.split)})
    counts = {k: len(v) for k, v in manifest.splits.items()}
    _emit(args, f"wrote {args.count} samples to {args.out} (splits {counts})", {"splits": counts})
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_train_config(args)
    manifest = DatasetManifest.load(args.data)
    result = train(cfg, manifest, args.out)
    write_run_manifest(Path(args.out), args, cfg.to_dict(), [Path(args.data) / "manifest.json"])
    last = result.runlog.steps[-1] if result.runlog.steps else {}
    _emit(args, f"trained {len(result.runlog.steps)} steps; final total loss {last.get('total', float('nan')):.4f}",
          {"steps": len(result.runlog.steps), "final": last, "best": str(result.best_path),
           "last": str(result.last_path)})
    return EXIT_OK


def _metric_options(args, base: MetricOptions) -> MetricOptions:
    changes = {}
    if args.threshold is not None:
        changes["dice_threshold"] = args.threshold
    if args.fd_bounds is not None:
        changes["fd_bounds"] = args.fd_bounds
    if args.max_value is not ...:
        changes["max_value"] = args.max_value
    return replace(base, **changes)


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(_existing(args.ckpt))
    manifest = DatasetManifest.load(args.data)
    opts = _metric_options(args, ckpt.config.metrics)
    report = evaluate(ckpt, manifest, args.split, opts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "metric_report.json")
    write_run_manifest(out, args, {"metrics": opts.to_dict()}, [args.ckpt])
    _emit(args, format_table([(out.name, report)]), report.to_dict())
    return EXIT_OK


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise InvalidArgumentError(f"no such file: {p}")
    return p


def cmd_reconstruct(args) -> int:
    ckpt = load_checkpoint(_existing(args.ckpt))
    ap = load_image(_existing(args.ap))
    lat = load_image(_existing(args.lat))
    r = ckpt.config.network.input_resolution
    if ap.shape != (r, r) or lat.shape != (r, r):
        raise InvalidArgumentError(f"projections must be {r}x{r} for this checkpoint, got {ap.shape} and {lat.shape}")
    x = expand_dimension(minmax_rescale(ap), minmax_rescale(lat), (r, r, r))
    model = ckpt.build_model()
    with torch.no_grad():
        pred, a_e = model(torch.from_numpy(x)[None])
    stats = ckpt.norm_stats
    raw = pred[0, 0].numpy().astype(np.float64) * stats["std"] + stats["mean"]
    out = Path(args.out)
    save_volume(Volume(raw, domain="raw"), out)
    written = [str(out)]
    if args.emit_attention:
        if a_e is None:
            raise InvalidArgumentError("checkpoint has no edge attention module; cannot emit attention")
        a = a_e[0, 0].numpy()
        scale = r / a.shape[0]
        attn = out.with_name(out.name.removesuffix(".vol") + ".attn.vol")
        save_volume(Volume(a, spacing=(scale,) * 3, domain="unit"), attn)
        written.append(str(attn))
    write_run_manifest(out.parent, args, ckpt.config.to_dict(), [args.ckpt, args.ap, args.lat])
    _emit(args, f"wrote {', '.join(written)}", {"outputs": written, "shape": [r, r, r]})
    return EXIT_OK


def cmd_metrics(args) -> int:
    gt = load_volume(_existing(args.gt))
    pred = load_volume(_existing(args.pred))
    opts = _metric_options(args, MetricOptions())
    max_value = opts.max_value if opts.max_value is not None else float(gt.data.max())
    row = sample_metrics(gt.data, pred.data, gt.data, pred.data, dice_threshold=opts.dice_threshold,
                         fd_bounds=opts.fd_bounds, max_value=max_value)
    lo, hi = float(gt.data.min()), float(gt.data.max())
    try:
        gt_bin = (gt.data - lo) / (hi - lo) > opts.dice_threshold if hi > lo else gt.data > 0
        pred_bin = (pred.data - lo) / (hi - lo) > opts.dice_threshold if hi > lo else pred.data > 0
        row["sde"] = surface_distance_error(gt_bin, pred_bin, gt.spacing).summary()
    except EarError as exc:
        row["sde"] = {"error": str(exc)}
    report = MetricReport.aggregate([{"id": Path(args.pred).name, **{k: v for k, v in row.items() if k != "sde"}}],
                                    {"sde": row["sde"], **opts.to_dict()})
    out = Path(args.out) if args.out else Path(args.pred).parent
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "metric_report.json")
    write_run_manifest(out, args, opts.to_dict(), [args.gt, args.pred])
    text = "  ".join(f"{k}={row[k]:.4f}" for k in REPORT_METRICS)
    _emit(args, text, {**report.to_dict()})
    return EXIT_OK


def cmd_mesh_export(args) -> int:
    vol = load_volume(_existing(args.volume))
    mesh = marching_cubes(vol, args.iso)
    out = mesh.write_obj(args.out)
    write_run_manifest(out.parent, args, {"iso": args.iso}, [args.volume])
    _emit(args, f"wrote {len(mesh.vertices)} vertices / {len(mesh.faces)} triangles to {out}",
          {"obj": str(out), "vertices": len(mesh.vertices), "faces": len(mesh.faces), "area_mm2": mesh.area()})
    return EXIT_OK


def cmd_ablation(args) -> int:
    cfg = _resolve_train_config(args)
    manifest = DatasetManifest.load(args.data)
    outcomes = ablation_matrix(cfg, manifest, args.out, split=args.split)
    write_run_manifest(Path(args.out), args, cfg.to_dict(), [Path(args.data) / "manifest.json"])
    rows = [(o.name, o.report) for o in outcomes]
    _emit(args, format_table(rows), {"runs": [report_row(n, r) for n, r in rows]})
    return EXIT_OK


def _sweep_one(payload):
    cfg_dict, angle, out, count, seed, split = payload
    (outcome,) = angle_sweep(TrainConfig.from_dict(cfg_dict), [angle], out, n_samples=count, seed=seed, split=split)
    return outcome.name


def cmd_angle_sweep(args) -> int:
    angles = [validate_angle(a) for a in args.angles]
    cfg = _resolve_train_config(args)
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    if args.parallel:
        jobs = [(cfg.to_dict(), a, out, args.count, seed, args.split) for a in angles]
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            names = list(pool.map(_sweep_one, jobs))
        rows = [(n, MetricReport.load(out / n / "metric_report.json")) for n in names]
    else:
        outcomes = angle_sweep(cfg, angles, out, n_samples=args.count, seed=seed, split=args.split)
        rows = [(o.name, o.report) for o in outcomes]
    write_run_manifest(out, args, cfg.to_dict())
    _emit(args, format_table(rows), {"runs": [report_row(n, r) for n, r in rows]})
    return EXIT_OK


def report_row(name: str, report: MetricReport) -> dict:
    row = {"run": name}
    for key in ("Baseline", "ABS", "FEM", "EAM", "L_recon", "L_edge", "L_freq", "L_proj", "angle_deg"):
        if key in report.meta:
            row[key] = report.meta[key]
    for k in REPORT_METRICS:
        row[k] = {"mean": report.summary[k]["mean"], "std": report.summary[k]["std"]}
    return row


def format_table(rows: list[tuple[str, MetricReport]]) -> str:
    """Fixed-width table; metrics as mean ± std to 4 decimals, toggles as boolean columns."""
    flag_keys = [k for k in ("Baseline", "ABS", "FEM", "EAM", "L_recon", "L_edge", "L_freq", "L_proj", "angle_deg")
                 if any(k in r.meta for _, r in rows)]
    header = ["run"] + flag_keys + list(REPORT_METRICS)
    body = []
    for name, rep in rows:
        line = [name]
        for k in flag_keys:
            v = rep.meta.get(k, "")
            line.append(("yes" if v else "no") if isinstance(v, bool) else f"{v}")
        for k in REPORT_METRICS:
            s = rep.summary[k]
            line.append(f"{s['mean']:.4f} ± {s['std']:.4f}")
        body.append(line)
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    fmt = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in body])


def cmd_report(args) -> int:
    rows = []
    for d in args.run_dirs:
        path = Path(d) / "metric_report.json"
        if not path.is_file():
            raise InvalidArgumentError(f"no metric_report.json in {d}")
        rows.append((Path(d).name, MetricReport.load(path)))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(format_table(rows) + "\n")
        (out / "report.json").write_text(json.dumps([report_row(n, r) for n, r in rows], indent=2))
        write_run_manifest(out, args, {}, [Path(d) / "metric_report.json" for d in args.run_dirs])
    _emit(args, format_table(rows), {"runs": [report_row(n, r) for n, r in rows]})
    return EXIT_OK


# ----------------------------------------------------------------------------- parser


def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--config", help="run config JSON (TrainConfig keys, nested network/loss sections)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--json", action="store_true", help="print machine-readable JSON on stdout")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")

    parser = Parser(prog="ear3d", description="Bi-planar radiograph to 3-D vertebra reconstruction toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    def metric_flags(p):
        p.add_argument("--threshold", type=float, help="Dice binarisation threshold on [0,1]-rescaled volumes")
        p.add_argument("--fd-bounds", type=_pair, help="lo,hi bounds for FD normalisation (default -8,2)")
        p.add_argument("--max-value", type=_max_value, default=..., help="PSNR/SSIM dynamic range, or 'auto'")

    def train_flags(p):
        p.add_argument("--profile", choices=("desk8", "desk32", "paper128"), default="desk32",
                       help="scale profile used when no --config is given")
        p.add_argument("--max-steps", type=int, help="cap on optimisation steps")
        p.add_argument("--max-epochs", type=int, help="override max_epochs")
        p.add_argument("--warmup-epochs", type=int, help="override warmup_epochs")

    p = add("phantom-gen", cmd_phantom_gen, "generate procedural vertebra phantoms")
    p.add_argument("--count", type=int, required=True, help="number of phantoms")
    p.add_argument("--grid", type=int, default=32, help="grid size per axis (voxels)")
    p.add_argument("--out", required=True, help="output directory")

    p = add("drr", cmd_drr, "project a volume to a line-integral radiograph")
    p.add_argument("--volume", required=True, help="input .vol (raw attenuation per mm)")
    p.add_argument("--alpha", type=float, default=0.0, help="rotation about the SI axis (deg); 0 lateral, 90 AP")
    p.add_argument("--beta", type=float, default=0.0, help="tilt about the LR axis (deg)")
    p.add_argument("--beam", choices=("cone", "parallel"), default="cone", help="beam geometry")
    p.add_argument("--sod", type=float, default=600.0, help="source-to-object distance (mm)")
    p.add_argument("--sdd", type=float, default=1000.0, help="source-to-detector distance (mm)")
    p.add_argument("--pitch", type=float, help="detector pixel pitch (mm)")
    p.add_argument("--detector", type=lambda t: tuple(int(x) for x in _pair(t)), help="detector size nu,nv")
    p.add_argument("--display", action="store_true", help="store 1-exp(-integral) instead of the integral")
    p.add_argument("--out", required=True, help="output .img path")

    p = add("dataset-make", cmd_dataset_make, "build a paired projection/volume dataset")
    p.add_argument("--count", type=int, required=True, help="number of samples")
    p.add_argument("--angle1", type=float, default=90.0, help="alpha of the view replicated along AP (deg)")
    p.add_argument("--angle2", type=float, default=0.0, help="alpha of the view replicated along LR (deg)")
    p.add_argument("--split", type=_triple, default=(0.8, 0.1, 0.1), help="train,val,test ratios")
    p.add_argument("--grid", type=int, default=32, help="grid size per axis (voxels)")
    p.add_argument("--out", required=True, help="output directory")

    p = add("train", cmd_train, "train a network on a dataset")
    p.add_argument("--data", required=True, help="dataset directory (with manifest.json)")
    p.add_argument("--out", required=True, help="run directory")
    train_flags(p)

    p = add("eval", cmd_eval, "evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", default="test", choices=("train", "val", "test"), help="split to evaluate")
    p.add_argument("--out", required=True, help="report directory")
    metric_flags(p)

    p = add("reconstruct", cmd_reconstruct, "reconstruct a volume from two projections")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--ap", required=True, help="AP projection .img (replicated along AP)")
    p.add_argument("--lat", required=True, help="lateral projection .img (replicated along LR)")
    p.add_argument("--out", required=True, help="output .vol path")
    p.add_argument("--emit-attention", action="store_true", help="also write <out>.attn.vol")

    p = add("metrics", cmd_metrics, "compare two volumes")
    p.add_argument("--gt", required=True, help="ground-truth .vol")
    p.add_argument("--pred", required=True, help="predicted .vol")
    p.add_argument("--out", help="report directory (default: next to --pred)")
    metric_flags(p)

    p = add("mesh-export", cmd_mesh_export, "extract an iso-surface as OBJ")
    p.add_argument("--volume", required=True, help="input .vol")
    p.add_argument("--iso", type=float, required=True, help="iso-value")
    p.add_argument("--out", required=True, help="output .obj path")

    p = add("ablation", cmd_ablation, "run the module and loss ablation matrix")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split", default="test", choices=("train", "val", "test"), help="split to evaluate")
    train_flags(p)

    p = add("angle-sweep", cmd_angle_sweep, "train and evaluate over inter-view angles")
    p.add_argument("--angles", type=_floats, default=(60.0, 80.0, 110.0, 120.0, 140.0),
                   help="comma-separated inter-view angles (deg)")
    p.add_argument("--count", type=int, default=10, help="samples per angle")
    p.add_argument("--split", default="test", choices=("train", "val", "test"), help="split to evaluate")
    p.add_argument("--parallel", action="store_true", help="one process per angle")
    p.add_argument("--out", required=True, help="output directory")
    train_flags(p)

    p = add("report", cmd_report, "tabulate metric reports of several runs")
    p.add_argument("run_dirs", nargs="+", help="directories holding metric_report.json")
    p.add_argument("--out", help="write report.txt/report.json here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USER
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (EarError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
