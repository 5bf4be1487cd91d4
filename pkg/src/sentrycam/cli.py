"""Command-line interface.

Subcommands: synth (generate snapshot streams), run (the live pipeline,
optionally watching a directory), eval (fidelity metrics of a finished
run), audit (health metrics and alerts), tipping (sampling-ratio sweep),
plot (render an embedding to SVG). Seeds fall back to the SENTRYCAM_SEED
environment variable. ``run`` and ``audit`` exit with status 2 when a
geometry alert fired, which makes them usable as CI tripwires.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audit import AlertConfig, audit_run
from .errors import SentryCamError
from .ingest import DirectoryStore, read_snapshot, scan_dir, synth_trajectory, write_trajectory
from .metrics import (
    NearestCentroidPredictor,
    FidelityReport,
    interslice_correlation,
    intraslice_preservation,
    reconstruction_accuracy,
)
from .pipeline import PipelineConfig, run_pipeline
from .plotting import decision_map_grid, render_scatter, write_svg
from .projection import decode, encode, read_model
from .theory import tipping_curve


def _seed_from_env(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("SENTRYCAM_SEED")
    return int(env) if env else 0


def _read_embedding_jsonl(path: Path) -> np.ndarray:
    rows = []
    with path.open() as fh:
        for line in fh:
            rec = json.loads(line)
            rows.append((rec["global_index"], rec["x"], rec["y"]))
    rows.sort(key=lambda r: r[0])
    return np.array([[x, y] for _, x, y in rows])


def _embedding_files(run_dir: Path) -> dict[int, Path]:
    emb_dir = run_dir / "embeddings"
    if not emb_dir.is_dir():
        raise FileNotFoundError(f"{emb_dir} not found (is this a run output directory?)")
    out = {}
    for path in sorted(emb_dir.glob("epoch-*.jsonl")):
        out[int(path.stem.split("-")[1])] = path
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    snapshots = synth_trajectory(
        args.scenario,
        epochs=args.epochs,
        n_per_class=args.n_per_class,
        classes=args.classes,
        dim=args.dim,
        collapse_epoch=args.collapse_epoch,
        seed=_seed_from_env(args.seed),
    )
    paths = write_trajectory(snapshots, args.out)
    manifest = scan_dir(args.out)
    (Path(args.out) / "manifest.json").write_text(manifest.to_json() + "\n")
    print(f"wrote {len(paths)} snapshots to {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = PipelineConfig(
        input_dir=Path(args.input),
        output_dir=Path(args.out),
        k=args.k,
        eta_th=args.eta_th,
        precision=args.precision,
        temporal_cap=args.temporal_cap,
        negatives=args.negatives,
        vis_epochs=args.vis_epochs,
        batch_edges=args.batch_edges,
        lambda_recon=args.lambda_recon,
        seed=_seed_from_env(args.seed),
        warm_start=not args.fresh,
        plots=not args.no_plots,
        decision_map=args.decision_map,
        refit_every=args.refit_every,
        alert=AlertConfig(
            consecutive=args.alert_k,
            margin_fraction=args.alert_margin,
            window=args.alert_window,
            smoothing=args.smoothing,
        ),
        alert_burn_in=args.alert_burn_in,
    )
    runner = run_pipeline(cfg, watch=args.watch, max_polls=args.max_polls)
    if runner.errors:
        return 1
    if any(r.metric != "surrogate_loss" for r in runner.alerts):
        return 2
    return 0


def cmd_eval(args) -> int:
    store = DirectoryStore(args.input)
    embeddings = _embedding_files(Path(args.run_dir))
    epochs = [e for e in store.epochs if e in embeddings]
    if not epochs:
        print("no epochs with both a snapshot and an embedding", file=sys.stderr)
        return 1

    pres_f, pres_c, recon = [], [], []
    high_traj, low_traj = [], []
    n_ref = None
    for epoch in epochs:
        snap = store.fetch(epoch)
        coords = _read_embedding_jsonl(embeddings[epoch])
        if coords.shape[0] != snap.n:
            print(f"epoch {epoch}: embedding has {coords.shape[0]} rows, snapshot {snap.n}",
                  file=sys.stderr)
            return 1
        res = intraslice_preservation(snap.matrix, coords, args.k)
        pres_f.append(res.fraction)
        pres_c.append(res.mean_count)
        model_path = Path(args.run_dir) / "models" / f"epoch-{epoch:06d}.scmm"
        if model_path.is_file() and snap.labels is not None:
            model = read_model(model_path)
            reconstructed = decode(model, encode(model, snap.matrix))
            predictor = NearestCentroidPredictor(snap.matrix, snap.labels)
            recon.append(reconstruction_accuracy(snap.matrix, reconstructed, predictor))
        else:
            recon.append(float("nan"))
        if n_ref is None:
            n_ref = snap.n
        if snap.n == n_ref:
            high_traj.append(snap.matrix)
            low_traj.append(coords)

    inter_mean = None
    inter_per_sample = None
    if len(high_traj) >= 3 and len(high_traj) == len(epochs):
        res = interslice_correlation(
            np.stack(high_traj, axis=1), np.stack(low_traj, axis=1)
        )
        inter_mean = res.mean
        inter_per_sample = res.per_sample

    report = FidelityReport(
        epochs=tuple(epochs),
        preservation_fraction=tuple(pres_f),
        preservation_count=tuple(pres_c),
        reconstruction=tuple(recon),
        interslice_mean=inter_mean,
        interslice_per_sample=inter_per_sample,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv())
    (out / "metrics.json").write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
    print(f"wrote metrics for {len(epochs)} epochs to {out}")
    if inter_mean is not None:
        print(f"interslice mean spearman: {inter_mean:.3f}")
    return 0


def cmd_audit(args) -> int:
    store = DirectoryStore(args.input)
    if args.space == "embedding":
        embeddings = _embedding_files(Path(args.run_dir))
        epochs = [e for e in store.epochs if e in embeddings]
    else:
        epochs = list(store.epochs)
    if len(epochs) < 2:
        print("need at least 2 epochs to audit", file=sys.stderr)
        return 1

    points, labels = [], []
    for epoch in epochs:
        snap = store.fetch(epoch)
        lab = snap.labels if snap.labels is not None else np.zeros(snap.n, dtype=np.uint32)
        labels.append(lab)
        if args.space == "embedding":
            points.append(_read_embedding_jsonl(embeddings[epoch]))
        else:
            points.append(np.asarray(snap.matrix, dtype=np.float64))

    cfg = AlertConfig(
        consecutive=args.alert_k,
        margin_fraction=args.alert_margin,
        window=args.alert_window,
        smoothing=args.smoothing,
    )
    from .audit import surrogate_loss_series

    raw = [np.asarray(store.fetch(e).matrix, dtype=np.float64) for e in epochs]
    result = audit_run(
        points, labels, cfg=cfg, epochs=epochs,
        surrogate_loss=surrogate_loss_series(raw, labels),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "health.csv").write_text(result.health.to_csv())
    with (out / "alerts.jsonl").open("w") as fh:
        for rec in result.alerts:
            fh.write(json.dumps({
                "metric": rec.metric, "epoch": rec.epoch,
                "direction": rec.direction, "delta": rec.delta, "margin": rec.margin,
            }) + "\n")
    for note in result.notes:
        print(f"note: {note}", file=sys.stderr)
    if result.geometry_alert:
        rec = result.geometry_alert
        print(f"geometry alert: {rec.metric} at epoch {rec.epoch}")
    if result.loss_alert:
        print(f"surrogate loss alert at epoch {result.loss_alert.epoch}")
    return 2 if result.geometry_alert else 0


def cmd_tipping(args) -> int:
    snap = read_snapshot(args.snapshot)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    curve = tipping_curve(
        np.asarray(snap.matrix, dtype=np.float64),
        ratios,
        k=args.k,
        seed=_seed_from_env(args.seed),
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(curve.to_csv())
    print(f"knee ratio: {curve.knee_ratio!r}; wrote {args.out}")
    return 0


def cmd_plot(args) -> int:
    coords = _read_embedding_jsonl(Path(args.embedding))
    labels = None
    predictor = None
    if args.snapshot:
        snap = read_snapshot(args.snapshot)
        if snap.labels is not None:
            labels = snap.labels
            predictor = NearestCentroidPredictor(snap.matrix, snap.labels)
    grid = None
    if args.decision_map:
        if not (args.model and predictor is not None):
            print("--decision-map needs --model and a labeled --snapshot", file=sys.stderr)
            return 1
        model = read_model(args.model)
        grid = decision_map_grid(coords, lambda z: decode(model, z), predictor)
    svg = render_scatter(coords, labels, decision_grid=grid, title=args.title)
    write_svg(svg, args.out)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_alert_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alert-k", type=int, default=2, help="consecutive unhealthy epochs")
    p.add_argument("--alert-margin", type=float, default=0.25, help="margin as a fraction of sigma")
    p.add_argument("--alert-window", type=int, default=10, help="volatility window (epochs)")
    p.add_argument("--smoothing", type=float, default=0.5, help="EMA smoothing factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentrycam",
        description="Live visualization and geometry auditing of representation snapshots.",
    )
    parser.add_argument("--version", action="version", version=f"sentrycam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic snapshot stream")
    p.add_argument("--scenario", choices=("stable", "collapse", "drift"), required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--collapse-epoch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run the live pipeline over a snapshot directory")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--watch", action="store_true", help="poll the directory for new epochs")
    p.add_argument("--max-polls", type=int, default=None, help="stop watching after N polls")
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--eta-th", type=float, default=0.8)
    p.add_argument("--precision", type=float, default=0.01)
    p.add_argument("--temporal-cap", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--vis-epochs", type=int, default=20)
    p.add_argument("--batch-edges", type=int, default=1024)
    p.add_argument("--lambda-recon", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fresh", action="store_true", help="retrain from scratch each epoch")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--decision-map", action="store_true")
    p.add_argument("--refit-every", type=int, default=1,
                   help="re-run the sampling-ratio search every N epochs")
    p.add_argument("--alert-burn-in", type=int, default=3,
                   help="suppress alerts triggering in the first N audited epochs")
    _add_alert_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="fidelity metrics for a finished run")
    p.add_argument("--input", required=True, help="snapshot directory")
    p.add_argument("--run-dir", required=True, help="pipeline output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=15)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="cluster-health audit and alerts")
    p.add_argument("--input", required=True, help="snapshot directory (labels, surrogate loss)")
    p.add_argument("--run-dir", default=None, help="pipeline output (embedding space)")
    p.add_argument("--space", choices=("embedding", "raw"), default="embedding")
    p.add_argument("--out", required=True)
    _add_alert_flags(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("tipping", help="sampling-ratio sweep on one snapshot")
    p.add_argument("--snapshot", required=True, help="snapshot file to sweep")
    p.add_argument("--ratios", default="1.0,0.5,0.25,0.1,0.05,0.02,0.01")
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_tipping)

    p = sub.add_parser("plot", help="render an embedding JSONL to SVG")
    p.add_argument("--embedding", required=True)
    p.add_argument("--snapshot", default=None, help="snapshot file for labels")
    p.add_argument("--model", default=None, help="model checkpoint for --decision-map")
    p.add_argument("--decision-map", action="store_true")
    p.add_argument("--title", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "audit" and args.space == "embedding" and not args.run_dir:
        parser.error("audit --space embedding requires --run-dir")
    try:
        return args.func(args)
    except (SentryCamError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
