"""End-to-end per-epoch pipeline: watch, sample, graph, project, audit.

For every new snapshot the runner assembles the working memory, picks (or
reuses) a sampling ratio, builds the composite graph, trains the
projection (warm-started from the previous epoch by default), embeds the
full snapshot, renders a scatter, updates the health series and appends
alerts and timing rows. Every product is a deterministic function of the
input directory and the seed; wall-clock timings live in their own file.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audit import AlertConfig, AlertRecord, AuditResult, audit_run
from .errors import SentryCamError
from .ingest import DirectoryStore, RepresentationSnapshot
from .memory import assemble
from .metrics import NearestCentroidPredictor
from .plotting import decision_map_grid, render_scatter, write_svg
from .projection import TrainConfig, decode, encode, train, write_model
from .sampling import optimal_sampling_ratio
from .graph import build_graph


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: Path
    output_dir: Path
    k: int = 15
    eta_th: float = 0.8
    precision: float = 0.01
    repeats: int = 3
    temporal_cap: int = 5
    negatives: int = 5
    vis_epochs: int = 20
    batch_edges: int = 1024
    lambda_recon: float = 1.0
    seed: int = 0
    warm_start: bool = True
    plots: bool = True
    decision_map: bool = False
    refit_every: int = 1
    groups: int | None = None
    alert: AlertConfig = field(default_factory=AlertConfig)
    # embeddings of the first epochs reflect projector warm-up, not the
    # subject model; alerts triggering there are suppressed
    alert_burn_in: int = 3

    def __post_init__(self):
        if min(self.k, self.temporal_cap + 1, self.vis_epochs, self.batch_edges,
               self.refit_every, self.repeats) < 1:
            raise ValueError("counts in the pipeline config must be positive")
        if self.alert_burn_in < 0:
            raise ValueError("alert_burn_in must be >= 0")


@dataclass
class EpochOutcome:
    epoch: int
    ratio: float
    n_nodes: int
    steps: int
    seconds: float
    new_alerts: tuple[AlertRecord, ...]


def _epoch_seed(seed: int, epoch: int, salt: int = 0) -> int:
    ss = np.random.SeedSequence([seed, epoch, salt])
    return int(ss.generate_state(1)[0])


class PipelineRunner:
    """Stateful per-run orchestrator; one instance per monitored directory."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.store = DirectoryStore(cfg.input_dir)
        out = Path(cfg.output_dir)
        self.dirs = {
            "embeddings": out / "embeddings",
            "models": out / "models",
            "plots": out / "plots",
        }
        for d in self.dirs.values():
            d.mkdir(parents=True, exist_ok=True)
        self.out = out
        self.model = None
        self.ratio: float | None = None
        self.processed: list[int] = []
        self.embeddings: list[np.ndarray] = []
        self.labels: list[np.ndarray] = []
        self.surrogate: list[float] = []
        self.alerts: list[AlertRecord] = []
        self.errors: list[tuple[int, str]] = []
        self._emitted_alerts: set[tuple[str, int]] = set()
        (self.out / "alerts.jsonl").write_text("")
        (self.out / "timings.csv").write_text(
            "epoch,avt_seconds,att_seconds,ratio,n_nodes,steps\n"
        )

    # -- helpers ---------------------------------------------------------

    def _att_hint(self) -> float | None:
        hint = Path(self.cfg.input_dir) / "att.txt"
        if hint.is_file():
            try:
                return float(hint.read_text().strip())
            except ValueError:
                return None
        return None

    def _pick_ratio(self, snapshot: RepresentationSnapshot) -> float:
        cfg = self.cfg
        refit = self.ratio is None or (len(self.processed) % cfg.refit_every == 0)
        if refit:
            result = optimal_sampling_ratio(
                snapshot.matrix,
                cfg.k,
                cfg.eta_th,
                precision=cfg.precision,
                repeats=cfg.repeats,
                seed=_epoch_seed(cfg.seed, snapshot.epoch, salt=1),
            )
            self.ratio = result.optimal_ratio
        # the sampled current slice must keep more than k points
        floor = min(1.0, (cfg.k + 2) / snapshot.n)
        return max(self.ratio, floor)

    def _write_embedding(self, epoch: int, coords: np.ndarray) -> Path:
        path = self.dirs["embeddings"] / f"epoch-{epoch:06d}.jsonl"
        with path.open("w") as fh:
            for i in range(coords.shape[0]):
                fh.write(
                    json.dumps(
                        {
                            "global_index": i,
                            "epoch": epoch,
                            "x": float(coords[i, 0]),
                            "y": float(coords[i, 1]),
                        }
                    )
                    + "\n"
                )
        return path

    def _update_audit(self, epoch: int) -> tuple[AlertRecord, ...]:
        if len(self.embeddings) < 2:
            return ()
        try:
            result = audit_run(
                self.embeddings,
                self.labels,
                cfg=self.cfg.alert,
                epochs=self.processed,
                surrogate_loss=self.surrogate,
            )
        except ValueError:
            return ()
        burn_in_epochs = set(self.processed[: self.cfg.alert_burn_in])
        fresh = []
        with (self.out / "alerts.jsonl").open("a") as fh:
            for rec in result.alerts:
                key = (rec.metric, rec.epoch)
                if key in self._emitted_alerts or rec.epoch in burn_in_epochs:
                    continue
                self._emitted_alerts.add(key)
                fresh.append(rec)
                fh.write(
                    json.dumps(
                        {
                            "metric": rec.metric,
                            "epoch": rec.epoch,
                            "direction": rec.direction,
                            "delta": rec.delta,
                            "margin": rec.margin,
                        }
                    )
                    + "\n"
                )
        self._write_health(result)
        return tuple(fresh)

    def _write_health(self, result: AuditResult) -> None:
        (self.out / "health.csv").write_text(result.health.to_csv())

    # -- main entry points -----------------------------------------------

    def process_epoch(self, snapshot: RepresentationSnapshot) -> EpochOutcome:
        cfg = self.cfg
        t0 = time.perf_counter()
        memory = assemble(snapshot, self.store)
        ratio = self._pick_ratio(snapshot)
        graph = build_graph(
            memory,
            cfg.k,
            sample_ratio=ratio,
            per_node_cap=cfg.temporal_cap,
            seed=cfg.seed,
        )
        tcfg = TrainConfig(
            epochs=cfg.vis_epochs,
            batch_edges=cfg.batch_edges,
            negatives=cfg.negatives,
            lambda_recon=cfg.lambda_recon,
            seed=_epoch_seed(cfg.seed, snapshot.epoch, salt=2),
            groups=cfg.groups,
        )
        result = train(graph, tcfg, model=self.model if cfg.warm_start else None)
        self.model = result.model

        coords = encode(self.model, snapshot.matrix)
        self._write_embedding(snapshot.epoch, coords)
        write_model(self.model, self.dirs["models"] / f"epoch-{snapshot.epoch:06d}.scmm")

        labels = (
            snapshot.labels
            if snapshot.labels is not None
            else np.zeros(snapshot.n, dtype=np.uint32)
        )
        if cfg.plots:
            grid = None
            if cfg.decision_map and snapshot.labels is not None:
                predictor = NearestCentroidPredictor(snapshot.matrix, labels)
                grid = decision_map_grid(
                    coords, lambda z: decode(self.model, z), predictor
                )
            svg = render_scatter(
                coords, labels, decision_grid=grid, title=f"epoch {snapshot.epoch}"
            )
            write_svg(svg, self.dirs["plots"] / f"epoch-{snapshot.epoch:06d}.svg")

        self.processed.append(snapshot.epoch)
        self.embeddings.append(coords)
        self.labels.append(labels)
        predictor = NearestCentroidPredictor(snapshot.matrix, labels)
        self.surrogate.append(
            float(np.mean(predictor(snapshot.matrix) != labels))
        )
        new_alerts = self._update_audit(snapshot.epoch)
        self.alerts.extend(new_alerts)

        seconds = time.perf_counter() - t0
        att = self._att_hint()
        with (self.out / "timings.csv").open("a") as fh:
            fh.write(
                f"{snapshot.epoch},{seconds!r},{'' if att is None else repr(att)},"
                f"{ratio!r},{graph.n_nodes},{result.report.steps}\n"
            )
        return EpochOutcome(
            epoch=snapshot.epoch,
            ratio=ratio,
            n_nodes=graph.n_nodes,
            steps=result.report.steps,
            seconds=seconds,
            new_alerts=new_alerts,
        )

    def run_once(self, log=print) -> list[EpochOutcome]:
        """Process every epoch currently in the manifest, in order."""
        outcomes = []
        for epoch in self.store.epochs:
            if epoch in self.processed:
                continue
            try:
                snapshot = self.store.fetch(epoch)
                outcome = self.process_epoch(snapshot)
            except (SentryCamError, ValueError) as exc:
                self.errors.append((epoch, str(exc)))
                log(f"epoch {epoch}: failed: {exc}", file=sys.stderr)
                continue
            outcomes.append(outcome)
            log(
                f"epoch {epoch}: ratio={outcome.ratio:.3f} nodes={outcome.n_nodes} "
                f"steps={outcome.steps} avt={outcome.seconds:.2f}s"
                + (f" alerts={[a.metric for a in outcome.new_alerts]}" if outcome.new_alerts else "")
            )
        return outcomes

    def watch(self, poll_seconds: float = 1.0, max_polls: int | None = None, log=print):
        """Poll the input directory and process snapshots as they appear."""
        polls = 0
        outcomes = []
        while max_polls is None or polls < max_polls:
            polls += 1
            try:
                self.store.rescan()
            except SentryCamError as exc:
                log(f"rescan failed: {exc}", file=sys.stderr)
                time.sleep(poll_seconds)
                continue
            outcomes.extend(self.run_once(log=log))
            time.sleep(poll_seconds)
        return outcomes


def _log_to(stream):
    def log(*args, file=None):
        print(*args, file=file or stream)

    return log


def run_pipeline(cfg: PipelineConfig, watch: bool = False, max_polls: int | None = None,
                 stream=None) -> PipelineRunner:
    runner = PipelineRunner(cfg)
    log = _log_to(stream or sys.stdout)
    if watch:
        runner.watch(max_polls=max_polls, log=log)
    else:
        runner.run_once(log=log)
    return runner
