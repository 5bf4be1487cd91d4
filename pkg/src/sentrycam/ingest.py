"""Snapshot wire format, directory scanning and synthetic trajectories.

A snapshot file is the unit of exchange between a training job and the
auditor: one file per epoch, published with an atomic rename so pollers
never see a partial payload.

Layout (little-endian):

    magic   4 bytes  b"SCAM"
    version u16      1
    epoch   u32
    task_id u32
    n       u32
    d       u32
    flags   u8       bit0 = labels present, bit1 = predictions present
    matrix  n*d f32  row-major
    labels  n u32    if bit0
    preds   n u32    if bit1
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    DimensionMismatchError,
    DuplicateEpochError,
    FormatError,
    MissingEpochError,
    VersionError,
)

SNAPSHOT_MAGIC = b"SCAM"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sHIIIIB")
HEADER_SIZE = _HEADER.size  # 23 bytes
_FLAG_LABELS = 0x01
_FLAG_PREDICTIONS = 0x02


def _as_index_array(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be integer class indices")
    if arr.min(initial=0) < 0:
        raise ValueError(f"{name} must be non-negative")
    return arr.astype(np.uint32)


@dataclass(frozen=True)
class RepresentationSnapshot:
    """One epoch's matrix of hidden vectors plus optional per-row tags."""

    epoch: int
    matrix: np.ndarray
    task_id: int = 0
    labels: np.ndarray | None = None
    predictions: np.ndarray | None = None

    def __post_init__(self):
        if self.epoch < 0 or self.task_id < 0:
            raise ValueError("epoch and task_id must be non-negative")
        matrix = np.asarray(self.matrix)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise ValueError(f"matrix must be (n>=1, d>=1), got shape {matrix.shape}")
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if not np.isfinite(matrix).all():
            raise ValueError("matrix contains non-finite values")
        object.__setattr__(self, "matrix", matrix)
        n = matrix.shape[0]
        if self.labels is not None:
            object.__setattr__(self, "labels", _as_index_array(self.labels, n, "labels"))
        if self.predictions is not None:
            object.__setattr__(
                self, "predictions", _as_index_array(self.predictions, n, "predictions")
            )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def write_snapshot(snapshot: RepresentationSnapshot, path: str | Path) -> None:
    """Serialize a snapshot, publishing it atomically via a temp-file rename."""
    path = Path(path)
    flags = 0
    if snapshot.labels is not None:
        flags |= _FLAG_LABELS
    if snapshot.predictions is not None:
        flags |= _FLAG_PREDICTIONS
    header = _HEADER.pack(
        SNAPSHOT_MAGIC,
        SNAPSHOT_VERSION,
        snapshot.epoch,
        snapshot.task_id,
        snapshot.n,
        snapshot.d,
        flags,
    )
    payload = bytearray(header)
    payload += snapshot.matrix.astype("<f4", copy=False).tobytes(order="C")
    if snapshot.labels is not None:
        payload += snapshot.labels.astype("<u4", copy=False).tobytes()
    if snapshot.predictions is not None:
        payload += snapshot.predictions.astype("<u4", copy=False).tobytes()

    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _parse_header(raw: bytes, origin: str):
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{origin}: too short to hold a snapshot header")
    magic, version, epoch, task_id, n, d, flags = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{origin}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise VersionError(f"{origin}: unsupported version {version}")
    if flags & ~(_FLAG_LABELS | _FLAG_PREDICTIONS):
        raise FormatError(f"{origin}: unknown flag bits 0x{flags:02x}")
    return epoch, task_id, n, d, flags


def read_snapshot(path: str | Path) -> RepresentationSnapshot:
    """Exact inverse of :func:`write_snapshot`."""
    path = Path(path)
    raw = path.read_bytes()
    epoch, task_id, n, d, flags = _parse_header(raw, str(path))
    expected = HEADER_SIZE + 4 * n * d
    if flags & _FLAG_LABELS:
        expected += 4 * n
    if flags & _FLAG_PREDICTIONS:
        expected += 4 * n
    if len(raw) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(raw)} bytes, header implies {expected}"
        )
    offset = HEADER_SIZE
    matrix = np.frombuffer(raw, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    offset += 4 * n * d
    labels = None
    predictions = None
    if flags & _FLAG_LABELS:
        labels = np.frombuffer(raw, dtype="<u4", count=n, offset=offset)
        offset += 4 * n
    if flags & _FLAG_PREDICTIONS:
        predictions = np.frombuffer(raw, dtype="<u4", count=n, offset=offset)
    return RepresentationSnapshot(
        epoch=epoch,
        matrix=matrix.copy(),
        task_id=task_id,
        labels=None if labels is None else labels.copy(),
        predictions=None if predictions is None else predictions.copy(),
    )


@dataclass(frozen=True)
class ManifestEntry:
    epoch: int
    path: Path
    n: int
    d: int


@dataclass(frozen=True)
class SnapshotManifest:
    entries: tuple[ManifestEntry, ...]
    version: int = SNAPSHOT_VERSION

    @property
    def epochs(self) -> tuple[int, ...]:
        return tuple(e.epoch for e in self.entries)

    def to_json(self) -> str:
        return json.dumps(
            [
                {"epoch": e.epoch, "path": str(e.path), "n": e.n, "d": e.d}
                for e in self.entries
            ]
        )


def scan_dir(directory: str | Path) -> SnapshotManifest:
    """Manifest of the valid snapshot files in a directory, sorted by epoch.

    Files that do not parse as snapshot headers (or whose size disagrees
    with their header, i.e. a non-atomic writer was caught mid-flight) are
    skipped. Duplicate epochs and mixed feature dimensions are errors.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(str(directory))
    found: list[ManifestEntry] = []
    for path in sorted(directory.iterdir()):
        if not path.is_file():
            continue
        try:
            with path.open("rb") as fh:
                head = fh.read(HEADER_SIZE)
            epoch, _task, n, d, flags = _parse_header(head, str(path))
        except FormatError:
            continue
        expected = HEADER_SIZE + 4 * n * d
        if flags & _FLAG_LABELS:
            expected += 4 * n
        if flags & _FLAG_PREDICTIONS:
            expected += 4 * n
        if path.stat().st_size != expected:
            continue
        found.append(ManifestEntry(epoch=epoch, path=path, n=n, d=d))

    found.sort(key=lambda e: e.epoch)
    seen: dict[int, Path] = {}
    for entry in found:
        if entry.epoch in seen:
            raise DuplicateEpochError(
                f"epoch {entry.epoch} appears in both {seen[entry.epoch]} and {entry.path}"
            )
        seen[entry.epoch] = entry.path
    dims = {entry.d for entry in found}
    if len(dims) > 1:
        raise DimensionMismatchError(f"mixed feature dimensions in directory: {sorted(dims)}")
    return SnapshotManifest(entries=tuple(found))


class DirectoryStore:
    """Snapshot accessor backed by a scanned directory."""

    def __init__(self, directory: str | Path):
        self._directory = Path(directory)
        self._manifest = scan_dir(self._directory)
        self._by_epoch = {e.epoch: e.path for e in self._manifest.entries}

    @property
    def manifest(self) -> SnapshotManifest:
        return self._manifest

    @property
    def epochs(self) -> tuple[int, ...]:
        return self._manifest.epochs

    def rescan(self) -> SnapshotManifest:
        self._manifest = scan_dir(self._directory)
        self._by_epoch = {e.epoch: e.path for e in self._manifest.entries}
        return self._manifest

    def fetch(self, epoch: int) -> RepresentationSnapshot:
        path = self._by_epoch.get(epoch)
        if path is None:
            raise MissingEpochError(epoch)
        try:
            return read_snapshot(path)
        except (OSError, FormatError) as exc:
            raise MissingEpochError(epoch, f"snapshot for epoch {epoch}: {exc}") from exc


# ---------------------------------------------------------------------------
# Synthetic trajectories
# ---------------------------------------------------------------------------

SCENARIOS = ("stable", "collapse", "drift")


@dataclass(frozen=True)
class SynthParams:
    """Geometry knobs for the synthetic generator.

    separation grows linearly and the within-class scale decays
    geometrically in the stable phase; collapse multiplies centroid
    offsets from their mean by ``collapse_rate`` each epoch past the
    collapse point (scale frozen so overlap actually develops); drift
    replaces the linear growth with a random walk of the centroids.
    Within-class noise spans an ``intrinsic_dim``-dimensional random
    subspace of the ambient space (None for full rank) — trained networks
    produce low-intrinsic-dimension activations, and the density proxy is
    only informative in that regime.
    """

    separation: float = 4.0
    separation_rate: float = 0.3
    scale: float = 1.0
    scale_decay: float = 0.97
    collapse_rate: float = 0.8
    drift_step: float = 0.25
    intrinsic_dim: int | None = 8
    # each class gets its own random noise subspace (the class manifolds
    # are then differently oriented charts rather than parallel slabs)
    per_class_basis: bool = False


def synth_trajectory(
    scenario: str,
    epochs: int,
    n_per_class: int,
    classes: int,
    dim: int,
    collapse_epoch: int | None = None,
    seed: int = 0,
    task_id: int = 0,
    params: SynthParams = SynthParams(),
) -> list[RepresentationSnapshot]:
    """Deterministic per-epoch snapshots for the three desk-scale scenarios."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}, expected one of {SCENARIOS}")
    if min(epochs, n_per_class, classes, dim) < 1:
        raise ValueError("epochs, n_per_class, classes and dim must all be >= 1")
    if scenario == "collapse":
        if collapse_epoch is None:
            raise ValueError("collapse scenario requires collapse_epoch")
        if not 0 <= collapse_epoch < epochs:
            raise ValueError("collapse_epoch must lie within the run")

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    rank = dim if params.intrinsic_dim is None else min(params.intrinsic_dim, dim)
    labels = np.repeat(np.arange(classes, dtype=np.uint32), n_per_class)
    if rank < dim:
        low = rng.standard_normal((classes * n_per_class, rank))
        if params.per_class_basis:
            noise = np.empty((classes * n_per_class, dim))
            for c in range(classes):
                basis, _ = np.linalg.qr(rng.standard_normal((dim, rank)))
                rows = labels == c
                noise[rows] = low[rows] @ basis.T
        else:
            basis, _ = np.linalg.qr(rng.standard_normal((dim, rank)))
            noise = low @ basis.T
    else:
        noise = rng.standard_normal((classes * n_per_class, dim))

    snapshots = []
    centroids = directions * params.separation
    frozen_scale = None
    for t in range(epochs):
        if scenario == "drift":
            if t > 0:
                step = params.drift_step * rng.standard_normal((classes, dim)) / np.sqrt(dim)
                centroids = centroids + step
            scale_t = params.scale
        elif scenario == "collapse" and t > collapse_epoch:
            mean = centroids.mean(axis=0, keepdims=True)
            centroids = mean + params.collapse_rate * (centroids - mean)
            if frozen_scale is None:
                frozen_scale = params.scale * params.scale_decay**collapse_epoch
            scale_t = frozen_scale
        else:
            centroids = directions * (params.separation + params.separation_rate * t)
            scale_t = params.scale * params.scale_decay**t

        matrix = centroids[labels] + scale_t * noise
        snapshots.append(
            RepresentationSnapshot(
                epoch=t, matrix=matrix, task_id=task_id, labels=labels
            )
        )
    return snapshots


def write_trajectory(
    snapshots: list[RepresentationSnapshot], directory: str | Path
) -> list[Path]:
    """Write one file per epoch into ``directory`` (created if needed)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for snap in snapshots:
        path = directory / f"epoch-{snap.epoch:06d}.scam"
        write_snapshot(snap, path)
        paths.append(path)
    return paths
