"""Selective working memory: current snapshot plus log-spaced history.

History epochs sit at power-of-two offsets behind the current epoch
(offsets 2, 4, 8, ...; the immediately previous epoch is deliberately not
included — recency is supplied by the current snapshot itself). Offsets
that fall before the first available epoch, or onto a missing one, are
dropped rather than substituted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from .errors import DimensionMismatchError, MissingEpochError
from .ingest import RepresentationSnapshot


class SnapshotAccessor(Protocol):
    @property
    def epochs(self) -> tuple[int, ...]: ...

    def fetch(self, epoch: int) -> RepresentationSnapshot: ...


def select_history(t: int, available: Iterable[int] | range) -> set[int]:
    """Epochs at offsets 2^n (n >= 1) behind t that exist in ``available``."""
    if isinstance(available, range) and available.step == 1:
        # hot path: plain integer bounds instead of a membership call
        lo = available.start
        hi = available.stop
        out: set[int] = set()
        offset = 2
        while offset <= t:
            epoch = t - offset
            if lo <= epoch < hi:
                out.add(epoch)
            offset <<= 1
        return out
    if isinstance(available, (range, set, frozenset, dict)):
        contains = available.__contains__
    elif isinstance(available, np.ndarray):
        members = set(int(e) for e in available)
        contains = members.__contains__
    else:
        contains = set(available).__contains__
    out = set()
    add = out.add
    offset = 2
    while offset <= t:
        epoch = t - offset
        if contains(epoch):
            add(epoch)
        offset <<= 1
    return out


@dataclass(frozen=True)
class WorkingMemory:
    """Current snapshot plus its historical context, most recent first."""

    current: RepresentationSnapshot
    history: tuple[RepresentationSnapshot, ...]

    @property
    def current_epoch(self) -> int:
        return self.current.epoch

    @property
    def total_nodes(self) -> int:
        return self.current.n + sum(s.n for s in self.history)

    @property
    def snapshots(self) -> tuple[RepresentationSnapshot, ...]:
        return (self.current, *self.history)


class InMemoryStore:
    """Dict-backed accessor, mostly for tests and in-process pipelines."""

    def __init__(self, snapshots: Iterable[RepresentationSnapshot] = ()):
        self._by_epoch = {s.epoch: s for s in snapshots}

    @property
    def epochs(self) -> tuple[int, ...]:
        return tuple(sorted(self._by_epoch))

    def add(self, snapshot: RepresentationSnapshot) -> None:
        self._by_epoch[snapshot.epoch] = snapshot

    def fetch(self, epoch: int) -> RepresentationSnapshot:
        try:
            return self._by_epoch[epoch]
        except KeyError:
            raise MissingEpochError(epoch) from None


def assemble(current: RepresentationSnapshot, store: SnapshotAccessor) -> WorkingMemory:
    """Fetch the history selected for ``current`` and bundle it up.

    Raises :class:`MissingEpochError` if an epoch the store advertises
    cannot actually be loaded, and :class:`DimensionMismatchError` if a
    historical snapshot disagrees on feature dimension.
    """
    available = [e for e in store.epochs if e < current.epoch]
    wanted = sorted(select_history(current.epoch, set(available)), reverse=True)
    history = []
    for epoch in wanted:
        snap = store.fetch(epoch)
        if snap.d != current.d:
            raise DimensionMismatchError(
                f"epoch {epoch} has d={snap.d}, current epoch {current.epoch} has d={current.d}"
            )
        history.append(snap)
    return WorkingMemory(current=current, history=tuple(history))
