"""Trace containers and their CSV schemas.

Slot trace CSV:   slot_index,wallclock_start_us,outcome,owner_or_colliders,duration_us
Event trace CSV:  station,packet_id,arrival_us,departure_us
Ownership CSV:    slot_index,owner_id

Collision members are ';'-joined in owner_or_colliders. Timestamps that are
integral are written without a decimal point so reruns stay byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import TraceFormatError

IDLE, SUCCESS, COLLISION = 0, 1, 2
_OUTCOME_NAMES = {IDLE: "idle", SUCCESS: "success", COLLISION: "collision"}
_OUTCOME_CODES = {name: code for code, name in _OUTCOME_NAMES.items()}


@dataclass(frozen=True)
class SlotTraceRecord:
    """One slot: outcome, participants, duration, wallclock placement."""

    slot_index: int
    wallclock_start: int
    outcome: str
    owner: int | None
    colliders: tuple[int, ...]
    duration: int


@dataclass
class SlotTrace:
    """Compact per-slot trace: outcome codes, success owner, duration.

    colliders holds one id-tuple per collision slot, in collision order.
    """

    codes: np.ndarray       # int8, IDLE/SUCCESS/COLLISION
    owners: np.ndarray      # int32, success owner or -1
    durations: np.ndarray   # int64 microseconds
    colliders: list[tuple[int, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.codes.size)

    @classmethod
    def from_lists(cls, codes, owners, durations, colliders=None):
        return cls(
            codes=np.asarray(codes, dtype=np.int8),
            owners=np.asarray(owners, dtype=np.int32),
            durations=np.asarray(durations, dtype=np.int64),
            colliders=list(colliders or []),
        )

    def wallclock_starts(self) -> np.ndarray:
        """Slot start times: prefix sums of the preceding durations."""
        starts = np.zeros(len(self), dtype=np.int64)
        np.cumsum(self.durations[:-1], out=starts[1:])
        return starts

    def records(self) -> Iterator[SlotTraceRecord]:
        starts = self.wallclock_starts()
        coll_iter = iter(self.colliders)
        for i in range(len(self)):
            code = int(self.codes[i])
            yield SlotTraceRecord(
                slot_index=i,
                wallclock_start=int(starts[i]),
                outcome=_OUTCOME_NAMES[code],
                owner=int(self.owners[i]) if code == SUCCESS else None,
                colliders=next(coll_iter) if code == COLLISION else (),
                duration=int(self.durations[i]),
            )


@dataclass
class EventTrace:
    """Departure events: (station, packet_id, arrival, departure), in
    departure order. FIFO per station."""

    station: np.ndarray     # int32
    packet_id: np.ndarray   # int64
    arrival: np.ndarray     # float64 microseconds
    departure: np.ndarray   # float64 microseconds

    def __len__(self) -> int:
        return int(self.station.size)

    @classmethod
    def from_lists(cls, station, packet_id, arrival, departure):
        return cls(
            station=np.asarray(station, dtype=np.int32),
            packet_id=np.asarray(packet_id, dtype=np.int64),
            arrival=np.asarray(arrival, dtype=np.float64),
            departure=np.asarray(departure, dtype=np.float64),
        )

    def for_station(self, station: int) -> "EventTrace":
        mask = self.station == station
        return EventTrace(
            station=self.station[mask],
            packet_id=self.packet_id[mask],
            arrival=self.arrival[mask],
            departure=self.departure[mask],
        )


def _fmt_us(value: float) -> str:
    # integral microsecond values print as integers
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def write_slot_trace_csv(trace: SlotTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot_index", "wallclock_start_us", "outcome",
                         "owner_or_colliders", "duration_us"])
        for rec in trace.records():
            if rec.outcome == "success":
                who = str(rec.owner)
            elif rec.outcome == "collision":
                who = ";".join(str(s) for s in rec.colliders)
            else:
                who = ""
            writer.writerow([rec.slot_index, rec.wallclock_start,
                             rec.outcome, who, rec.duration])


def read_slot_trace_csv(path: str | Path) -> SlotTrace:
    codes: list[int] = []
    owners: list[int] = []
    durations: list[int] = []
    colliders: list[tuple[int, ...]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:1] != ["slot_index"]:
            raise TraceFormatError(f"{path}: not a slot trace CSV")
        for lineno, row in enumerate(reader, start=2):
            try:
                outcome = row[2]
                code = _OUTCOME_CODES[outcome]
                duration = int(row[4])
            except (IndexError, KeyError, ValueError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: bad row {row!r}") from exc
            codes.append(code)
            durations.append(duration)
            if code == SUCCESS:
                owners.append(int(row[3]))
            else:
                owners.append(-1)
                if code == COLLISION:
                    colliders.append(tuple(int(s) for s in row[3].split(";")))
    return SlotTrace.from_lists(codes, owners, durations, colliders)


def write_event_trace_csv(trace: EventTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station", "packet_id", "arrival_us", "departure_us"])
        for i in range(len(trace)):
            writer.writerow([
                int(trace.station[i]),
                int(trace.packet_id[i]),
                _fmt_us(trace.arrival[i]),
                _fmt_us(trace.departure[i]),
            ])


def read_event_trace_csv(path: str | Path) -> EventTrace:
    station: list[int] = []
    packet_id: list[int] = []
    arrival: list[float] = []
    departure: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:1] != ["station"]:
            raise TraceFormatError(f"{path}: not an event trace CSV")
        for lineno, row in enumerate(reader, start=2):
            try:
                station.append(int(row[0]))
                packet_id.append(int(row[1]))
                arrival.append(float(row[2]))
                departure.append(float(row[3]))
            except (IndexError, ValueError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: bad row {row!r}") from exc
    return EventTrace.from_lists(station, packet_id, arrival, departure)


def write_ownership_csv(owners: Sequence[int] | np.ndarray,
                        path: str | Path) -> None:
    """Success-ownership sequence, one row per successful slot."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot_index", "owner_id"])
        for i, owner in enumerate(owners):
            writer.writerow([i, int(owner)])


def read_ownership_csv(path: str | Path) -> np.ndarray:
    owners: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:1] != ["slot_index"]:
            raise TraceFormatError(f"{path}: not an ownership CSV")
        for lineno, row in enumerate(reader, start=2):
            try:
                owners.append(int(row[1]))
            except (IndexError, ValueError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: bad row {row!r}") from exc
    return np.asarray(owners, dtype=np.int32)
