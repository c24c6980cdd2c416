"""Channels as sets of reading pairs, echo counts and the phase test."""

import csv
import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from functools import reduce
from pathlib import Path
from typing import Literal

from pydantic import Field, model_validator

from .enums import EventKind
from .exceptions import InvalidParameterError
from .models import (
    ClockReading,
    EchoCount,
    EventRecord,
    LogsyncBaseModel,
    PhaseTolerance,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL_CYCLES = 1e-9

ReadingPair = tuple[ClockReading, ClockReading]


# =============================================================================
# Domain types
# =============================================================================


class Channel(LogsyncBaseModel):
    """Transmit/receive reading pairs for one direction, A -> B."""

    source: str = Field(..., description="Transmitting machine A")
    target: str = Field(..., description="Receiving machine B")
    pairs: tuple[ReadingPair, ...] = Field((), description="Pairs (a, b) in order")

    @model_validator(mode="after")
    def validate_order(self) -> "Channel":
        for (a0, b0), (a1, b1) in zip(self.pairs, self.pairs[1:]):
            if not (a1.value > a0.value and b1.value > b0.value):
                raise ValueError("channel pairs must increase in both components")
        return self

    def __len__(self) -> int:
        return len(self.pairs)

    def reception_phases(self) -> list[float]:
        return [b.phi for _, b in self.pairs]

    def rows(self) -> list[tuple[int, float, int, float]]:
        return [(a.m, a.phi, b.m, b.phi) for a, b in self.pairs]

    def matches(self, other: "Channel", tol_cycles: float = DEFAULT_TOL_CYCLES) -> bool:
        """Same pair set up to tol_cycles on every reading."""
        if len(self) != len(other):
            return False
        return all(
            abs(a.value - c.value) <= tol_cycles and abs(b.value - d.value) <= tol_cycles
            for (a, b), (c, d) in zip(self.pairs, other.pairs)
        )


class RepeatingDescriptor(LogsyncBaseModel):
    """Pairs (m0 + l j . phi_a, n0 + l k . phi_b) for l in ell_range."""

    base_a: ClockReading = Field(..., description="Reading m0.phi_a at l = 0")
    base_b: ClockReading = Field(..., description="Reading n0.phi_b at l = 0")
    j: int = Field(..., gt=0, description="Cycles between transmissions")
    k: int = Field(..., gt=0, description="Cycles between receptions")
    ell_range: tuple[int, int] | None = Field(
        None, description="Inclusive range of l; None means endless"
    )

    @model_validator(mode="after")
    def validate_range(self) -> "RepeatingDescriptor":
        if self.ell_range is not None and self.ell_range[1] < self.ell_range[0]:
            raise ValueError("ell_range must be non-empty")
        return self

    def pair(self, ell: int) -> ReadingPair:
        return (
            ClockReading.from_value(self.base_a.value + ell * self.j),
            ClockReading.from_value(self.base_b.value + ell * self.k),
        )

    def generate(
        self, source: str = "A", target: str = "B", count: int | None = None
    ) -> Channel:
        """Materialize the descriptor; endless descriptors need a count."""
        if self.ell_range is not None:
            first, last = self.ell_range
        elif count is not None:
            first, last = 0, count - 1
        else:
            raise InvalidParameterError(
                "An endless descriptor needs a count to generate pairs", "E001"
            )
        return Channel(
            source=source,
            target=target,
            pairs=tuple(self.pair(ell) for ell in range(first, last + 1)),
        )


class OccurrenceEdge(LogsyncBaseModel):
    """Edge between two node indices of an occurrence graph."""

    source: int = Field(..., ge=0, description="Index of the earlier node")
    target: int = Field(..., ge=0, description="Index of the later node")
    kind: Literal["signal", "succession"] = Field(..., description="Edge kind")


class OccurrenceGraph(LogsyncBaseModel):
    """Events as nodes; light signals and per-machine succession as edges."""

    nodes: tuple[EventRecord, ...] = Field((), description="Events in graph order")
    edges: tuple[OccurrenceEdge, ...] = Field((), description="Directed edges")

    def to_dot(self, name: str = "occurrences") -> str:
        lines = [f"digraph {name} {{", "  rankdir=BT;"]
        by_machine: dict[str, list[int]] = defaultdict(list)
        for i, node in enumerate(self.nodes):
            by_machine[node.machine].append(i)
        for machine, indices in sorted(by_machine.items()):
            lines.append(f'  subgraph "cluster_{machine}" {{')
            lines.append(f'    label="{machine}";')
            for i in indices:
                node = self.nodes[i]
                shape = "box" if node.kind is EventKind.TRANSMIT else "ellipse"
                lines.append(f'    n{i} [label="{node.reading}", shape={shape}];')
            lines.append("  }")
        for edge in self.edges:
            style = "solid" if edge.kind == "signal" else "dashed"
            lines.append(f"  n{edge.source} -> n{edge.target} [style={style}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


# =============================================================================
# Operations
# =============================================================================


def phase_ok(phi: float, tol: PhaseTolerance) -> bool:
    """Arrival phase lies inside the writing window |phi| < (1 - eta)/2."""
    return abs(phi) < (1.0 - tol.eta) / 2.0


def channel_from_log(log: Sequence[EventRecord], a: str, b: str) -> Channel:
    """All (transmit at a, receive at b) pairs of signals from a to b."""
    received = {
        r.signal: r
        for r in log
        if r.kind is EventKind.RECEIVE and r.machine == b and r.counterpart == a
    }
    pairs = sorted(
        (
            (r.reading, received[r.signal].reading)
            for r in log
            if r.kind is EventKind.TRANSMIT
            and r.machine == a
            and r.counterpart == b
            and r.signal in received
        ),
        key=lambda pair: pair[0].value,
    )
    return Channel(source=a, target=b, pairs=tuple(pairs))


def detect_repeating(
    ch: Channel, tol_cycles: float = DEFAULT_TOL_CYCLES
) -> RepeatingDescriptor | None:
    """Fit integer increments j, k to the pairs, or None without such structure."""
    if len(ch) < 3:
        return None
    a0, b0 = ch.pairs[0]
    gaps_a, gaps_b = [], []
    for a, b in ch.pairs[1:]:
        da, db = a.value - a0.value, b.value - b0.value
        ia, ib = round(da), round(db)
        if abs(da - ia) > tol_cycles or abs(db - ib) > tol_cycles or ia <= 0:
            return None
        gaps_a.append(ia)
        gaps_b.append((ib, db))
    j = reduce(math.gcd, gaps_a)
    ells = [g // j for g in gaps_a]
    k, remainder = divmod(gaps_b[0][0], ells[0])
    if remainder or k <= 0:
        return None
    if any(abs(db - ell * k) > tol_cycles for ell, (_, db) in zip(ells, gaps_b)):
        return None
    return RepeatingDescriptor(
        base_a=a0, base_b=b0, j=j, k=k, ell_range=(0, ells[-1])
    )


def echo_counts(log: Sequence[EventRecord], a: str, b: str) -> list[EchoCount]:
    """Every complete a -> b -> a echo, in order of the original transmission."""
    by_signal = defaultdict(dict)
    replies: dict[int, int] = {}
    for r in log:
        by_signal[r.signal][r.kind] = r
        if r.kind is EventKind.TRANSMIT and r.reply_to is not None:
            replies[r.reply_to] = r.signal
    counts = []
    for signal, events in sorted(by_signal.items()):
        out = events.get(EventKind.TRANSMIT)
        if out is None or out.machine != a or out.counterpart != b:
            continue
        back = replies.get(signal)
        if back is None or EventKind.RECEIVE not in by_signal[back]:
            continue
        home = by_signal[back][EventKind.RECEIVE]
        if home.machine != a:
            continue
        counts.append(EchoCount(value=home.reading.value - out.reading.value))
    return counts


def echo_count(log: Sequence[EventRecord], a: str, b: str) -> EchoCount | None:
    """Cycles counted by a from sending to b until b's immediate echo returns."""
    counts = echo_counts(log, a, b)
    return counts[0] if counts else None


def export_occurrence_graph(log: Sequence[EventRecord]) -> OccurrenceGraph:
    """Occurrence graph with nodes ordered by (machine, t, signal, kind)."""
    nodes = sorted(
        log,
        key=lambda r: (r.machine, r.t, r.signal, 0 if r.kind is EventKind.RECEIVE else 1),
    )
    edges: list[OccurrenceEdge] = []
    transmits, receives = {}, {}
    for i, node in enumerate(nodes):
        (transmits if node.kind is EventKind.TRANSMIT else receives)[node.signal] = i
        if i > 0 and nodes[i - 1].machine == node.machine:
            edges.append(OccurrenceEdge(source=i - 1, target=i, kind="succession"))
    for signal in sorted(transmits):
        if signal in receives:
            edges.append(
                OccurrenceEdge(
                    source=transmits[signal], target=receives[signal], kind="signal"
                )
            )
    edges.sort(key=lambda e: (e.source, e.target, e.kind))
    return OccurrenceGraph(nodes=tuple(nodes), edges=tuple(edges))


def write_channel_csv(ch: Channel, path: Path) -> None:
    """Write a channel with columns m_a, phi_a, m_b, phi_b."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["m_a", "phi_a", "m_b", "phi_b"])
        for m_a, phi_a, m_b, phi_b in ch.rows():
            writer.writerow([m_a, repr(phi_a), m_b, repr(phi_b)])
    logger.debug(f"Wrote {len(ch)} pairs of {ch.source} -> {ch.target} to {path}")
