"""Optical switching fabric: passive and active components as a wiring graph,
and resolution of the directed transmitter-to-receiver light paths implied by
a set of component states.

Light propagation rules per component kind:

* ``circulator3``   -- strictly directional, cyclic p1->p2->p3->p1.
* ``switch_1x2``    -- bidirectional; the state names which branch port is
                       connected to ``common`` (the other branch is dark).
* ``switch_2x2``    -- bidirectional crossbar over ports a1,a2,b1,b2;
                       ``bar`` pairs a1-b1/a2-b2, ``cross`` pairs a1-b2/a2-b1.
* ``switch_1xN``    -- like switch_1x2 with branches b1..bN.
* ``splitter_1xN``  -- passive fan-out; every common<->branch pass costs
                       -10*lg(N) dB.
* ``terminal``      -- a device port (transmitter output or receiver input).

Fabrics and states are immutable values; resolution is a pure function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA = "qkdnet.fabric/1"

# Typical telecom insertion losses, dB per pass. Per-component overrides in
# the fabric file take precedence; measured span losses always live on the
# segments, so these defaults only shape synthetic budgets.
DEFAULT_INSERTION_LOSS_DB = {
    "circulator3": -0.8,
    "switch_1x2": -0.6,
    "switch_2x2": -0.6,
    "switch_1xN": -0.6,
    "terminal": 0.0,
}

KINDS_WITH_STATE = {"switch_1x2", "switch_2x2", "switch_1xN"}


class FabricFormatError(ValueError):
    """Fabric definition file malformed or inconsistent."""


class FabricConflictError(RuntimeError):
    """Component states create a physically meaningless path set."""


class MissingStateError(ValueError):
    """A switch was left without a state at resolve time."""


def splitter_loss(n_branches: int) -> float:
    """Per-branch insertion loss of a passive 1xN splitter, in dB."""
    if n_branches < 1:
        raise ValueError(f"splitter needs at least 1 branch, got {n_branches}")
    return -10.0 * math.log10(n_branches)


def rtfm_capacity(n_wavelengths: int) -> int:
    """Node capacity of a wavelength-saving real-time full-mesh router."""
    if n_wavelengths < 0:
        raise ValueError(f"wavelength count must be >= 0, got {n_wavelengths}")
    return 2 * n_wavelengths + 1


def fmos_simultaneous_limit(n_ports: int) -> int:
    """Simultaneously keyed node pairs of a time-division full-mesh switch
    with n_ports = N+1 ports."""
    if n_ports < 2:
        raise ValueError(f"FMOS needs at least 2 ports, got {n_ports}")
    return n_ports // 2


@dataclass(frozen=True)
class OpticalComponent:
    id: str
    kind: str
    n_branches: int = 2              # switch_1xN / splitter_1xN only
    insertion_loss_db: float | None = None
    device: str | None = None        # terminal: bound device id
    role: str | None = None          # terminal: "transmitter" | "receiver"

    def ports(self) -> tuple[str, ...]:
        if self.kind == "circulator3":
            return ("p1", "p2", "p3")
        if self.kind == "switch_2x2":
            return ("a1", "a2", "b1", "b2")
        if self.kind in ("switch_1x2", "switch_1xN", "splitter_1xN"):
            n = 2 if self.kind == "switch_1x2" else self.n_branches
            return ("common",) + tuple(f"b{i}" for i in range(1, n + 1))
        if self.kind == "terminal":
            return ("port",)
        raise FabricFormatError(f"component {self.id}: unknown kind {self.kind!r}")

    def loss_db(self) -> float:
        if self.insertion_loss_db is not None:
            return self.insertion_loss_db
        if self.kind == "splitter_1xN":
            return splitter_loss(self.n_branches)
        return DEFAULT_INSERTION_LOSS_DB[self.kind]

    def forward(self, in_port: str, state: str | None) -> tuple[str, ...]:
        """Exit ports for light entering at in_port under the given state.
        An empty tuple means the light is blocked or absorbed."""
        if self.kind == "terminal":
            return ()
        if self.kind == "circulator3":
            return {"p1": ("p2",), "p2": ("p3",), "p3": ("p1",)}[in_port]
        if self.kind == "switch_2x2":
            pairing = {"bar": {"a1": "b1", "b1": "a1", "a2": "b2", "b2": "a2"},
                       "cross": {"a1": "b2", "b2": "a1", "a2": "b1", "b1": "a2"}}
            if state not in pairing:
                raise MissingStateError(f"switch {self.id}: state must be bar|cross, got {state!r}")
            return (pairing[state][in_port],)
        if self.kind in ("switch_1x2", "switch_1xN"):
            if state not in self.ports()[1:]:
                raise MissingStateError(
                    f"switch {self.id}: state must name a branch port {self.ports()[1:]}, got {state!r}"
                )
            if in_port == "common":
                return (state,)
            return ("common",) if in_port == state else ()
        if self.kind == "splitter_1xN":
            if in_port == "common":
                return tuple(p for p in self.ports() if p != "common")
            return ("common",)
        raise FabricFormatError(f"component {self.id}: unknown kind {self.kind!r}")

    def reverse(self, out_port: str, state: str | None) -> tuple[str, ...]:
        """Entry ports whose light exits at out_port (forward inverted)."""
        return tuple(p for p in self.ports() if out_port in self.forward(p, state))


@dataclass(frozen=True)
class Segment:
    """Undirected port-to-port fiber edge. channel, when set, names the
    physical span in the link catalog, which environment events target."""

    a: tuple[str, str]               # (component id, port)
    b: tuple[str, str]
    loss_db: float = 0.0
    channel: str | None = None

    def other_end(self, end: tuple[str, str]) -> tuple[str, str]:
        return self.b if end == self.a else self.a

    @property
    def id(self) -> str:
        if self.channel:
            return self.channel
        return f"{self.a[0]}:{self.a[1]}--{self.b[0]}:{self.b[1]}"


@dataclass(frozen=True)
class ResolvedPath:
    transmitter: str                 # device id
    receiver: str
    hops: tuple[str, ...]            # segment ids, in traversal order
    channels: tuple[str, ...]        # physical spans traversed (deduplicated)
    total_loss_db: float


@dataclass(frozen=True)
class OpticalFabric:
    components: dict[str, OpticalComponent] = field(default_factory=dict)
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        by_port: dict[tuple[str, str], Segment] = {}
        for seg in self.segments:
            for end in (seg.a, seg.b):
                comp = self.components.get(end[0])
                if comp is None:
                    raise FabricFormatError(f"segment {seg.id}: unknown component {end[0]!r}")
                if end[1] not in comp.ports():
                    raise FabricFormatError(
                        f"segment {seg.id}: component {end[0]} has no port {end[1]!r} "
                        f"(ports: {', '.join(comp.ports())})"
                    )
                if end in by_port:
                    raise FabricFormatError(
                        f"segment {seg.id}: port {end[0]}:{end[1]} already used by {by_port[end].id}"
                    )
                by_port[end] = seg
        object.__setattr__(self, "_segment_by_port", by_port)

    def segment_at(self, component_id: str, port: str) -> Segment | None:
        return self._segment_by_port.get((component_id, port))

    def terminals(self, role: str) -> list[OpticalComponent]:
        return sorted(
            (c for c in self.components.values() if c.kind == "terminal" and c.role == role),
            key=lambda c: c.id,
        )

    def switch_ids(self) -> list[str]:
        return sorted(c.id for c in self.components.values() if c.kind in KINDS_WITH_STATE)


def _trace(fabric: OpticalFabric, states: dict[str, str],
           start: OpticalComponent) -> list[tuple[OpticalComponent, list[Segment], list[str]]]:
    """Follow light from one transmitter terminal to every terminal it can
    reach. Returns (terminal, traversed segments, component passes) per
    arrival. Branching happens only at splitters; a revisited
    (component, port) ends that branch (looping light never forms a usable
    link)."""
    arrivals: list[tuple[OpticalComponent, list[Segment], list[str]]] = []
    seg0 = fabric.segment_at(start.id, "port")
    if seg0 is None:
        return arrivals
    stack = [((start.id, "port"), [seg0], [], {(start.id, "port")})]
    while stack:
        end, segs, passes, seen = stack.pop()
        seg = segs[-1]
        comp_id, in_port = seg.other_end(end)
        comp = fabric.components[comp_id]
        if (comp_id, in_port) in seen:
            continue
        seen = seen | {(comp_id, in_port)}
        if comp.kind == "terminal":
            arrivals.append((comp, segs, passes))
            continue
        for out_port in comp.forward(in_port, states.get(comp_id)):
            nxt = fabric.segment_at(comp_id, out_port)
            if nxt is None:
                continue
            stack.append(((comp_id, out_port), segs + [nxt], passes + [comp_id], seen))
    return arrivals


def _path_loss(fabric: OpticalFabric, segs: list[Segment], passes: list[str]) -> float:
    return sum(s.loss_db for s in segs) + sum(fabric.components[c].loss_db() for c in passes)


def resolve_paths(fabric: OpticalFabric, component_states: dict[str, str]) -> tuple[ResolvedPath, ...]:
    """All transmitter-to-receiver paths permitted by the component states.

    Raises FabricConflictError if light from a transmitter reaches another
    transmitter, if a receiver is optically reachable from another receiver,
    or if any device would take part in two simultaneous paths.
    """
    missing = [sid for sid in fabric.switch_ids() if sid not in component_states]
    if missing:
        raise MissingStateError(f"no state provided for switches: {', '.join(missing)}")

    paths: list[ResolvedPath] = []
    for tx in fabric.terminals("transmitter"):
        for terminal, segs, passes in _trace(fabric, component_states, tx):
            if terminal.role != "receiver":
                raise FabricConflictError(
                    f"light from transmitter {tx.device} reaches terminal {terminal.id} "
                    f"of role {terminal.role!r}"
                )
            channels: list[str] = []
            for s in segs:
                if s.channel and s.channel not in channels:
                    channels.append(s.channel)
            paths.append(ResolvedPath(
                transmitter=tx.device,
                receiver=terminal.device,
                hops=tuple(s.id for s in segs),
                channels=tuple(channels),
                total_loss_db=_path_loss(fabric, segs, passes),
            ))

    for role, key in (("transmitter", lambda p: p.transmitter), ("receiver", lambda p: p.receiver)):
        seen: dict[str, ResolvedPath] = {}
        for p in paths:
            if key(p) in seen:
                raise FabricConflictError(
                    f"{role} {key(p)} appears in two simultaneous paths "
                    f"({seen[key(p)].transmitter}->{seen[key(p)].receiver} and {p.transmitter}->{p.receiver})"
                )
            seen[key(p)] = p

    _check_receiver_isolation(fabric, component_states)
    return tuple(sorted(paths, key=lambda p: p.transmitter))


def _check_receiver_isolation(fabric: OpticalFabric, states: dict[str, str]) -> None:
    """Lint for receiver-to-receiver wiring: walking the light direction
    backwards from a receiver must never land on another receiver."""
    for rx in fabric.terminals("receiver"):
        seg0 = fabric.segment_at(rx.id, "port")
        if seg0 is None:
            continue
        stack = [((rx.id, "port"), seg0)]
        seen = set()
        while stack:
            end, seg = stack.pop()
            comp_id, out_port = seg.other_end(end)
            if (comp_id, out_port) in seen:
                continue
            seen.add((comp_id, out_port))
            comp = fabric.components[comp_id]
            if comp.kind == "terminal":
                if comp.role == "receiver" and comp.id != rx.id:
                    raise FabricConflictError(
                        f"receivers {rx.device} and {comp.device} are wired into the same light path"
                    )
                continue
            for in_port in comp.reverse(out_port, states.get(comp_id)):
                nxt = fabric.segment_at(comp_id, in_port)
                if nxt is not None:
                    stack.append(((comp_id, in_port), nxt))


# -- fabric definition files -------------------------------------------------

def _err(path, where, msg, text=None, needle=None):
    line = ""
    if text is not None and needle is not None:
        for n, raw in enumerate(text.splitlines(), start=1):
            if needle in raw:
                line = f" (line {n})"
                break
    return FabricFormatError(f"{path}: {where}{line}: {msg}")


def load_fabric(path: Path | str) -> OpticalFabric:
    """Load and validate a fabric definition file."""
    path = Path(path)
    if not path.exists():
        raise FabricFormatError(f"fabric file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FabricFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if doc.get("schema") != SCHEMA:
        raise FabricFormatError(f"{path}: unsupported schema {doc.get('schema')!r}, expected {SCHEMA!r}")

    components: dict[str, OpticalComponent] = {}
    for i, raw in enumerate(doc.get("components", [])):
        cid = raw.get("id")
        if not cid:
            raise _err(path, f"components[{i}]", "missing id")
        if cid in components:
            raise _err(path, f"components[{i}]", f"duplicate component id {cid!r}", text, f'"{cid}"')
        kind = raw.get("kind")
        if kind not in DEFAULT_INSERTION_LOSS_DB and kind != "splitter_1xN":
            raise _err(path, f"component {cid!r}", f"unknown kind {kind!r}", text, f'"{cid}"')
        if kind == "terminal" and raw.get("role") not in ("transmitter", "receiver"):
            raise _err(path, f"component {cid!r}", "terminal role must be transmitter|receiver",
                       text, f'"{cid}"')
        components[cid] = OpticalComponent(
            id=cid,
            kind=kind,
            n_branches=int(raw.get("n_branches", 2)),
            insertion_loss_db=raw.get("insertion_loss_db"),
            device=raw.get("device"),
            role=raw.get("role"),
        )

    segments = []
    for i, raw in enumerate(doc.get("segments", [])):
        try:
            a_comp, a_port = raw["a"].split(":")
            b_comp, b_port = raw["b"].split(":")
        except (KeyError, ValueError, AttributeError):
            raise _err(path, f"segments[{i}]", "endpoints must be 'component:port' strings",
                       text, str(raw.get("a", ""))) from None
        segments.append(Segment(
            a=(a_comp, a_port),
            b=(b_comp, b_port),
            loss_db=float(raw.get("loss_db", 0.0)),
            channel=raw.get("channel"),
        ))

    try:
        return OpticalFabric(components=components, segments=tuple(segments))
    except FabricFormatError as exc:
        raise FabricFormatError(f"{path}: {exc}") from exc
