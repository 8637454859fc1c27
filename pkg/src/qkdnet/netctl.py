"""Network-level control: named switching states, the seamless-switching
policy, the per-pair calibration cache, and derivation of the active QKD
link set over time.

A network groups one or more switching domains (each a fabric plus its
state table and policy) with always-on static links. Links that survive a
state transition keep producing; new pairs come up after a short delay when
their calibration parameters are cached, or after a full calibration when
not.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import fabric as fab
from .photonics import Environment, FiberChannel, ParameterError

SCHEMA = "qkdnet.network/1"

# Establishment delays, seconds. Retrieving cached configuration parameters
# is quick; a cold calibration of half-wave voltages and delay times is not.
T_FAST_S = 2.0
T_CALIBRATE_S = 60.0
DEFAULT_DWELL_S = 1800.0

_DATA_DIR = Path(__file__).parent / "data"


class NetworkFormatError(ValueError):
    """Network definition or link catalog malformed."""


class UnknownStateError(ValueError):
    """A state id that no domain defines."""

    def __init__(self, state_id: str, known: list[str]):
        super().__init__(f"unknown state {state_id!r}; known states: {', '.join(known)}")
        self.state_id = state_id
        self.known = known


class StateMismatchError(RuntimeError):
    """Fabric resolution disagrees with a state's expected link fixture."""


@dataclass(frozen=True)
class DeviceInfo:
    id: str
    node: str
    role: str                        # "transmitter" | "receiver"
    transceiver: str | None = None   # integral devices share a group id
    detector_class: str | None = None


@dataclass(frozen=True)
class NetworkState:
    id: str
    domain: str
    component_settings: dict[str, str]
    expected_links: frozenset[tuple[str, str]]


@dataclass(frozen=True)
class SwitchPolicy:
    mode: str                        # "preemptive" | "automatic"
    pinned_state: str | None = None
    dwell_s: float = DEFAULT_DWELL_S
    cycle: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode == "preemptive":
            if not self.pinned_state:
                raise NetworkFormatError("preemptive policy needs a pinned state")
        elif self.mode == "automatic":
            if self.dwell_s <= 0:
                raise NetworkFormatError(f"dwell must be positive, got {self.dwell_s}")
            if not self.cycle:
                raise NetworkFormatError("automatic policy needs a non-empty cycle")
        else:
            raise NetworkFormatError(f"policy mode must be preemptive|automatic, got {self.mode!r}")


@dataclass(frozen=True)
class Domain:
    name: str
    fabric: fab.OpticalFabric
    states: dict[str, NetworkState]
    policy: SwitchPolicy


@dataclass(frozen=True)
class StaticLink:
    transmitter: str
    receiver: str
    channel: str


@dataclass(frozen=True)
class NetworkDef:
    name: str
    nodes: tuple[str, ...]
    devices: dict[str, DeviceInfo]
    channels: dict[str, FiberChannel]
    domains: tuple[Domain, ...]
    static_links: tuple[StaticLink, ...]

    def domain_of_state(self, state_id: str) -> Domain:
        for dom in self.domains:
            if state_id in dom.states:
                return dom
        raise UnknownStateError(state_id, self.known_states())

    def known_states(self) -> list[str]:
        return [sid for dom in self.domains for sid in dom.states]

    def node_of(self, device_id: str) -> str:
        try:
            return self.devices[device_id].node
        except KeyError:
            raise NetworkFormatError(f"unknown device {device_id!r}") from None

    def is_selfcal(self, transmitter: str, receiver: str) -> bool:
        t, r = self.devices[transmitter], self.devices[receiver]
        return t.transceiver is not None and t.transceiver == r.transceiver


def schedule(policy: SwitchPolicy, horizon_s: float) -> list[tuple[float, str]]:
    """State transitions over [0, horizon): preemptive pins one state at
    t=0, automatic cycles at fixed dwell intervals."""
    if policy.mode == "preemptive":
        return [(0.0, policy.pinned_state)]
    out = []
    t, k = 0.0, 0
    while t < horizon_s:
        out.append((t, policy.cycle[k % len(policy.cycle)]))
        t += policy.dwell_s
        k += 1
    return out


def coverage(network: NetworkDef, state_ids: list[str] | None = None) -> set[tuple[str, str]]:
    """Directed node-level links reachable across the given states
    (default: every state of every domain). Self-calibration loops do not
    count as links."""
    if state_ids is None:
        state_ids = network.known_states()
    links: set[tuple[str, str]] = set()
    for sid in state_ids:
        dom = network.domain_of_state(sid)
        st = dom.states[sid]
        for p in fab.resolve_paths(dom.fabric, st.component_settings):
            if network.is_selfcal(p.transmitter, p.receiver):
                continue
            links.add((network.node_of(p.transmitter), network.node_of(p.receiver)))
    return links


@dataclass
class CalibrationCache:
    """Per-pair configuration parameters with freshness timestamps. Presence
    alone decides hit vs miss; timestamps document freshness in exports."""

    entries: dict[tuple[str, str], float] = field(default_factory=dict)

    def hit(self, pair: tuple[str, str]) -> bool:
        return pair in self.entries

    def touch(self, pair: tuple[str, str], at_time: float) -> None:
        self.entries[pair] = at_time

    def refresh_device(self, device_ids: set[str], at_time: float) -> None:
        for pair in self.entries:
            if pair[0] in device_ids or pair[1] in device_ids:
                self.entries[pair] = at_time


@dataclass(frozen=True)
class ActiveLink:
    """One producing (or establishing) transmitter-to-receiver light path."""

    transmitter: str
    receiver: str
    t_node: str
    r_node: str
    loss_db: float
    channels: tuple[str, ...]
    ready_time: float
    selfcal: bool
    domain: str | None               # None for static links
    state_id: str | None

    @property
    def id(self) -> str:
        return f"{self.transmitter}->{self.receiver}"

    @property
    def pair(self) -> tuple[str, str]:
        return (self.transmitter, self.receiver)

    @property
    def node_pair(self) -> tuple[str, str]:
        return tuple(sorted((self.t_node, self.r_node)))


@dataclass(frozen=True)
class TransitionResult:
    state_id: str
    at_time: float
    links: tuple[ActiveLink, ...]        # QKD links of this domain
    selfcal_loops: tuple[ActiveLink, ...]
    establishment_delays: dict[tuple[str, str], float]  # new pairs only


class NetworkController:
    """Single-owner state machine over a network definition. All mutation
    goes through apply_state; snapshots returned to callers are immutable."""

    def __init__(self, network: NetworkDef, t_fast_s: float = T_FAST_S,
                 t_calibrate_s: float = T_CALIBRATE_S, warm_start: bool = False):
        self.network = network
        self.t_fast_s = t_fast_s
        self.t_calibrate_s = t_calibrate_s
        self.cache = CalibrationCache()
        self.current_state: dict[str, str] = {}
        self._active: dict[str, dict[tuple[str, str], ActiveLink]] = {d.name: {} for d in network.domains}
        self._resolution_cache: dict[tuple[str, str], tuple] = {}
        if warm_start:
            for dom in network.domains:
                for st in dom.states.values():
                    for pair in st.expected_links:
                        self.cache.touch(pair, 0.0)
            for sl in network.static_links:
                self.cache.touch((sl.transmitter, sl.receiver), 0.0)
        self.static_links = tuple(self._make_static(sl) for sl in network.static_links)

    def _make_static(self, sl: StaticLink) -> ActiveLink:
        try:
            channel = self.network.channels[sl.channel]
        except KeyError:
            raise NetworkFormatError(f"static link {sl.transmitter}->{sl.receiver}: "
                                     f"unknown channel {sl.channel!r}") from None
        pair = (sl.transmitter, sl.receiver)
        delay = self.t_fast_s if self.cache.hit(pair) else self.t_calibrate_s
        self.cache.touch(pair, delay)
        return ActiveLink(
            transmitter=sl.transmitter,
            receiver=sl.receiver,
            t_node=self.network.node_of(sl.transmitter),
            r_node=self.network.node_of(sl.receiver),
            loss_db=channel.loss_db,
            channels=(channel.id,),
            ready_time=delay,
            selfcal=False,
            domain=None,
            state_id=None,
        )

    def apply_state(self, state_id: str, at_time: float) -> TransitionResult:
        dom = self.network.domain_of_state(state_id)
        st = dom.states[state_id]
        cache_key = (dom.name, state_id)
        paths = self._resolution_cache.get(cache_key)
        if paths is None:
            # fabric and settings are immutable, so resolution is reusable
            paths = fab.resolve_paths(dom.fabric, st.component_settings)
            self._resolution_cache[cache_key] = paths

        resolved_pairs = {(p.transmitter, p.receiver) for p in paths}
        if st.expected_links and resolved_pairs != set(st.expected_links):
            raise StateMismatchError(
                f"state {state_id}: fabric resolves {sorted(resolved_pairs)} "
                f"but fixture expects {sorted(st.expected_links)}"
            )

        previous = self._active[dom.name]
        links, loops, delays = [], [], {}
        for p in paths:
            pair = (p.transmitter, p.receiver)
            selfcal = self.network.is_selfcal(*pair)
            if pair in previous:
                # surviving link: production continues uninterrupted
                ready = previous[pair].ready_time
            else:
                delay = self.t_fast_s if self.cache.hit(pair) else self.t_calibrate_s
                ready = at_time + delay
                delays[pair] = delay
                self.cache.touch(pair, ready)
            link = ActiveLink(
                transmitter=p.transmitter,
                receiver=p.receiver,
                t_node=self.network.node_of(p.transmitter),
                r_node=self.network.node_of(p.receiver),
                loss_db=p.total_loss_db,
                channels=p.channels,
                ready_time=ready,
                selfcal=selfcal,
                domain=dom.name,
                state_id=state_id,
            )
            (loops if selfcal else links).append(link)
            if selfcal:
                parts = {d.id for d in self.network.devices.values()
                         if d.transceiver and d.transceiver == self.network.devices[p.transmitter].transceiver}
                self.cache.refresh_device(parts, at_time)

        self.current_state[dom.name] = state_id
        self._active[dom.name] = {l.pair: l for l in links + loops}
        return TransitionResult(
            state_id=state_id,
            at_time=at_time,
            links=tuple(links),
            selfcal_loops=tuple(loops),
            establishment_delays=delays,
        )

    def active_links(self, include_selfcal: bool = False) -> list[ActiveLink]:
        out = list(self.static_links)
        for dom_links in self._active.values():
            for link in dom_links.values():
                if link.selfcal and not include_selfcal:
                    continue
                out.append(link)
        return sorted(out, key=lambda l: l.id)


# -- definition files ---------------------------------------------------------

def resolve_data_path(ref: str | Path, base_dir: Path | None = None) -> Path:
    """Locate a referenced file: absolute, then relative to the referencing
    file, then among the bundled fixtures."""
    ref = Path(ref)
    if ref.is_absolute():
        return ref
    if base_dir is not None and (base_dir / ref).exists():
        return base_dir / ref
    if (_DATA_DIR / ref).exists():
        return _DATA_DIR / ref
    return ref


def load_link_catalog(path: Path | str) -> dict[str, FiberChannel]:
    """Read a fiber-link catalog (id, endpoint_a, endpoint_b, length_km,
    loss_db, environment)."""
    path = Path(path)
    if not path.exists():
        raise NetworkFormatError(f"link catalog not found: {path}")
    channels: dict[str, FiberChannel] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "endpoint_a", "endpoint_b", "length_km", "loss_db", "environment"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise NetworkFormatError(f"{path}: header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                channel = FiberChannel(
                    id=row["id"],
                    length_km=float(row["length_km"]),
                    loss_db=float(row["loss_db"]),
                    environment=Environment(row["environment"]),
                )
            except (TypeError, ValueError, ParameterError) as exc:
                raise NetworkFormatError(f"{path}: line {lineno}: {exc}") from exc
            if channel.id in channels:
                raise NetworkFormatError(f"{path}: line {lineno}: duplicate channel id {channel.id!r}")
            channels[channel.id] = channel
    if not channels:
        raise NetworkFormatError(f"{path}: catalog is empty")
    return channels


def load_network(path: Path | str) -> NetworkDef:
    path = Path(path)
    if not path.exists():
        raise NetworkFormatError(f"network definition not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if doc.get("schema") != SCHEMA:
        raise NetworkFormatError(f"{path}: unsupported schema {doc.get('schema')!r}, expected {SCHEMA!r}")
    base = path.parent

    nodes = tuple(doc.get("nodes", ()))
    devices: dict[str, DeviceInfo] = {}
    for dev_id, raw in doc.get("devices", {}).items():
        if raw.get("node") not in nodes:
            raise NetworkFormatError(f"{path}: device {dev_id}: unknown node {raw.get('node')!r}")
        if raw.get("role") not in ("transmitter", "receiver"):
            raise NetworkFormatError(f"{path}: device {dev_id}: role must be transmitter|receiver")
        devices[dev_id] = DeviceInfo(
            id=dev_id,
            node=raw["node"],
            role=raw["role"],
            transceiver=raw.get("transceiver"),
            detector_class=raw.get("detector_class"),
        )

    channels = load_link_catalog(resolve_data_path(doc["channels"], base)) if "channels" in doc else {}

    domains = []
    seen_states: set[str] = set()
    for raw_dom in doc.get("domains", ()):
        fabric = fab.load_fabric(resolve_data_path(raw_dom["fabric"], base))
        states = {}
        for sid, raw_state in raw_dom.get("states", {}).items():
            if sid in seen_states:
                raise NetworkFormatError(f"{path}: duplicate state id {sid!r} across domains")
            seen_states.add(sid)
            states[sid] = NetworkState(
                id=sid,
                domain=raw_dom["name"],
                component_settings=dict(raw_state.get("settings", {})),
                expected_links=frozenset(tuple(p) for p in raw_state.get("expected_links", ())),
            )
        raw_pol = raw_dom.get("policy", {})
        policy = SwitchPolicy(
            mode=raw_pol.get("mode", "automatic"),
            pinned_state=raw_pol.get("state"),
            dwell_s=float(raw_pol.get("dwell_s", DEFAULT_DWELL_S)),
            cycle=tuple(raw_pol.get("cycle", list(states))),
        )
        for sid in policy.cycle:
            if sid not in states:
                raise NetworkFormatError(f"{path}: domain {raw_dom['name']}: cycle references "
                                         f"undefined state {sid!r}")
        domains.append(Domain(name=raw_dom["name"], fabric=fabric, states=states, policy=policy))

    static_links = []
    for raw_link in doc.get("static_links", ()):
        static_links.append(StaticLink(
            transmitter=raw_link["transmitter"],
            receiver=raw_link["receiver"],
            channel=raw_link["channel"],
        ))
        for dev in (raw_link["transmitter"], raw_link["receiver"]):
            if dev not in devices:
                raise NetworkFormatError(f"{path}: static link references unknown device {dev!r}")

    return NetworkDef(
        name=doc.get("name", path.stem),
        nodes=nodes,
        devices=devices,
        channels=channels,
        domains=tuple(domains),
        static_links=tuple(static_links),
    )
