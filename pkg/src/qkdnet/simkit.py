"""Deterministic discrete-event engine.

Advances the network through time: applies the switch schedules of every
domain, computes per-link asymptotic observables, draws the per-sample
statistical realization (Poisson click counts, binomial error counts),
applies environment events, feeds the key pools, drives the application
sessions, and records the full per-link time series.

A Timeline is a pure function of (scenario, seed): identical inputs give
bit-identical exports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import calibration, keymgmt, netctl, photonics as ph

SCHEMA_SCENARIO = "qkdnet.scenario/1"
SCHEMA_TIMELINE = "qkdnet.timeline/1"

EVENT_KINDS = ("fiber_cut", "power_outage", "temp_excursion", "loss_drift", "control_halt")

# Field-mode diurnal loss jitter per fiber environment, dB amplitude.
FIELD_DRIFT_AMPLITUDE_DB = {
    ph.Environment.INTERCITY: 0.5,
    ph.Environment.METRO: 0.3,
    ph.Environment.PATCH: 0.3,
}
FIELD_DRIFT_PERIOD_S = 86400.0

CSV_HEADER = "t_s,link,qber_signal,qber_decoy,vacuum_yield,rate_bps,pool_bits"


class ScenarioError(ValueError):
    """Scenario file malformed or referencing unknown targets."""


@dataclass(frozen=True)
class EnvironmentEvent:
    at_s: float
    kind: str
    target: str                      # channel id, node, or receiver device
    duration_s: float | None = None  # cut/outage/halt windows; open-ended if None
    dark_multiplier: float = 2.0     # temp_excursion
    new_setpoint_c: float | None = None
    amplitude_db: float = 0.0        # loss_drift
    period_s: float = FIELD_DRIFT_PERIOD_S

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioError(f"unknown event kind {self.kind!r}; known: {', '.join(EVENT_KINDS)}")
        if self.kind in ("fiber_cut", "power_outage", "control_halt"):
            if self.duration_s is None or self.duration_s <= 0:
                raise ScenarioError(f"{self.kind} at t={self.at_s}: duration_s must be positive")
        if self.kind == "loss_drift" and self.period_s <= 0:
            raise ScenarioError(f"loss_drift at t={self.at_s}: period_s must be positive")

    @property
    def end_s(self) -> float:
        return math.inf if self.duration_s is None else self.at_s + self.duration_s

    def active_at(self, t: float) -> bool:
        return self.at_s <= t < self.end_s


@dataclass(frozen=True)
class SessionDef:
    id: str
    kind: str                        # otp_realtime | otp_preload | vpn
    pair: tuple[str, str] | None = None
    route: tuple[str, ...] | None = None
    data_rate_bps: float = 0.0
    card_bits: int = 0
    key_size_bits: int = 256
    target_refresh_hz: float | None = None
    start_s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("otp_realtime", "otp_preload", "vpn"):
            raise ScenarioError(f"session {self.id}: unknown kind {self.kind!r}")
        if self.pair is None and self.route is None:
            raise ScenarioError(f"session {self.id}: needs a pair or a route")
        if self.kind == "otp_preload" and self.card_bits <= 0:
            raise ScenarioError(f"session {self.id}: preload needs positive card_bits")


@dataclass(frozen=True)
class Scenario:
    name: str
    network: netctl.NetworkDef
    calibration: calibration.CalibrationFixture
    duration_s: float
    sample_interval_s: float
    seed: int
    mode: str = "field"              # lab | field
    events: tuple[EnvironmentEvent, ...] = ()
    sessions: tuple[SessionDef, ...] = ()
    warm_start: bool = True
    pin_state: str | None = None
    source: ph.SourceConfig = ph.SourceConfig()
    security: ph.SecurityParams = ph.DEFAULT_SECURITY
    e_det_matrix: keymgmt.PairingMatrix | None = None
    e_det_default: float = 0.01

    def __post_init__(self):
        if self.duration_s <= 0 or self.sample_interval_s <= 0:
            raise ScenarioError("duration_s and sample_interval_s must be positive")
        if self.mode not in ("lab", "field"):
            raise ScenarioError(f"mode must be lab|field, got {self.mode!r}")
        if list(self.events) != sorted(self.events, key=lambda e: e.at_s):
            raise ScenarioError("events must be time-sorted")
        self._validate_targets()

    def _validate_targets(self):
        net = self.network
        for ev in self.events:
            if ev.kind in ("fiber_cut", "loss_drift") and ev.target not in net.channels:
                raise ScenarioError(f"{ev.kind} at t={ev.at_s}: unknown channel {ev.target!r}")
            if ev.kind in ("power_outage", "control_halt") and ev.target not in net.nodes:
                raise ScenarioError(f"{ev.kind} at t={ev.at_s}: unknown node {ev.target!r}")
            if ev.kind == "temp_excursion":
                dev = net.devices.get(ev.target)
                if dev is None or dev.role != "receiver":
                    raise ScenarioError(
                        f"temp_excursion at t={ev.at_s}: target {ev.target!r} is not a receiver"
                    )
        for s in self.sessions:
            for node in (s.pair or ()) + (s.route or ()):
                if node not in net.nodes:
                    raise ScenarioError(f"session {s.id}: unknown node {node!r}")


def with_mode(scenario: Scenario, mode: str) -> Scenario:
    """The same campaign in the other test environment."""
    return replace(scenario, mode=mode)


@dataclass
class Timeline:
    """Recorded campaign: per-link samples (columnar), state transitions,
    applied events, session reports, and final pool snapshots."""

    scenario_name: str
    seed: int
    mode: str
    sample_interval_s: float
    t_s: list[float] = field(default_factory=list)
    link: list[str] = field(default_factory=list)
    qber_signal: list[float] = field(default_factory=list)
    qber_decoy: list[float] = field(default_factory=list)
    vacuum_yield: list[float] = field(default_factory=list)
    rate_bps: list[float] = field(default_factory=list)
    pool_bits: list[int] = field(default_factory=list)
    state: list[str] = field(default_factory=list)      # state id, "-" for static links
    transitions: list[tuple[float, str]] = field(default_factory=list)
    events_applied: list[dict] = field(default_factory=list)
    sessions: list[dict] = field(default_factory=list)
    pools_final: list[dict] = field(default_factory=list)
    link_nodes: dict[str, tuple[str, str]] = field(default_factory=dict)

    def links(self) -> list[str]:
        return sorted(set(self.link))

    def series(self, link_id: str) -> dict[str, np.ndarray]:
        idx = [i for i, l in enumerate(self.link) if l == link_id]
        return {
            "t_s": np.array([self.t_s[i] for i in idx]),
            "qber_signal": np.array([self.qber_signal[i] for i in idx]),
            "qber_decoy": np.array([self.qber_decoy[i] for i in idx]),
            "vacuum_yield": np.array([self.vacuum_yield[i] for i in idx]),
            "rate_bps": np.array([self.rate_bps[i] for i in idx]),
            "pool_bits": np.array([self.pool_bits[i] for i in idx]),
            "state": np.array([self.state[i] for i in idx]),
        }

    def to_csv(self, path: Path | str) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for i in range(len(self.t_s)):
                fh.write(
                    f"{self.t_s[i]:.10g},{self.link[i]},{self.qber_signal[i]:.8f},"
                    f"{self.qber_decoy[i]:.8f},{self.vacuum_yield[i]:.6e},"
                    f"{self.rate_bps[i]:.6f},{self.pool_bits[i]}\n"
                )

    def to_json(self, path: Path | str) -> None:
        doc = {
            "schema": SCHEMA_TIMELINE,
            "scenario": self.scenario_name,
            "seed": self.seed,
            "mode": self.mode,
            "sample_interval_s": self.sample_interval_s,
            "samples": {
                "t_s": self.t_s,
                "link": self.link,
                "qber_signal": self.qber_signal,
                "qber_decoy": self.qber_decoy,
                "vacuum_yield": self.vacuum_yield,
                "rate_bps": self.rate_bps,
                "pool_bits": self.pool_bits,
                "state": self.state,
            },
            "transitions": self.transitions,
            "events": self.events_applied,
            "sessions": self.sessions,
            "pools_final": self.pools_final,
            "link_nodes": {k: list(v) for k, v in sorted(self.link_nodes.items())},
        }
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def from_json(cls, path: Path | str) -> "Timeline":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("schema") != SCHEMA_TIMELINE:
            raise ScenarioError(f"{path}: unsupported schema {doc.get('schema')!r}")
        s = doc["samples"]
        tl = cls(
            scenario_name=doc["scenario"],
            seed=doc["seed"],
            mode=doc["mode"],
            sample_interval_s=doc["sample_interval_s"],
            t_s=s["t_s"],
            link=s["link"],
            qber_signal=s["qber_signal"],
            qber_decoy=s["qber_decoy"],
            vacuum_yield=s["vacuum_yield"],
            rate_bps=s["rate_bps"],
            pool_bits=s["pool_bits"],
        )
        tl.state = s.get("state", ["-"] * len(tl.t_s))
        tl.transitions = [tuple(t) for t in doc.get("transitions", [])]
        tl.events_applied = doc.get("events", [])
        tl.sessions = doc.get("sessions", [])
        tl.pools_final = doc.get("pools_final", [])
        tl.link_nodes = {k: tuple(v) for k, v in doc.get("link_nodes", {}).items()}
        return tl

    def write_event_log(self, path: Path | str) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for record in self.events_applied:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class _LinkRuntime:
    """Per-link constants of the hot loop."""

    link: netctl.ActiveLink
    base_eta: float                  # transmittance * eta_det * duty at nominal loss
    y0_dark: float
    y_background: float
    e_det: float
    receiver: str
    node_pair: tuple[str, str]
    direction: tuple[str, str]


class Engine:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        ss = np.random.SeedSequence(scenario.seed)
        child = ss.spawn(3)
        self.noise_rng = np.random.Generator(np.random.PCG64(child[0]))
        self.key_rng = np.random.Generator(np.random.PCG64(child[1]))
        phase_rng = np.random.Generator(np.random.PCG64(child[2]))

        self.controller = netctl.NetworkController(scenario.network, warm_start=scenario.warm_start)
        self.pools = keymgmt.KeyPoolStore(seed=scenario.seed)

        # diurnal jitter phases, one per channel in sorted order
        self.field_phase = {}
        for cid in sorted(scenario.network.channels):
            self.field_phase[cid] = float(phase_rng.uniform(0.0, 2.0 * math.pi))

        self.cut_events = [e for e in scenario.events if e.kind == "fiber_cut"]
        self.outage_events = [e for e in scenario.events if e.kind in ("power_outage", "control_halt")]
        self.temp_events = [e for e in scenario.events if e.kind == "temp_excursion"]
        self.drift_events = [e for e in scenario.events if e.kind == "loss_drift"]

        self._runtime_cache: dict[tuple, _LinkRuntime] = {}

    # -- per-link parameter assembly ------------------------------------

    def _detector_class(self, receiver: str) -> calibration.DetectorClassParams:
        info = self.sc.network.devices[receiver]
        name = info.detector_class or calibration.SINGLE_APD_CLASS
        return self.sc.calibration.detector_class(name)

    def _runtime(self, link: netctl.ActiveLink) -> _LinkRuntime:
        key = (link.transmitter, link.receiver, link.loss_db)
        rt = self._runtime_cache.get(key)
        if rt is not None:
            return rt
        params = self._detector_class(link.receiver)
        e_det = self.sc.e_det_default
        if self.sc.e_det_matrix is not None:
            found = self.sc.e_det_matrix.get(link.transmitter, link.receiver)
            if found is not None:
                e_det = found
        y_background = 0.0
        if self.sc.mode == "field":
            e_det += ph.FIELD_E_DET_INCREMENT
            y_background = ph.FIELD_BACKGROUND_YIELD
        rt = _LinkRuntime(
            link=link,
            base_eta=ph.transmittance(link.loss_db) * params.eta_det * ph.duty_factor(params.apd_count),
            y0_dark=params.y0_dark,
            y_background=y_background,
            e_det=e_det,
            receiver=link.receiver,
            node_pair=link.node_pair,
            direction=(link.t_node, link.r_node),
        )
        self._runtime_cache[key] = rt
        return rt

    # -- environment -----------------------------------------------------

    def _is_dark(self, link: netctl.ActiveLink, t: float) -> bool:
        for ev in self.outage_events:
            if ev.active_at(t) and ev.target in (link.t_node, link.r_node):
                return True
        for ev in self.cut_events:
            if ev.active_at(t) and ev.target in link.channels:
                return True
        return False

    def _dark_multiplier(self, receiver: str, t: float) -> float:
        mult = 1.0
        for ev in self.temp_events:
            if ev.target == receiver and t >= ev.at_s:
                mult *= ev.dark_multiplier
        return mult

    def _drift_db(self, link: netctl.ActiveLink, t: float) -> float:
        drift = 0.0
        if self.sc.mode == "field":
            for cid in link.channels:
                env = self.sc.network.channels[cid].environment
                amp = FIELD_DRIFT_AMPLITUDE_DB[env]
                drift += amp * math.sin(2.0 * math.pi * t / FIELD_DRIFT_PERIOD_S + self.field_phase[cid])
        for ev in self.drift_events:
            if ev.target in link.channels and t >= ev.at_s and t < ev.end_s:
                drift += ev.amplitude_db * math.sin(2.0 * math.pi * (t - ev.at_s) / ev.period_s)
        return drift

    # -- sampling ----------------------------------------------------------

    def _sample_budget(self, rt: _LinkRuntime, t: float) -> ph.LinkBudget | None:
        sc = self.sc
        eta = rt.base_eta * 10.0 ** (self._drift_db(rt.link, t) / 10.0)
        eta = min(eta, 1.0)
        y0 = rt.y0_dark * self._dark_multiplier(rt.receiver, t) + rt.y_background
        src = sc.source
        q_mu = ph.expected_gain(src.mu_signal, eta, y0)
        q_nu = ph.expected_gain(src.nu_decoy, eta, y0)
        e_mu = ph.expected_qber(src.mu_signal, eta, y0, rt.e_det)
        e_nu = ph.expected_qber(src.nu_decoy, eta, y0, rt.e_det)

        pulses = src.pulse_rate_hz * sc.sample_interval_s
        n_sig = pulses * src.signal_fraction
        n_dec = pulses * src.decoy_fraction
        n_vac = pulses * src.vacuum_fraction
        rng = self.noise_rng

        clicks_sig = rng.poisson(q_mu * n_sig)
        clicks_dec = rng.poisson(q_nu * n_dec)
        clicks_vac = rng.poisson(y0 * n_vac)
        err_sig = rng.binomial(clicks_sig, e_mu) if clicks_sig > 0 else 0
        err_dec = rng.binomial(clicks_dec, e_nu) if clicks_dec > 0 else 0

        q_mu_hat = min(clicks_sig / n_sig, 1.0)
        q_nu_hat = min(clicks_dec / n_dec, 1.0)
        y0_hat = clicks_vac / n_vac
        e_mu_hat = min(err_sig / clicks_sig, 0.5) if clicks_sig > 0 else 0.0
        e_nu_hat = min(err_dec / clicks_dec, 0.5) if clicks_dec > 0 else 0.0
        if q_mu_hat <= 0 or q_nu_hat <= 0:
            return None
        # tiny samples can invert the gain ordering; restore physicality
        q_nu_hat = min(q_nu_hat, q_mu_hat)
        y0_hat = min(y0_hat, q_nu_hat)
        return ph.LinkBudget(q_mu=q_mu_hat, q_nu=q_nu_hat, e_mu=e_mu_hat, e_nu=e_nu_hat, y0=y0_hat)

    # -- main loop ---------------------------------------------------------

    def run(self) -> Timeline:
        sc = self.sc
        tl = Timeline(
            scenario_name=sc.name,
            seed=sc.seed,
            mode=sc.mode,
            sample_interval_s=sc.sample_interval_s,
        )
        for ev in sc.events:
            record = {"at_s": ev.at_s, "kind": ev.kind, "target": ev.target}
            if ev.duration_s is not None:
                record["duration_s"] = ev.duration_s
                record["end_s"] = ev.end_s
            if ev.kind == "temp_excursion":
                record["dark_multiplier"] = ev.dark_multiplier
                if ev.new_setpoint_c is not None:
                    record["new_setpoint_c"] = ev.new_setpoint_c
            if ev.kind == "loss_drift":
                record["amplitude_db"] = ev.amplitude_db
                record["period_s"] = ev.period_s
            tl.events_applied.append(record)

        transitions: list[tuple[float, str, str]] = []
        for dom in sc.network.domains:
            policy = dom.policy
            if sc.pin_state is not None:
                # pinning freezes the whole network: the pinned domain holds
                # the requested state, other domains hold their first state
                pinned_dom = sc.network.domain_of_state(sc.pin_state)
                if dom.name == pinned_dom.name:
                    policy = netctl.SwitchPolicy(mode="preemptive", pinned_state=sc.pin_state)
                elif policy.mode != "preemptive":
                    policy = netctl.SwitchPolicy(mode="preemptive", pinned_state=policy.cycle[0])
            for t, sid in netctl.schedule(policy, sc.duration_s):
                transitions.append((t, dom.name, sid))
        transitions.sort(key=lambda x: (x[0], x[1]))

        sessions = [_SessionRuntime(s, self) for s in sc.sessions]

        interval = sc.sample_interval_s
        n_ticks = int(sc.duration_s // interval)
        trans_idx = 0
        active: list[tuple[netctl.ActiveLink, _LinkRuntime]] = []
        links_dirty = True

        for k in range(1, n_ticks + 1):
            t = k * interval
            while trans_idx < len(transitions) and transitions[trans_idx][0] <= t:
                at, _dom, sid = transitions[trans_idx]
                self.controller.apply_state(sid, at)
                tl.transitions.append((at, sid))
                trans_idx += 1
                links_dirty = True
            if links_dirty:
                active = [(l, self._runtime(l)) for l in self.controller.active_links()]
                links_dirty = False

            rows = []
            for link, rt in active:
                state_id = link.state_id or "-"
                if link.id not in tl.link_nodes:
                    tl.link_nodes[link.id] = (link.t_node, link.r_node)
                if t < link.ready_time or self._is_dark(link, t):
                    rows.append((link.id, 0.0, 0.0, 0.0, 0, rt.node_pair, state_id))
                    continue
                budget = self._sample_budget(rt, t)
                if budget is None:
                    rows.append((link.id, 0.0, 0.0, 0.0, 0, rt.node_pair, state_id))
                    continue
                rate = ph.rate_from_budget(budget, sc.source, sc.security)
                bits = int(rate * interval)
                if bits > 0:
                    self.pools.pool(*rt.node_pair).deposit(bits, direction=rt.direction)
                rows.append((link.id, budget.e_mu, budget.e_nu, budget.y0, bits, rt.node_pair, state_id))

            for session in sessions:
                session.tick(t)

            for link_id, e_mu, e_nu, y0, bits, node_pair, state_id in rows:
                tl.t_s.append(t)
                tl.link.append(link_id)
                tl.qber_signal.append(e_mu)
                tl.qber_decoy.append(e_nu)
                tl.vacuum_yield.append(y0)
                tl.rate_bps.append(bits / interval)
                tl.pool_bits.append(self.pools.pool(*node_pair).available_bits)
                tl.state.append(state_id)

        tl.sessions = [s.report() for s in sessions]
        tl.pools_final = self.pools.snapshot()
        return tl


class _SessionRuntime:
    """Aggregate key consumption of one application session during a run."""

    def __init__(self, spec: SessionDef, engine: Engine):
        self.spec = spec
        self.engine = engine
        self.demanded_bits = 0
        self.delivered_bits = 0
        self.stall_ticks = 0
        self.refreshes = 0
        self.preload_done_at: float | None = None

    def _route(self) -> keymgmt.RelayRoute | None:
        if self.spec.route:
            return keymgmt.RelayRoute(tuple(self.spec.route))
        return None

    def _pool(self) -> keymgmt.KeyPool:
        return self.engine.pools.pool(*self.spec.pair)

    def tick(self, t: float) -> None:
        if t < self.spec.start_s:
            return
        spec, interval = self.spec, self.engine.sc.sample_interval_s
        if spec.kind == "otp_realtime":
            demand = int(spec.data_rate_bps * interval)
            self.demanded_bits += demand
            pool = self._pool()
            take = min(demand, pool.available_bits)
            if take > 0:
                pool.consume(take)
                self.delivered_bits += take
            if take < demand:
                self.stall_ticks += 1
        elif spec.kind == "vpn":
            route = self._route()
            if route is not None:
                capacity = min(self.engine.pools.pool(*hop).available_bits for hop in route.hops)
            else:
                capacity = self._pool().available_bits
            n_keys = capacity // spec.key_size_bits
            if spec.target_refresh_hz is not None:
                wanted = int(spec.target_refresh_hz * interval)
                n_keys = min(n_keys, wanted)
            else:
                wanted = n_keys
            self.demanded_bits += wanted * spec.key_size_bits
            if n_keys > 0:
                n_bits = n_keys * spec.key_size_bits
                if route is not None:
                    keymgmt.relay_consume(route, self.engine.pools, n_bits)
                else:
                    self._pool().consume(n_bits)
                self.delivered_bits += n_bits
                self.refreshes += n_keys
            elif spec.target_refresh_hz:
                self.stall_ticks += 1
        elif spec.kind == "otp_preload" and self.preload_done_at is None:
            self.demanded_bits = spec.card_bits
            route = self._route()
            try:
                if route is not None:
                    keymgmt.relay_consume(route, self.engine.pools, spec.card_bits)
                else:
                    self._pool().consume(spec.card_bits)
            except keymgmt.InsufficientKeyError:
                self.stall_ticks += 1
                return
            self.delivered_bits = spec.card_bits
            self.preload_done_at = t

    def report(self) -> dict:
        out = {
            "id": self.spec.id,
            "kind": self.spec.kind,
            "demanded_bits": self.demanded_bits,
            "delivered_bits": self.delivered_bits,
            "stall_ticks": self.stall_ticks,
        }
        if self.spec.kind == "vpn":
            out["refreshes"] = self.refreshes
        if self.spec.kind == "otp_preload":
            out["filled_at_s"] = self.preload_done_at
        if self.spec.route:
            out["route"] = list(self.spec.route)
        if self.spec.pair:
            out["pair"] = list(self.spec.pair)
        return out


def run(scenario: Scenario) -> Timeline:
    """Execute one campaign."""
    return Engine(scenario).run()


@dataclass(frozen=True)
class LinkDelta:
    link: str
    qber_signal_lab: float
    qber_signal_field: float
    rate_lab_bps: float
    rate_field_bps: float

    @property
    def qber_signal_delta(self) -> float:
        return self.qber_signal_field - self.qber_signal_lab

    @property
    def rate_drop_fraction(self) -> float:
        if self.rate_lab_bps == 0:
            return 0.0
        return (self.rate_lab_bps - self.rate_field_bps) / self.rate_lab_bps


def compare_modes(scenario_lab: Scenario, scenario_field: Scenario) -> dict[str, LinkDelta]:
    """Run both campaigns and report per-link mean QBER and rate deltas.
    The scenarios must be identical apart from the mode flags."""
    if scenario_lab.mode == scenario_field.mode:
        lab_tl, field_tl = run(scenario_lab), run(scenario_field)
        return _deltas(lab_tl, field_tl)  # zero deltas by construction
    if with_mode(scenario_lab, "x") != with_mode(scenario_field, "x"):
        raise ScenarioError("compare_modes needs scenarios identical except mode")
    return _deltas(run(scenario_lab), run(scenario_field))


def _deltas(lab: Timeline, field: Timeline) -> dict[str, LinkDelta]:
    out = {}
    for link_id in sorted(set(lab.links()) & set(field.links())):
        a, b = lab.series(link_id), field.series(link_id)
        mask_a, mask_b = a["rate_bps"] > 0, b["rate_bps"] > 0
        if not mask_a.any() or not mask_b.any():
            continue
        out[link_id] = LinkDelta(
            link=link_id,
            qber_signal_lab=float(a["qber_signal"][mask_a].mean()),
            qber_signal_field=float(b["qber_signal"][mask_b].mean()),
            rate_lab_bps=float(a["rate_bps"][mask_a].mean()),
            rate_field_bps=float(b["rate_bps"][mask_b].mean()),
        )
    return out


# -- scenario files -----------------------------------------------------------

def load_scenario(path: Path | str, seed_override: int | None = None,
                  pin_state: str | None = None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if doc.get("schema") != SCHEMA_SCENARIO:
        raise ScenarioError(f"{path}: unsupported schema {doc.get('schema')!r}, expected {SCHEMA_SCENARIO!r}")
    base = path.parent

    network = netctl.load_network(netctl.resolve_data_path(doc["network"], base))
    fixture = calibration.load_calibration(
        netctl.resolve_data_path(doc["calibration"], base) if "calibration" in doc else None
    )
    matrix = None
    if "e_det_matrix" in doc:
        matrix = keymgmt.load_pairing_matrix(netctl.resolve_data_path(doc["e_det_matrix"], base))

    events = tuple(
        EnvironmentEvent(
            at_s=float(raw["at_s"]),
            kind=raw["kind"],
            target=raw["target"],
            duration_s=float(raw["duration_s"]) if "duration_s" in raw else None,
            dark_multiplier=float(raw.get("dark_multiplier", 2.0)),
            new_setpoint_c=raw.get("new_setpoint_c"),
            amplitude_db=float(raw.get("amplitude_db", 0.0)),
            period_s=float(raw.get("period_s", FIELD_DRIFT_PERIOD_S)),
        )
        for raw in doc.get("events", ())
    )
    sessions = tuple(
        SessionDef(
            id=raw["id"],
            kind=raw["kind"],
            pair=tuple(raw["pair"]) if "pair" in raw else None,
            route=tuple(raw["route"]) if "route" in raw else None,
            data_rate_bps=float(raw.get("data_rate_bps", 0.0)),
            card_bits=int(raw.get("card_bits", 0)),
            key_size_bits=int(raw.get("key_size_bits", 256)),
            target_refresh_hz=raw.get("target_refresh_hz"),
            start_s=float(raw.get("start_s", 0.0)),
        )
        for raw in doc.get("sessions", ())
    )

    source = ph.SourceConfig(**doc["source"]) if "source" in doc else ph.SourceConfig()
    security = ph.SecurityParams(**doc["security"]) if "security" in doc else ph.DEFAULT_SECURITY

    return Scenario(
        name=doc.get("name", path.stem),
        network=network,
        calibration=fixture,
        duration_s=float(doc["duration_s"]),
        sample_interval_s=float(doc.get("sample_interval_s", 300.0)),
        seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
        mode=doc.get("mode", "field"),
        events=events,
        sessions=sessions,
        warm_start=bool(doc.get("warm_start", True)),
        pin_state=pin_state if pin_state is not None else doc.get("pin_state"),
        source=source,
        security=security,
        e_det_matrix=matrix,
    )
