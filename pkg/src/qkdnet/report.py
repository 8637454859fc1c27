"""Reports over exported timelines: per-link summary tables mirroring the
link-rate table of the deployed network, and time-series figures of QBER and
secure key rate per link. Everything here is derived from the timeline
export alone, so reports can be regenerated without re-running a campaign.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simkit import Timeline


@dataclass(frozen=True)
class LinkSummary:
    link: str
    nodes: str                    # "A->B" when known, "" otherwise
    state: str                    # "-" for always-on links
    samples: int
    producing_fraction: float
    mean_rate_kbps: float         # over producing samples
    mean_qber_signal: float
    mean_qber_decoy: float
    mean_vacuum_yield: float
    produced_megabits: float


def summarize(timeline: Timeline) -> list[LinkSummary]:
    """One row per (link, state) combination, like the published per-state
    rate table."""
    rows: list[LinkSummary] = []
    interval = timeline.sample_interval_s
    link_arr = np.asarray(timeline.link)
    state_arr = np.asarray(timeline.state if timeline.state else ["-"] * len(timeline.link))
    rate_arr = np.asarray(timeline.rate_bps)
    qs_arr = np.asarray(timeline.qber_signal)
    qd_arr = np.asarray(timeline.qber_decoy)
    vac_arr = np.asarray(timeline.vacuum_yield)

    for link_id in sorted(set(timeline.link)):
        sel = link_arr == link_id
        nodes = timeline.link_nodes.get(link_id)
        node_str = f"{nodes[0]}->{nodes[1]}" if nodes else ""
        for state in sorted(set(state_arr[sel])):
            m = sel & (state_arr == state)
            producing = m & (rate_arr > 0)
            n_prod = int(producing.sum())
            rows.append(LinkSummary(
                link=link_id,
                nodes=node_str,
                state=str(state),
                samples=int(m.sum()),
                producing_fraction=n_prod / max(1, int(m.sum())),
                mean_rate_kbps=float(rate_arr[producing].mean() / 1000.0) if n_prod else 0.0,
                mean_qber_signal=float(qs_arr[producing].mean()) if n_prod else 0.0,
                mean_qber_decoy=float(qd_arr[producing].mean()) if n_prod else 0.0,
                mean_vacuum_yield=float(vac_arr[producing].mean()) if n_prod else 0.0,
                produced_megabits=float(rate_arr[m].sum() * interval / 1e6),
            ))
    return rows


def summary_text(timeline: Timeline) -> str:
    rows = summarize(timeline)
    head = (f"campaign {timeline.scenario_name}  mode={timeline.mode}  seed={timeline.seed}\n"
            f"{'link':<10} {'nodes':<14} {'state':<6} {'samples':>8} {'up%':>6} "
            f"{'rate kbps':>10} {'QBER sig%':>10} {'QBER dec%':>10} {'Mbit':>9}\n")
    lines = [head + "-" * 88]
    for r in rows:
        lines.append(
            f"{r.link:<10} {r.nodes:<14} {r.state:<6} {r.samples:>8} "
            f"{100 * r.producing_fraction:>6.1f} {r.mean_rate_kbps:>10.3f} "
            f"{100 * r.mean_qber_signal:>10.2f} {100 * r.mean_qber_decoy:>10.2f} "
            f"{r.produced_megabits:>9.1f}"
        )
    if timeline.sessions:
        lines.append("\nsessions:")
        for s in timeline.sessions:
            lines.append("  " + json.dumps(s, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_summary(timeline: Timeline, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    txt = out_dir / "summary.txt"
    txt.write_text(summary_text(timeline), encoding="utf-8")
    js = out_dir / "summary.json"
    js.write_text(
        json.dumps([r.__dict__ for r in summarize(timeline)], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return [txt, js]


def plot_rates_overview(timeline: Timeline, path: Path) -> Path:
    rows = [r for r in summarize(timeline) if r.mean_rate_kbps > 0]
    labels = [f"{r.link} [{r.state}]" + (f"  {r.nodes}" if r.nodes else "") for r in rows]
    values = [r.mean_rate_kbps for r in rows]
    fig, ax = plt.subplots(figsize=(8, 0.4 * max(6, len(rows)) + 1.2))
    ypos = np.arange(len(rows))
    ax.barh(ypos, values, color="#3572b0")
    ax.set_yticks(ypos)
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("mean secure key rate (kbps)")
    ax.set_title(f"{timeline.scenario_name}: per-link key rates by state")
    ax.set_xscale("log")
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_link_timeseries(timeline: Timeline, link_id: str, path: Path) -> Path:
    s = timeline.series(link_id)
    hours = s["t_s"] / 3600.0
    fig, (ax_q, ax_r) = plt.subplots(2, 1, sharex=True, figsize=(9, 6))
    producing = s["rate_bps"] > 0
    ax_q.plot(hours[producing], 100 * s["qber_signal"][producing], ".", ms=2,
              color="#c0267e", label="signal QBER")
    ax_q.plot(hours[producing], 100 * s["qber_decoy"][producing], ".", ms=2,
              color="#d9a821", label="decoy QBER")
    ax_q.set_ylabel("QBER (%)")
    ax_q.legend(loc="upper left", markerscale=4, fontsize=8)
    ax_q.grid(alpha=0.3)
    ax_v = ax_q.twinx()
    ax_v.plot(hours[producing], s["vacuum_yield"][producing], ".", ms=1.5,
              color="#666666", alpha=0.5, label="vacuum yield")
    ax_v.set_ylabel("vacuum yield", color="#666666")
    ax_r.plot(hours, s["rate_bps"] / 1000.0, ".", ms=2, color="#1f9c8a")
    ax_r.set_ylabel("secure key rate (kbps)")
    ax_r.set_xlabel("time (h)")
    ax_r.grid(alpha=0.3)
    nodes = timeline.link_nodes.get(link_id)
    title = link_id + (f"  ({nodes[0]} to {nodes[1]})" if nodes else "")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_report(timeline: Timeline, out_dir: Path | str, selection: str = "summary") -> list[Path]:
    """Write the summary table plus figures. selection: none (table only),
    summary (overview bars + the always-on links), full (every link)."""
    out_dir = Path(out_dir)
    artifacts = write_summary(timeline, out_dir)
    if selection == "none":
        return artifacts
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    artifacts.append(plot_rates_overview(timeline, fig_dir / "rates_overview.png"))
    if selection == "full":
        chosen = timeline.links()
    else:
        chosen = [l for l in timeline.links()
                  if set(np.asarray(timeline.state)[np.asarray(timeline.link) == l]) == {"-"}]
    for link_id in chosen:
        safe = link_id.replace("->", "_to_")
        artifacts.append(plot_link_timeseries(timeline, link_id, fig_dir / f"timeseries_{safe}.png"))
    return artifacts
