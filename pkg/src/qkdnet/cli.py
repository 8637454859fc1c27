"""Command-line front end.

    qkdnet run     --scenario FILE [--seed N] [--out DIR] [--pin ID] [--report SEL]
    qkdnet pair    --matrix FILE [--objective min_sum|min_max]
    qkdnet state   (--pin ID | --auto) --scenario FILE
    qkdnet report  --timeline FILE [--out DIR] [--report SEL]

Every failure exits nonzero with a single machine-parsable line on stderr
prefixed "qkdnet: error:".
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import keymgmt, netctl, report, simkit

PIN_SCHEMA = "qkdnet.pin/1"


class CliError(Exception):
    pass


def _pin_sidecar(scenario_path: Path) -> Path:
    return scenario_path.with_name(scenario_path.name + ".pin")


def _read_pin(scenario_path: Path) -> str | None:
    sidecar = _pin_sidecar(scenario_path)
    if not sidecar.exists():
        return None
    try:
        doc = json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{sidecar}: invalid JSON: {exc.msg}") from exc
    if doc.get("schema") != PIN_SCHEMA:
        raise CliError(f"{sidecar}: unsupported schema {doc.get('schema')!r}")
    return doc.get("pin")


def _validate_state(scenario_path: Path, state_id: str) -> None:
    scn = simkit.load_scenario(scenario_path)
    known = scn.network.known_states()
    if state_id not in known:
        raise CliError(f"unknown state {state_id!r}; known states: {', '.join(known)}")


def cmd_run(args: argparse.Namespace) -> int:
    scenario_path = Path(args.scenario)
    pin = args.pin if args.pin is not None else _read_pin(scenario_path)
    scenario = simkit.load_scenario(scenario_path, seed_override=args.seed, pin_state=pin)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    timeline = simkit.run(scenario)
    timeline.to_csv(out_dir / "timeline.csv")
    timeline.to_json(out_dir / "timeline.json")
    timeline.write_event_log(out_dir / "events.jsonl")
    artifacts = report.render_report(timeline, out_dir, selection=args.report)

    print(f"scenario {scenario.name} (seed {scenario.seed}, mode {scenario.mode}): "
          f"{len(timeline.t_s)} samples over {scenario.duration_s:.0f} s")
    for path in [out_dir / "timeline.csv", out_dir / "timeline.json", out_dir / "events.jsonl", *artifacts]:
        print(f"  wrote {path}")
    return 0


def cmd_pair(args: argparse.Namespace) -> int:
    matrix = keymgmt.load_pairing_matrix(Path(args.matrix))
    result = keymgmt.best_pairing(matrix, objective=args.objective)
    for t in matrix.transmitters:
        print(f"{t} -> {result.mapping[t]}   ({100 * matrix.qber[(t, result.mapping[t])]:.2f}%)")
    print(f"objective {result.objective}: total {100 * result.total:.2f}%  "
          f"worst pair {100 * result.bottleneck:.2f}%")
    return 0


def cmd_state(args: argparse.Namespace) -> int:
    scenario_path = Path(args.scenario)
    sidecar = _pin_sidecar(scenario_path)
    if args.auto:
        if sidecar.exists():
            sidecar.unlink()
            print(f"restored automatic switching (removed {sidecar})")
        else:
            print("already in automatic switching mode")
        return 0
    _validate_state(scenario_path, args.pin)
    sidecar.write_text(json.dumps({"schema": PIN_SCHEMA, "pin": args.pin}) + "\n", encoding="utf-8")
    print(f"pinned state {args.pin} for runs of {scenario_path} (wrote {sidecar})")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    timeline = simkit.Timeline.from_json(Path(args.timeline))
    out_dir = Path(args.out)
    artifacts = report.render_report(timeline, out_dir, selection=args.report)
    for path in artifacts:
        print(f"  wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdnet",
                                     description="wide-area QKD network simulator and key manager")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and export its timeline and report")
    p_run.add_argument("--scenario", required=True, help="scenario definition file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out", default="out", help="output directory (default: ./out)")
    p_run.add_argument("--pin", default=None, help="force preemptive mode in this state")
    p_run.add_argument("--report", choices=("full", "summary", "none"), default="summary")
    p_run.set_defaults(func=cmd_run)

    p_pair = sub.add_parser("pair", help="compute the optimal device pairing from a symmetry matrix")
    p_pair.add_argument("--matrix", required=True, help="symmetry matrix file")
    p_pair.add_argument("--objective", choices=("min_sum", "min_max"), default="min_sum")
    p_pair.set_defaults(func=cmd_pair)

    p_state = sub.add_parser("state", help="pin or release the network state for future runs")
    group = p_state.add_mutually_exclusive_group(required=True)
    group.add_argument("--pin", help="state id to hold")
    group.add_argument("--auto", action="store_true", help="restore automatic switching")
    p_state.add_argument("--scenario", required=True, help="scenario the pin applies to")
    p_state.set_defaults(func=cmd_state)

    p_rep = sub.add_parser("report", help="regenerate summary and figures from a timeline export")
    p_rep.add_argument("--timeline", required=True, help="timeline .json export")
    p_rep.add_argument("--out", default="out", help="output directory")
    p_rep.add_argument("--report", choices=("full", "summary", "none"), default="summary")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        print(f"qkdnet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
