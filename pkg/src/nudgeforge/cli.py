"""Command line entry points: serve, replay, report, simulate."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import NudgeforgeError
from .kvtext import load_kv
from .platform import Platform
from .sim import ScenarioConfig, run_scenario


def _load_platform(data_dir: str) -> Platform:
    path = Path(data_dir)
    if (path / "events").exists():
        return Platform.open(path)
    return Platform(data_dir=path)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    fields = load_kv(Path(args.config).read_text(encoding="utf-8"))
    host = fields.get("host", "127.0.0.1")
    port = int(fields.get("port", "8000"))
    token = fields.get("api_token") or None
    platform = _load_platform(args.data_dir)
    app = create_app(platform, api_token=token)
    print(f"serving on {host}:{port} (data_dir={args.data_dir})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    platform = Platform.open(args.data_dir)
    devices = sorted(platform.log.devices)
    total = sum(platform.log.watermark(d) for d in devices)
    print(f"devices: {len(devices)}")
    print(f"events: {total}")
    for info in platform.list_experiments():
        print(f"experiment: {info['experiment_id']} ({info['status']})")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    platform = Platform.open(args.data_dir)
    runtime = platform.runtime(args.experiment)
    exp = runtime.experiment
    print(f"experiment: {exp.experiment_id}")
    print(f"status: {exp.status}")
    print(f"arms: {', '.join(exp.arm_ids)}")
    print(f"days: {exp.start_day}..{exp.end_day} every {exp.cadence_days}")
    ticked = [r["day"] for r in platform.tick_reports(args.experiment)]
    for report in platform.tick_reports(args.experiment):
        print(
            f"tick day {report['day']}: "
            f"{len(report['decisions'])} nudged, {len(report['skipped'])} skipped"
        )
    if ticked:
        for est in platform.monitor(args.experiment, exp.start_day, max(ticked)):
            band = (
                f" ci=[{est.ci_low:.2f}, {est.ci_high:.2f}]"
                if est.has_ci
                else ""
            )
            print(
                f"day {est.day}: diff={est.diff:.2f}{band} "
                f"n={est.n_t}/{est.n_c} interactions={est.interactions}"
            )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = ScenarioConfig.from_kv(Path(args.scenario).read_text(encoding="utf-8"))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.days is not None:
        overrides["days"] = args.days
    if overrides:
        config = dataclasses.replace(config, **overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = run_scenario(config, data_dir=out / "platform")
    estimates = run.platform.monitor(
        run.experiment_id, config.warmup_days, config.total_days - 1
    )
    (out / "scenario.kv").write_text(config.to_kv(), encoding="utf-8")
    (out / "ticks.json").write_text(
        json.dumps([r.to_json() for r in run.reports], indent=1, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    monitor_payload = {
        "experiment_id": run.experiment_id,
        "from_day": config.warmup_days,
        "to_day": config.total_days - 1,
        "estimates": [est.to_json() for est in estimates],
    }
    (out / "monitor.json").write_text(
        json.dumps(monitor_payload, indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (out / "truth.csv").write_text(run.truth.to_csv(), encoding="utf-8")
    print(f"simulated {config.total_days} days for {config.n_pharmacies} pharmacies")
    print(f"ticks: {len(run.reports)}  estimates: {len(estimates)}")
    print(f"artifacts in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nudgeforge")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--config", required=True)
    serve.add_argument("--data-dir", required=True)
    serve.set_defaults(func=cmd_serve)

    replay = sub.add_parser("replay", help="rebuild state from segments and summarize")
    replay.add_argument("--data-dir", required=True)
    replay.set_defaults(func=cmd_replay)

    report = sub.add_parser("report", help="print experiment status and estimates")
    report.add_argument("--experiment", required=True)
    report.add_argument("--data-dir", required=True)
    report.set_defaults(func=cmd_report)

    simulate = sub.add_parser("simulate", help="run a scenario and emit artifacts")
    simulate.add_argument("--scenario", required=True)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--days", type=int)
    simulate.add_argument("--out", required=True)
    simulate.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NudgeforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
