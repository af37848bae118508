"""Command-line interface.

Subcommands: gen-scenario, run, sweep, plot-data. Exit codes: 0 on success,
2 on a configuration error, 3 when the scenario is infeasible.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigInvalid, GenerationFailed, NoFeasiblePath
from .harness import (METHODS, ScenarioConfig, gen_default_scenario, plot_data,
                      plot_data_to_csv, run, sweep, sweep_from_csv, sweep_to_csv)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aeris",
                                description="Predictive low-altitude network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", help="generate a scenario config document")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--buildings", type=int, default=20)
    g.add_argument("--aircraft", type=int, default=12)
    g.add_argument("--sensitive", type=int, default=5)
    g.add_argument("--sources", type=int, default=3)
    g.add_argument("--destinations", type=int, default=3)
    g.add_argument("--horizon", type=float, default=120.0)
    g.add_argument("--dt", type=float, default=0.1)
    g.add_argument("--load", type=float, default=4.0)
    g.add_argument("--frac-short", type=float, default=0.5)

    r = sub.add_parser("run", help="run one scenario with one method")
    r.add_argument("--config", required=True)
    r.add_argument("--method", required=True)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--events", default=None, help="optional JSON-lines event log")

    s = sub.add_parser("sweep", help="load sweep over methods and seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--loads", required=True, help="comma list, flows per minute")
    s.add_argument("--methods", required=True, help="comma list or 'all'")
    s.add_argument("--seeds", type=int, required=True)
    s.add_argument("--out", required=True)

    d = sub.add_parser("plot-data", help="median + IQR per load/method from a sweep CSV")
    d.add_argument("--in", dest="infile", required=True)
    d.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen-scenario":
            cfg = gen_default_scenario(
                args.seed, n_buildings=args.buildings, n_aircraft=args.aircraft,
                n_sensitive=args.sensitive, n_sources=args.sources,
                n_destinations=args.destinations, horizon_s=args.horizon, dt=args.dt,
                load_per_min=args.load, frac_short_deadline=args.frac_short,
            )
            with open(args.out, "w") as f:
                f.write(cfg.to_json())
        elif args.command == "run":
            with open(args.config) as f:
                cfg = ScenarioConfig.from_json(f.read())
            events = [] if args.events else None
            report = run(cfg, args.method, args.seed, events=events)
            with open(args.out, "w") as f:
                f.write(report.to_json())
            if args.events:
                with open(args.events, "w") as f:
                    for ev in events:
                        f.write(json.dumps(ev, sort_keys=True) + "\n")
        elif args.command == "sweep":
            with open(args.config) as f:
                cfg = ScenarioConfig.from_json(f.read())
            loads = [float(x) for x in args.loads.split(",")]
            methods = list(METHODS) if args.methods == "all" else args.methods.split(",")
            rows = sweep(cfg, loads, methods, args.seeds)
            sweep_to_csv(rows, args.out)
        elif args.command == "plot-data":
            rows = sweep_from_csv(args.infile)
            plot_data_to_csv(plot_data(rows), args.out)
    except (ConfigInvalid, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (GenerationFailed, NoFeasiblePath) as e:
        print(f"infeasible scenario: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
