"""Command-line front end.

Subcommands::

    generate    write a synthetic scenario (network, demand, history) to a directory
    fit-demand  fit the per-cluster demand histograms from history files
    run         simulate one variant on a scenario and write reports
    compare     run several variants x seeds and print a fixed-format table
    oracle      run the brute-force solver cross-checks

Configuration is a flat ``key = value`` file (``#`` comments) shared by all
subcommands, with ``--set key=value`` taking precedence.  Exit codes: 0 on
success, 2 for configuration problems, 3 for malformed data files, 4 for
internal inconsistencies (including oracle failures).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

from .errors import ConfigError, DataError, InternalError, RouteError
from .network import load_network_files
from .rebalance import build_clusters, fit_demand, load_demand_model, save_demand_model
from .scenario import (DemandSpec, generate_history, generate_requests,
                       grid_network, load_requests, save_network_files,
                       save_requests)
from .sim import _SEED_KMEANS, RunReport, SimConfig, run

_OPT_INT, _OPT_FLOAT, _OPT_STR = "opt_int", "opt_float", "opt_str"

_KEY_TYPES = {
    # simulation
    "n_vehicles": int, "capacity": int, "seed": int, "gamma": int,
    "v_max": int, "r_max": int, "lookahead_bins": int,
    "epoch_s": float, "omega_s": float, "delta_s": float,
    "alpha_miles": float, "p_min": float,
    "variant": str, "suppression_mode": str,
    "rtv_budget": _OPT_INT, "ip_budget": _OPT_INT, "partition_k": _OPT_INT,
    "rebalance_formulation": _OPT_STR, "unserved_penalty": _OPT_FLOAT,
    "weight_by_probability": bool,
    # scenario shape
    "rows": int, "cols": int, "rate_per_epoch": float, "n_epochs": int,
    "hotspot_period_s": float, "hotspot_weight": float,
    "edge_seconds": float, "block_miles": float,
    # front-end extras
    "history_days": int, "bin_seconds": float, "seeds": int, "variants": str,
}

_SIM_FIELDS = {f.name for f in dataclasses.fields(SimConfig)}
_SPEC_FIELDS = {f.name for f in dataclasses.fields(DemandSpec)}


def _coerce(key: str, raw: str):
    kind = _KEY_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if kind in (_OPT_INT, _OPT_FLOAT, _OPT_STR):
        if raw.lower() in ("none", ""):
            return None
        kind = {_OPT_INT: int, _OPT_FLOAT: float, _OPT_STR: str}[kind]
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _read_config_file(path: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            k, v = text.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _settings(args) -> Dict[str, object]:
    """Merge config file and --set overrides into one typed dict."""
    raw: Dict[str, str] = {}
    if getattr(args, "config", None):
        raw.update(_read_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    return {k: _coerce(k, v) for k, v in raw.items()}


def _sim_config(cfg: Dict[str, object]) -> SimConfig:
    config = SimConfig(**{k: v for k, v in cfg.items() if k in _SIM_FIELDS})
    config.validate()
    return config


def _demand_spec(cfg: Dict[str, object]) -> DemandSpec:
    d = {k: v for k, v in cfg.items() if k in _SPEC_FIELDS}
    d.setdefault("rows", 15)
    d.setdefault("cols", 15)
    spec = DemandSpec(**d)
    spec.validate()
    return spec


def _build_grid(cfg: Dict[str, object]):
    return grid_network(
        int(cfg.get("rows", 15)), int(cfg.get("cols", 15)),
        edge_seconds=float(cfg.get("edge_seconds", 60.0)),
        block_miles=float(cfg.get("block_miles", 0.25)),
    )


# ----------------------------------------------------------------- generate

def _cmd_generate(args) -> int:
    cfg = _settings(args)
    net = _build_grid(cfg)
    spec = _demand_spec(cfg)
    seed = int(cfg.get("seed", 0))
    os.makedirs(args.out, exist_ok=True)

    save_network_files(net, os.path.join(args.out, "nodes.csv"),
                       os.path.join(args.out, "edges.csv"))
    demand = generate_requests(net, spec, seed)
    save_requests(demand, os.path.join(args.out, "demand.csv"))
    print(f"nodes.csv: {net.n_nodes} nodes")
    print(f"edges.csv: {len(net.edges)} edges")
    print(f"demand.csv: {len(demand)} requests")

    days = int(cfg.get("history_days", 0))
    for day, reqs in enumerate(generate_history(net, spec, days, seed)):
        name = f"history_{day:02d}.csv"
        save_requests(reqs, os.path.join(args.out, name))
        print(f"{name}: {len(reqs)} requests")
    return 0


# --------------------------------------------------------------- fit-demand

def _load_scenario_network(path: str):
    return load_network_files(os.path.join(path, "nodes.csv"),
                              os.path.join(path, "edges.csv"))


def _cmd_fit_demand(args) -> int:
    cfg = _settings(args)
    net = _load_scenario_network(args.network)
    seed = int(cfg.get("seed", 0))
    clusters = build_clusters(net, float(cfg.get("alpha_miles", 0.5)),
                              seed=seed * 1000003 + _SEED_KMEANS)
    days = [load_requests(p, net) for p in args.history]
    model = fit_demand(days, clusters, float(cfg.get("bin_seconds", 300.0)))
    save_demand_model(model, args.out)
    print(f"{args.out}: {clusters.k} clusters, {len(model.dists)} histograms "
          f"from {len(days)} days")
    return 0


# ---------------------------------------------------------------------- run

def _prepare_forecast(config: SimConfig, net, args):
    """Clusters plus either a saved model or raw history, per the variant."""
    if not config.use_virtuals:
        return None, None, None
    clusters = build_clusters(net, config.alpha_miles,
                              seed=config.seed * 1000003 + _SEED_KMEANS)
    if getattr(args, "model", None):
        return clusters, load_demand_model(args.model), None
    if getattr(args, "history", None):
        history = [load_requests(p, net) for p in args.history]
        return clusters, None, history
    raise ConfigError("proactive variant needs --model or --history files")


def _write_reports(report: RunReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, "epochs.jsonl"), "w", encoding="utf-8") as fh:
        for m in report.epochs:
            fh.write(json.dumps(m.to_dict(), sort_keys=True,
                                separators=(",", ":")) + "\n")
    with open(os.path.join(out_dir, "timing.json"), "w", encoding="utf-8") as fh:
        json.dump(report.timing_sidecar(), fh)
        fh.write("\n")


def _cmd_run(args) -> int:
    cfg = _settings(args)
    config = _sim_config(cfg)
    net = _load_scenario_network(args.network)
    demand = load_requests(args.demand, net)
    clusters, model, history = _prepare_forecast(config, net, args)
    report = run(config, net, demand, history=history,
                 demand_model=model, clusters=clusters)
    _write_reports(report, args.out)
    print(f"variant={report.variant} seed={report.seed} "
          f"service_rate={report.service_rate:.4f} "
          f"wait_s={report.mean_waiting_s:.1f} "
          f"delay_s={report.mean_total_delay_s:.1f} "
          f"steps={report.mean_epoch_steps:.1f}")
    return 0


# ------------------------------------------------------------------ compare

def _mean_se(xs: Sequence[float]) -> tuple:
    n = len(xs)
    mean = math.fsum(xs) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var / n)


def compare_table(results: Dict[str, List[RunReport]]) -> str:
    """Fixed-format comparison; identical inputs give identical bytes."""
    lines = ["variant             seed  steps/epoch  service_rate   wait_s  delay_s"]
    for variant, reports in results.items():
        for r in reports:
            lines.append(f"{variant:<19} {r.seed:>5} {r.mean_epoch_steps:>12.1f}"
                         f" {r.service_rate:>13.4f} {r.mean_waiting_s:>8.1f}"
                         f" {r.mean_total_delay_s:>8.1f}")
    n_seeds = max(len(v) for v in results.values()) if results else 0
    lines.append("")
    lines.append(f"aggregate over {n_seeds} seeds (mean +/- standard error)")
    for variant, reports in results.items():
        s = _mean_se([r.mean_epoch_steps for r in reports])
        sr = _mean_se([r.service_rate for r in reports])
        w = _mean_se([r.mean_waiting_s for r in reports])
        d = _mean_se([r.mean_total_delay_s for r in reports])
        lines.append((f"{variant:<19} {s[0]:>10.1f} +/- {s[1]:<8.1f}"
                      f" {sr[0]:.4f} +/- {sr[1]:<8.4f}"
                      f" {w[0]:>7.1f} +/- {w[1]:<6.1f}"
                      f" {d[0]:>7.1f} +/- {d[1]:<6.1f}").rstrip())
    return "\n".join(lines) + "\n"


def _cmd_compare(args) -> int:
    cfg = _settings(args)
    net = _build_grid(cfg)
    spec = _demand_spec(cfg)
    variants = [v.strip() for v in
                str(cfg.get("variants", "original,speedup,speedup_proactive")).split(",")
                if v.strip()]
    n_seeds = int(cfg.get("seeds", 3))
    base_seed = int(cfg.get("seed", 0))
    history_days = int(cfg.get("history_days", 5))
    need_history = any(v == "speedup_proactive" for v in variants)

    results: Dict[str, List[RunReport]] = {v: [] for v in variants}
    for i in range(n_seeds):
        seed = base_seed + i
        history = (generate_history(net, spec, history_days, seed)
                   if need_history else None)
        for variant in variants:
            config = _sim_config({**cfg, "variant": variant, "seed": seed})
            # runs mutate request state, so each variant replays a fresh
            # (deterministically identical) copy of the seed's demand
            demand = generate_requests(net, spec, seed)
            results[variant].append(run(config, net, demand, history=history))

    table = compare_table(results)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return 0


# ------------------------------------------------------------------- oracle

def _cmd_oracle(args) -> int:
    from .verify import run_all

    checks = run_all(quick=args.quick)
    for c in checks:
        print(c.line())
    if all(c.ok for c in checks):
        print(f"all {len(checks)} checks passed")
        return 0
    return 4


# --------------------------------------------------------------------- main

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one setting (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ridepool",
        description="Seeded ridepooling dispatch simulator and solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scenario directory")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fit-demand", help="fit demand histograms from history")
    _add_common(p)
    p.add_argument("--network", required=True, help="scenario directory")
    p.add_argument("--history", required=True, nargs="+",
                   help="history request CSVs, one per day")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=_cmd_fit_demand)

    p = sub.add_parser("run", help="simulate one variant on a scenario")
    _add_common(p)
    p.add_argument("--network", required=True, help="scenario directory")
    p.add_argument("--demand", required=True, help="request CSV to replay")
    p.add_argument("--history", nargs="+",
                   help="history CSVs (proactive variant)")
    p.add_argument("--model", help="fitted demand model file")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run variants x seeds, print a table")
    _add_common(p)
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("oracle", help="brute-force cross-checks of the solvers")
    p.add_argument("--quick", action="store_true", help="smaller trial counts")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (InternalError, RouteError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
