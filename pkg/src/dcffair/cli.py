"""Command-line front end.

Commands read a JSON run config, run simulations or analyses, and write
CSV bulk data plus JSON summaries into the output directory. Exit codes
are a stable scripting contract: 0 success, 2 input error, 3 analytical or
domain error. All outputs are byte-deterministic for a given config and
seed; wall-times are printed to stderr only.

Config fields can be overridden from the environment with the DCFFAIR_
prefix, double underscores descending into sections: DCFFAIR_SIM__SEED=7
sets config["sim"]["seed"]. Values are parsed as JSON when possible.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import clock as clockmod
from . import estimator as estmod
from . import fairness as fairmod
from . import netcalc
from . import sim as simmod
from . import traceio
from .errors import ConfigError, Error, ModelError, TraceFormatError
from .mac import (MacParams, saturation_throughput, slot_distribution,
                  solve_attempt_fixed_point, solve_attempt_fixed_point_vector)

ENV_PREFIX = "DCFFAIR_"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ANALYTIC = 3

_MAC_FIELDS = {f for f in MacParams.__dataclass_fields__}
_SIM_FIELDS = {"n", "mode", "arrival_rate_pps", "horizon_slots", "horizon_us",
               "seed", "record_slot_trace", "record_event_trace", "reps"}


def _apply_env_overrides(config: dict, environ=os.environ) -> dict:
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {key} descends into "
                                  f"a non-object config field")
        node[path[-1]] = value
    return config


def load_config(path: str | Path, seed_override: int | None = None) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    _apply_env_overrides(config)
    if seed_override is not None:
        config.setdefault("sim", {})["seed"] = seed_override
    return config


def _mac_params(spec, where: str) -> MacParams | tuple[MacParams, ...]:
    def one(obj) -> MacParams:
        if not isinstance(obj, dict):
            raise ConfigError(f"{where}: expected an object of MAC fields")
        unknown = set(obj) - _MAC_FIELDS
        if unknown:
            raise ConfigError(f"{where}: unknown MAC fields {sorted(unknown)}")
        return MacParams(**obj)

    if spec is None:
        return MacParams()
    if isinstance(spec, list):
        return tuple(one(entry) for entry in spec)
    return one(spec)


def build_sim_config(config: dict) -> simmod.SimConfig:
    sim = config.get("sim")
    if not isinstance(sim, dict):
        raise ConfigError('config needs a "sim" object')
    unknown = set(sim) - _SIM_FIELDS
    if unknown:
        raise ConfigError(f"sim: unknown fields {sorted(unknown)}")
    if "n" not in sim:
        raise ConfigError('sim: field "n" is required')
    params = _mac_params(config.get("mac"), "mac")
    arrival = sim.get("arrival_rate_pps")
    if isinstance(arrival, list):
        arrival = tuple(float(a) for a in arrival)
    cfg = simmod.SimConfig(
        n=int(sim["n"]),
        params=params,
        mode=sim.get("mode", "saturated"),
        arrival_rate_pps=arrival,
        horizon_slots=sim.get("horizon_slots"),
        horizon_us=sim.get("horizon_us"),
        seed=int(sim.get("seed", 0)),
        record_slot_trace=bool(sim.get("record_slot_trace", True)),
        record_event_trace=bool(sim.get("record_event_trace", True)),
    )
    cfg.validate()
    return cfg


def _out_dir(config: dict, override: str | None) -> Path:
    out = Path(override or config.get("out_dir", "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".writable"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} not writable: {exc}")
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _analysis_section(config: dict, name: str) -> dict:
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f'config section "{name}" must be an object')
    return section


def _station_index(value, n: int, where: str) -> int:
    idx = int(value)
    if not 0 <= idx < n:
        raise ConfigError(f"{where}: station {idx} outside 0..{n - 1}")
    return idx


def _tagged_model(config: dict, tagged: int):
    """Fixed point + slot distribution for the configured stations."""
    sim_cfg = build_sim_config(config)
    params = sim_cfg.station_params()
    if all(p == params[0] for p in params):
        sol = solve_attempt_fixed_point(params[0], sim_cfg.n)
        taus = np.full(sim_cfg.n, sol.tau)
    else:
        vec = solve_attempt_fixed_point_vector(params)
        taus = vec.taus
    dist = slot_distribution(taus, params[tagged])
    return sim_cfg, params, taus, dist


def cmd_simulate(config: dict, out: Path, jobs: int,
                 plot_data: bool) -> None:
    sim_cfg = build_sim_config(config)
    started = time.perf_counter()
    result = simmod.run(sim_cfg)
    elapsed = time.perf_counter() - started
    reps = int(config.get("sim", {}).get("reps", 1))
    if result.slots is not None:
        traceio.write_slot_trace_csv(result.slots, out / "slot_trace.csv")
    if result.events is not None:
        traceio.write_event_trace_csv(result.events, out / "event_trace.csv")
    traceio.write_ownership_csv(result.success_owners, out / "ownership.csv")
    payload_bits = float(config.get("payload_bits", 8192))
    c = result.counters
    summary = {
        "n": sim_cfg.n,
        "mode": sim_cfg.mode,
        "seed": sim_cfg.seed,
        "slots": c.n_slots,
        "wallclock_us": c.wallclock_us,
        "slot_counts": {"idle": c.idle_slots, "success": c.success_slots,
                        "collision": c.collision_slots},
        "per_station": {
            "arrivals": c.arrivals.tolist(),
            "successes": c.successes.tolist(),
            "drops": c.drops.tolist(),
            "attempts": c.attempts.tolist(),
            "collisions_involved": c.collisions_involved.tolist(),
            "throughput_pps": result.throughput_pps().tolist(),
            "throughput_bps": result.throughput_bps(payload_bits).tolist(),
        },
        "collision_rate_per_slot": c.collision_slots / max(c.n_slots, 1),
    }
    _write_json(out / "summary.json", summary)
    if reps > 1:
        stats = simmod.replicate(sim_cfg, reps, "throughput_pps", jobs=jobs)
        _write_csv(out / "replications.csv",
                   ["replication"] + [f"throughput_pps_{i}"
                                      for i in range(sim_cfg.n)],
                   [[r] + list(map(float, stats[r])) for r in range(reps)])
    print(f"simulate: {c.n_slots} slots, {c.wallclock_us} us simulated "
          f"-> {out}", file=sys.stderr)
    print(f"simulate: runtime {elapsed:.2f}s", file=sys.stderr)


def cmd_model(config: dict, out: Path, jobs: int, plot_data: bool) -> None:
    tagged = 0
    sim_cfg, params, taus, dist = _tagged_model(config, tagged)
    payload_bits = float(config.get("payload_bits", 8192))
    throughput = saturation_throughput(dist, payload_bits)
    model = netcalc.increment_model_from_slots(dist, tagged)
    mean_i, var_i = netcalc.increment_moments(model)
    report = {
        "n": sim_cfg.n,
        "tau": taus.tolist(),
        "p_coll": [float(1.0 - np.prod(np.delete(1.0 - taus, i)))
                   for i in range(sim_cfg.n)],
        "q": dist.q.tolist(),
        "p_idle": dist.p_idle,
        "p_succ": dist.p_succ.tolist(),
        "p_coll_slot": dist.p_coll,
        "expected_slot_us": dist.expected_slot_us,
        "throughput_pps": (throughput / payload_bits).tolist(),
        "throughput_bps": throughput.tolist(),
        "increment_mean_us": mean_i,
        "increment_var_us2": var_i,
    }
    _write_json(out / "model.json", report)
    print(f"model: tau[0]={taus[0]:.6f}, S[0]={throughput[0]:.1f} bps "
          f"-> {out}", file=sys.stderr)


def cmd_fairness(config: dict, out: Path, jobs: int, plot_data: bool,
                 ownership: Path | None = None) -> None:
    section = _analysis_section(config, "fairness")
    sim_cfg, params, taus, dist = _tagged_model(config, 0)
    tagged = _station_index(section.get("tagged", 0), sim_cfg.n,
                            "fairness.tagged")
    contender = _station_index(section.get("contender", 1), sim_cfg.n,
                               "fairness.contender")
    l = int(section.get("l", 1))
    trunc_tol = float(section.get("trunc_tol", 1e-9))
    cpmf = fairmod.conditional_pmf(float(dist.q[tagged]),
                                   float(dist.q[contender]), l, trunc_tol)
    mean, variance = fairmod.pmf_moments(cpmf)
    _write_csv(out / "fairness_pmf.csv", ["k", "probability"],
               [[k, float(pk)] for k, pk in enumerate(cpmf.pmf)])
    report = {
        "tagged": tagged,
        "contender": contender,
        "l": l,
        "beta": cpmf.beta,
        "k_max": cpmf.k_max,
        "tail_mass": cpmf.tail_mass,
        "mean": mean,
        "variance": variance,
    }
    window_rows = []
    if ownership is not None:
        owners = traceio.read_ownership_csv(ownership)
        for wl in section.get("window_lens", [10, 100, 1000]):
            wl = int(wl)
            if owners.size < wl:
                continue
            stats = fairmod.windowed_fairness(owners, wl,
                                              n_stations=sim_cfg.n)
            window_rows.append([wl, stats.jain_mean, stats.jain_p05,
                                stats.jain_p95])
        _write_csv(out / "fairness_windows.csv",
                   ["window_len", "jain_mean", "jain_p05", "jain_p95"],
                   window_rows)
        report["windows"] = [
            {"window_len": r[0], "jain_mean": r[1], "jain_p05": r[2],
             "jain_p95": r[3]} for r in window_rows
        ]
    _write_json(out / "fairness.json", report)
    if plot_data:
        _write_csv(out / "plot_pmf.csv", ["k", "probability"],
                   [[k, float(pk)] for k, pk in enumerate(cpmf.pmf)])
        if window_rows:
            _write_csv(out / "plot_jain_window.csv",
                       ["window_len", "jain_mean"],
                       [[r[0], r[1]] for r in window_rows])
    print(f"fairness: beta={cpmf.beta:.4f}, E[K|{l}]={mean:.4f} -> {out}",
          file=sys.stderr)


def cmd_clock(config: dict, out: Path, jobs: int, plot_data: bool,
              slot_trace: Path | None = None) -> None:
    if slot_trace is None:
        raise ConfigError("clock analysis needs --slot-trace")
    section = _analysis_section(config, "clock")
    sim_cfg, params, taus, dist = _tagged_model(config, 0)
    tagged = _station_index(section.get("tagged", 0), sim_cfg.n,
                            "clock.tagged")
    trace = traceio.read_slot_trace_csv(slot_trace)
    model = netcalc.increment_model_from_slots(dist, tagged)
    mean_i, _ = netcalc.increment_moments(model)
    fair_increment = float(section.get("fair_increment_us", mean_i))
    ct = clockmod.dcf_clock(trace, tagged, fair_increment)
    _write_csv(out / "clock.csv", ["j", "T_j_us", "I_j_us", "e_j_us"],
               [[j + 1, int(ct.departures[j]), int(ct.increments[j]),
                 float(ct.errors[j])]
                for j in range(ct.departures.size)])
    # GPS reference sharing the rate the DCF actually delivers
    payload_bits = float(config.get("payload_bits", 8192))
    tagged_pps = float(
        saturation_throughput(dist, payload_bits)[tagged] / payload_bits)
    n_packets = int(ct.departures.size)
    arrivals = [[(0.0, 1.0)] * n_packets for _ in range(sim_cfg.n)]
    gps = clockmod.gps_finish_times(arrivals, np.ones(sim_cfg.n),
                                    capacity=tagged_pps * sim_cfg.n)
    deviation = clockmod.clock_vs_gps(ct, gps, tagged)
    summary = {
        "tagged": tagged,
        "packets": n_packets,
        "fair_increment_us": fair_increment,
        "error_mean_us": float(np.mean(ct.errors)),
        "error_std_us": float(np.std(ct.errors, ddof=1))
        if n_packets > 1 else 0.0,
        "gps_capacity_pps": tagged_pps * sim_cfg.n,
        "deviation_vs_gps_us": {
            "mean": deviation.mean,
            "p05": deviation.p05,
            "p50": deviation.p50,
            "p95": deviation.p95,
            "max_abs": deviation.max_abs,
        },
    }
    _write_json(out / "clock_summary.json", summary)
    print(f"clock: {n_packets} packets, mean error "
          f"{summary['error_mean_us']:.2f} us -> {out}", file=sys.stderr)


def cmd_servicecurve(config: dict, out: Path, jobs: int,
                     plot_data: bool) -> None:
    section = _analysis_section(config, "service_curve")
    sim_cfg, params, taus, dist = _tagged_model(config, 0)
    tagged = _station_index(section.get("tagged", 0), sim_cfg.n,
                            "service_curve.tagged")
    eps = float(section.get("eps", 1e-2))
    horizon_j = int(section.get("horizon_j", 100))
    model = netcalc.increment_model_from_slots(dist, tagged)
    theta = section.get("theta")
    theta = (float(theta) if theta is not None
             else netcalc.optimize_theta(model, eps, horizon_j))
    sc = netcalc.service_curve(model, theta, eps)
    t_max = netcalc.theta_max(model)
    upper = 0.999 * t_max if np.isfinite(t_max) else 1.0
    rows = []
    for th in np.geomspace(upper * 1e-4, upper, 32):
        curve = netcalc.service_curve(model, float(th), eps)
        rows.append([float(th), curve.rate, curve.latency, eps])
    _write_csv(out / "service_curve.csv",
               ["theta", "rate_pps", "latency_s", "eps"], rows)
    payload_bits = float(config.get("payload_bits", 8192))
    report = {
        "tagged": tagged,
        "eps": eps,
        "theta": theta,
        "theta_max": t_max if np.isfinite(t_max) else None,
        "rate_pps": sc.rate,
        "rate_bps": sc.rate * payload_bits,
        "latency_s": sc.latency,
        "increment_mean_us": netcalc.increment_moments(model)[0],
    }
    arrival = section.get("arrival")
    if arrival is not None:
        env = netcalc.ArrivalEnvelope(
            sigma_b=float(arrival.get("sigma_b", 0.0)),
            rho=float(arrival.get("rho_pps", 0.0)),
        )
        report["delay_bound_s"] = netcalc.delay_bound(env, sc)
        report["backlog_bound_pkts"] = netcalc.backlog_bound(env, sc)
    _write_json(out / "service_bounds.json", report)
    if plot_data:
        _write_csv(out / "plot_envelope.csv", ["j", "t_eps_us"],
                   [[j, netcalc.t_epsilon_us(model, theta, eps, j)]
                    for j in range(1, horizon_j + 1)])
    print(f"servicecurve: rate={sc.rate:.2f} pps, latency={sc.latency:.4f} s "
          f"-> {out}", file=sys.stderr)


def cmd_estimate(config: dict, out: Path, jobs: int, plot_data: bool,
                 event_trace: Path | None = None) -> None:
    if event_trace is None:
        raise ConfigError("estimate analysis needs --event-trace")
    section = _analysis_section(config, "estimate")
    sim_cfg = build_sim_config(config)
    station = _station_index(section.get("station", 0), sim_cfg.n,
                             "estimate.station")
    min_deps = int(section.get("min_period_departures", 2))
    events = traceio.read_event_trace_csv(event_trace).for_station(station)
    estimate = estmod.estimate_fair_rate(events, min_deps)
    report = {
        "station": station,
        "rate_pps": estimate.rate_pps,
        "stderr_pps": estimate.stderr_pps,
        "ci95": list(estimate.ci95),
        "samples": estimate.samples,
        "busy_fraction": estimate.busy_fraction,
        "lag1_autocorr": estimate.lag1_autocorr,
        "ratio_rate_pps": estimate.ratio_rate_pps,
    }
    _write_json(out / "estimate.json", report)
    sample_counts = [int(m) for m in section.get("sample_counts",
                                                 [100, 1000, 10000])]
    points = estmod.convergence_report(events, sample_counts, min_deps)
    _write_csv(out / "convergence.csv",
               ["requested_m", "used_m", "truncated", "rate_pps", "ci_low",
                "ci_high", "ci_width", "ratio_rate_pps"],
               [[p.requested_m, p.used_m, int(p.truncated), p.rate_pps,
                 p.ci_low, p.ci_high, p.ci_width, p.ratio_rate_pps]
                for p in points])
    if plot_data:
        _write_csv(out / "plot_ci_samples.csv", ["m", "ci_width"],
                   [[p.used_m, p.ci_width] for p in points])
    print(f"estimate: rate={estimate.rate_pps:.2f} pps "
          f"(ci {estimate.ci95[0]:.2f}..{estimate.ci95[1]:.2f}) -> {out}",
          file=sys.stderr)


DEMO_CONFIG = {
    "scenario": "demo",
    "mac": {"cw_min": 32, "cw_max": 1024, "max_backoff_stage": 5},
    "sim": {"n": 5, "mode": "saturated", "horizon_slots": 150_000, "seed": 7},
    "payload_bits": 8192,
    "fairness": {"tagged": 0, "contender": 1, "l": 1,
                 "window_lens": [10, 100, 1000]},
    "clock": {"tagged": 0},
    "service_curve": {"tagged": 0, "eps": 0.01, "horizon_j": 50,
                      "arrival": {"sigma_b": 5.0, "rho_pps": 5.0}},
    "estimate": {"station": 0, "sample_counts": [100, 1000, 5000]},
}


def cmd_demo(out: Path, jobs: int, plot_data: bool,
             seed: int | None = None) -> None:
    """End-to-end smoke pipeline on a small saturated scenario."""
    config = json.loads(json.dumps(DEMO_CONFIG))
    _apply_env_overrides(config)
    if seed is not None:
        config["sim"]["seed"] = seed
    _write_json(out / "config.json", config)
    cmd_simulate(config, out, jobs, plot_data)
    cmd_model(config, out, jobs, plot_data)
    cmd_fairness(config, out, jobs, plot_data,
                 ownership=out / "ownership.csv")
    cmd_clock(config, out, jobs, plot_data,
              slot_trace=out / "slot_trace.csv")
    cmd_servicecurve(config, out, jobs, plot_data)
    cmd_estimate(config, out, jobs, plot_data,
                 event_trace=out / "event_trace.csv")
    print(f"demo: full pipeline -> {out}", file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcffair",
        description="DCF fairness calculus: simulate, model, and analyze",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel replications")
        p.add_argument("--plot-data", action="store_true",
                       help="emit two-column plotting CSVs")

    common(sub.add_parser("simulate", help="run the slot-level simulator"))
    common(sub.add_parser("model", help="analytical fixed point and rates"))
    p = sub.add_parser("fairness", help="conditional pmf and Jain windows")
    common(p)
    p.add_argument("--ownership", default=None,
                   help="success-ownership CSV for windowed statistics")
    p = sub.add_parser("clock", help="departure clock vs GPS reference")
    common(p)
    p.add_argument("--slot-trace", default=None, help="slot trace CSV")
    common(sub.add_parser("servicecurve",
                          help="stochastic service curve and bounds"))
    p = sub.add_parser("estimate", help="passive fair-rate estimate")
    common(p)
    p.add_argument("--event-trace", default=None, help="event trace CSV")
    p = sub.add_parser("demo", help="small end-to-end pipeline")
    common(p, needs_config=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "demo":
            out = _out_dir({}, args.out or "demo_out")
            cmd_demo(out, args.jobs, args.plot_data, seed=args.seed)
            return EXIT_OK
        config = load_config(args.config, seed_override=args.seed)
        out = _out_dir(config, args.out)
        if args.command == "simulate":
            cmd_simulate(config, out, args.jobs, args.plot_data)
        elif args.command == "model":
            cmd_model(config, out, args.jobs, args.plot_data)
        elif args.command == "fairness":
            ownership = Path(args.ownership) if args.ownership else None
            if ownership is not None and not ownership.exists():
                raise ConfigError(f"ownership trace not found: {ownership}")
            cmd_fairness(config, out, args.jobs, args.plot_data, ownership)
        elif args.command == "clock":
            trace = Path(args.slot_trace) if args.slot_trace else None
            if trace is not None and not trace.exists():
                raise ConfigError(f"slot trace not found: {trace}")
            cmd_clock(config, out, args.jobs, args.plot_data, trace)
        elif args.command == "servicecurve":
            cmd_servicecurve(config, out, args.jobs, args.plot_data)
        elif args.command == "estimate":
            trace = Path(args.event_trace) if args.event_trace else None
            if trace is not None and not trace.exists():
                raise ConfigError(f"event trace not found: {trace}")
            cmd_estimate(config, out, args.jobs, args.plot_data, trace)
        return EXIT_OK
    except (ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYTIC
    except Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYTIC


if __name__ == "__main__":
    sys.exit(main())
