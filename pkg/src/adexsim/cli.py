"""Command-line front end: config parsing, experiment dispatch, seeding,
and trace/report serialization.

Subcommands: simulate, calibrate, experiment <name>, sweep.  Outputs are
CSV traces (time column plus per-quantity columns, units in the header)
and structured JSON reports; identical configs and seeds produce
byte-identical files.  The ADEXSIM_OUT environment variable overrides the
default output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .calibrate import calibrate_population
from .circuit import simulate_circuit
from .config import RunConfig, parse_config, serialize_config
from .errors import AdexSimError, ParseError, ValidationError
from .experiments import (
    LotProtocol, PspProtocol, run_exponential_sweep, run_firing_patterns,
    run_leak_over_threshold, run_psp_experiment,
)
from .mismatch import MismatchModel, Population, default_mismatch_model, sample_population
from .model import simulate
from .patterns import load_patterns

OUTPUT_DIR_ENV = "ADEXSIM_OUT"

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_USAGE = 2


def _format_float(x: float) -> str:
    return "%.9g" % x


def trace_to_csv(trace) -> str:
    """Self-describing CSV: time plus per-quantity columns with units."""
    w_na = trace.adaptation_current() * 1e9
    header = ["time_us", "V_mV", "w_nA", "s_exc", "s_inh"]
    lines = [",".join(header)]
    times = trace.times
    for k in range(len(trace.V)):
        lines.append(",".join(_format_float(v) for v in (
            times[k] * 1e6, trace.V[k] * 1e3, w_na[k],
            trace.s_exc[k], trace.s_inh[k])))
    return "\n".join(lines) + "\n"


def csv_to_trace(text: str):
    """Re-ingest a trace CSV written by trace_to_csv."""
    from .model import SimulationTrace

    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(",")
    expected = ["time_us", "V_mV", "w_nA", "s_exc", "s_inh"]
    if header != expected:
        raise ValidationError(f"unexpected CSV columns {header}, need {expected}")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    if len(data) < 2:
        raise ValidationError("trace CSV needs at least two samples")
    dt = (data[1, 0] - data[0, 0]) * 1e-6
    return SimulationTrace(dt=dt, V=data[:, 1] * 1e-3, w=data[:, 2] * 1e-9,
                           s_exc=data[:, 3], s_inh=data[:, 4],
                           spikes=np.array([]))


def spikes_to_csv(spikes) -> str:
    lines = ["spike_time_us"]
    lines += [_format_float(t * 1e6) for t in spikes]
    return "\n".join(lines) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def report_to_json(report) -> str:
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=True,
                      default=_json_default) + "\n"


class _Output:
    """Collects files in memory and writes them all at the end, so a failed
    run leaves no partial outputs."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: dict = {}

    def add(self, name: str, content: str):
        self.files[name] = content

    def flush(self):
        os.makedirs(self.out_dir, exist_ok=True)
        for name, content in sorted(self.files.items()):
            path = os.path.join(self.out_dir, name)
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(content)


def _build_population(run: RunConfig) -> Population:
    nominal = run.circuit
    if run.mismatch_enabled:
        mm = default_mismatch_model(nominal, seed=(
            run.seed if run.mismatch_seed is None else run.mismatch_seed))
        relative = dict(mm.relative)
        additive = dict(mm.additive)
        for key, sigma in run.mismatch_overrides.items():
            if key.startswith("sigma_rel_"):
                relative[key[len("sigma_rel_"):]] = sigma
            else:
                additive[key[len("sigma_abs_"):]] = sigma
        mm = MismatchModel(relative=relative, additive=additive, seed=mm.seed)
    else:
        mm = MismatchModel(seed=run.seed)
    return sample_population(nominal, mm, run.mismatch_size)


def _cmd_simulate(run: RunConfig, out: _Output) -> int:
    if run.model == "ideal":
        if run.events:
            raise ValidationError(
                "[events_*] sections require the circuit model; the ideal "
                "model takes synaptic inputs through the library API")
        trace = simulate(run.neuron, run.stimulus, None,
                         duration=run.duration, dt=run.dt)
    else:
        trace = simulate_circuit(run.circuit, run.stimulus,
                                 syn_events=run.events or None,
                                 duration=run.duration, dt=run.dt)
    if run.fmt == "csv":
        out.add("trace.csv", trace_to_csv(trace))
        out.add("spikes.csv", spikes_to_csv(trace.spikes))
    else:
        payload = {
            "dt_us": trace.dt * 1e6,
            "V_mV": (trace.V * 1e3).tolist(),
            "w_nA": (trace.adaptation_current() * 1e9).tolist(),
            "spikes_us": (trace.spikes * 1e6).tolist(),
        }
        out.add("trace.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    summary = {
        "mode": "simulate", "model": run.model, "seed": run.seed,
        "n_spikes": int(len(trace.spikes)),
        "V_final_mV": float(trace.V[-1] * 1e3),
    }
    out.add("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_calibrate(run: RunConfig, out: _Output) -> int:
    if run.calibration is None:
        raise ValidationError("mode 'calibrate' requires a [calibration] section")
    pop = _build_population(run)
    result = calibrate_population(pop, run.calibration,
                                  plan=run.calibration_plan,
                                  tol=run.calibration_tol)
    payload = {"size": pop.size, "failures": result.failures, "outcomes": {}}
    for name, oc in result.outcomes.items():
        payload["outcomes"][name] = {
            "bias_path": oc.bias_path,
            "biases": oc.biases.tolist(),
            "residuals": oc.residuals.tolist(),
            "converged": oc.converged.astype(bool).tolist(),
            "pre_spread": oc.pre_spread,
            "post_spread": oc.post_spread,
            "evaluations": oc.evaluations,
        }
    out.add("calibration.json",
            json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return EXIT_OK if result.all_converged else EXIT_GATE_FAILED


def _run_one_experiment(run: RunConfig, spec: dict):
    name = spec["name"]
    if name == "leak_over_threshold":
        pop = _build_population(run)
        targets = spec.get("tau_m_targets") or (10e-6, 31.6e-6, 100e-6, 316e-6, 900e-6)
        cfg = run.circuit
        margin = 1.6
        if spec.get("v_inf") is not None:
            margin = (spec["v_inf"] - cfg.E_l) / (cfg.V_det - cfg.E_l)
        proto = LotProtocol(
            v_inf_margin=margin,
            n_isis=spec.get("n_isis") or 10,
            tolerance=spec.get("tolerance") or 0.05)
        return run_leak_over_threshold(pop, targets, proto)
    if name == "psp":
        pop = _build_population(run)
        target = run.calibration
        if target is not None:
            pop = calibrate_population(pop, target, plan=run.calibration_plan,
                                       tol=run.calibration_tol).population
        proto = PspProtocol(line=spec.get("line") or "exc",
                            weight=spec.get("weight") or 1.0)
        return run_psp_experiment(pop, proto, n_events=spec.get("n_events") or 3)
    if name == "exponential_sweep":
        cfg = run.circuit
        if not cfg.exponential.enabled:
            raise ValidationError("exponential_sweep requires [exponential] enabled = true")
        return run_exponential_sweep(cfg, onsets=spec.get("onsets"),
                                     slopes=spec.get("slopes"))
    if name == "firing_patterns":
        patterns = load_patterns()
        wanted = spec.get("patterns")
        if wanted:
            unknown = [w for w in wanted if w not in patterns]
            if unknown:
                raise ValidationError(f"unknown patterns: {', '.join(unknown)}")
            patterns = {k: patterns[k] for k in wanted}
        return run_firing_patterns(
            patterns, model=run.model,
            population_size=spec.get("population") or run.mismatch_size,
            seed=run.seed, agreement=spec.get("agreement") or 0.95)
    raise ValidationError(f"unknown experiment {name!r}")


def _cmd_experiment(run: RunConfig, out: _Output) -> int:
    report = _run_one_experiment(run, run.experiment)
    safe_name = report.name.replace("[", "_").replace("]", "")
    out.add(f"report_{safe_name}.json", report_to_json(report))
    for key, trace in sorted(report.traces.items()):
        if run.fmt == "csv":
            out.add(f"trace_{key}.csv", trace_to_csv(trace))
    return EXIT_OK if report.passed in (True, None) else EXIT_GATE_FAILED


def _cmd_sweep(run: RunConfig, out: _Output, jobs: int) -> int:
    key = run.sweep["key"]
    values = run.sweep["values"]
    section, _, name = key.partition(".")

    def one(value):
        text = serialize_config(run)
        sub = parse_config(text)
        if section == "neuron":
            sub.neuron = replace(sub.neuron, **{name: value})
        elif section == "run":
            setattr(sub, name, value)
        else:
            raise ValidationError(f"sweep over [{section}] is not supported; "
                                  "use neuron.* or run.*")
        if sub.model == "ideal":
            trace = simulate(sub.neuron, sub.stimulus, None,
                             duration=sub.duration, dt=sub.dt)
        else:
            trace = simulate_circuit(sub.circuit, sub.stimulus,
                                     syn_events=sub.events or None,
                                     duration=sub.duration, dt=sub.dt)
        return value, trace

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, values))
    else:
        results = [one(v) for v in values]

    summary_rows = ["index,value,n_spikes,median_isi_us"]
    for idx, (value, trace) in enumerate(results):
        out.add(f"sweep_{idx:03d}.csv", trace_to_csv(trace))
        isis = np.diff(trace.spikes)
        med = float(np.median(isis)) * 1e6 if len(isis) else float("nan")
        summary_rows.append(
            f"{idx},{_format_float(value)},{len(trace.spikes)},{_format_float(med)}")
    out.add("sweep_summary.csv", "\n".join(summary_rows) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adexsim",
        description="Behavioral simulator of an analog AdEx neuron")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("simulate", "calibrate", "sweep"):
        p = sub.add_parser(cmd)
        _common_args(p)
    p = sub.add_parser("experiment")
    p.add_argument("name", choices=("leak_over_threshold", "psp",
                                    "exponential_sweep", "firing_patterns"))
    _common_args(p)
    return parser


def _common_args(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="config file path")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads for sweeps/experiments")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = parse_config(text)
        if args.seed is not None:
            run.seed = args.seed
        if args.fmt is not None:
            run.fmt = args.fmt
        if getattr(args, "jobs", None):
            run.jobs = max(1, args.jobs)
        if args.command == "experiment" and run.experiment.get("name") not in (
                None, args.name):
            raise ValidationError(
                f"config declares experiment {run.experiment.get('name')!r}, "
                f"command line asks for {args.name!r}")
        if args.command == "experiment" and not run.experiment:
            run.experiment = {"name": args.name}
        out_dir = args.out or os.environ.get(OUTPUT_DIR_ENV) \
            or run.out_dir or "adexsim-out"
        parent = os.path.dirname(os.path.abspath(out_dir))
        if not os.path.isdir(parent):
            print(f"error: output location {parent!r} does not exist",
                  file=sys.stderr)
            return EXIT_USAGE
        out = _Output(out_dir)
        out.add("config.resolved.cfg", serialize_config(run))
        if args.command == "simulate":
            status = _cmd_simulate(run, out)
        elif args.command == "calibrate":
            status = _cmd_calibrate(run, out)
        elif args.command == "experiment":
            status = _cmd_experiment(run, out)
        else:
            status = _cmd_sweep(run, out, run.jobs)
        out.flush()
        return status
    except (ParseError, ValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except AdexSimError as err:
        print(json.dumps({"failure": str(err)}, sort_keys=True), file=sys.stderr)
        return EXIT_GATE_FAILED


if __name__ == "__main__":
    sys.exit(main())
