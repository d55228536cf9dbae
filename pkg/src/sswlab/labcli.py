"""Experiment runner: configs, canned scenarios, sweeps, and export.

Scenarios compose the library modules into the standard narrative runs
(profile residuals, operator audits, trapping and escape dynamics, the
physical blow-up pipeline).  Run logs are plain text, one key=value
record per line at full precision, deterministic for a fixed config and
seed so reruns are byte-identical.
"""

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy

from . import __version__
from . import wspace, stationary, spectral, linop, evolve, modulation

SCENARIOS = ("stationary-residual", "eigen-audit", "trapping", "escape",
             "physical-blowup", "operator-duality", "sweep")
SWEEP_CAP = 256
TABLE_COLUMNS = ("s", "E", "normH", "a", "b", "d", "theta")


def _fmt(value):
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _parse_token(text):
    if text == "on":
        return True
    if text == "off":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class ExperimentConfig:
    """One experiment cell: scenario plus its numeric knobs."""

    scenario: str
    p: float = 3.0
    n: int = 64
    d: float = 0.0
    theta: float = 0.0
    epsilon_star: float = 1e-3
    mu: float = 1e-4
    s_span: tuple = (0.0, 6.0)
    seed: int = 0
    outdir: str = "runs"
    filtering: bool = False
    ds_out: float = 0.05
    x0: float = 0.0
    delta0: float = 0.5
    t_max: float = 4.0

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; "
                             f"choose one of {', '.join(SCENARIOS)}")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not abs(self.d) < 1:
            raise ValueError("|d| < 1 required")
        if int(self.n) < 8:
            raise ValueError("n too small (need at least 8 nodes)")
        if self.scenario == "trapping" and not self.epsilon_star > 0:
            raise ValueError("trapping needs epsilon_star > 0")
        if self.scenario == "escape" and not self.mu > 0:
            raise ValueError("escape needs mu > 0 (expanding seed)")
        if len(self.s_span) != 2 or not self.s_span[1] > self.s_span[0]:
            raise ValueError("s_span must be an increasing pair")
        return self

    def run_name(self):
        return f"{self.scenario}-p{_fmt(self.p)}-n{int(self.n)}-seed{int(self.seed)}"


def load_config(path):
    """Read an INI config: [experiment] plus an optional scenario section."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"config file not found: {path}")
    if "experiment" not in parser:
        raise ValueError("config needs an [experiment] section")
    merged = dict(parser["experiment"])
    scenario = merged.get("scenario")
    if scenario is None:
        raise ValueError("config needs scenario = <name> under [experiment]")
    if scenario in parser:
        merged.update(dict(parser[scenario]))
    kwargs = {}
    for key, raw in merged.items():
        if key == "s_span":
            parts = raw.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError("s_span wants two numbers")
            kwargs[key] = (float(parts[0]), float(parts[1]))
        elif key in ("scenario", "outdir"):
            kwargs[key] = raw
        elif key in ("n", "seed"):
            kwargs[key] = int(raw)
        elif key == "filtering":
            kwargs[key] = raw.strip().lower() in ("on", "true", "1", "yes")
        else:
            kwargs[key] = float(raw)
    unknown = set(kwargs) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**kwargs).validate()


@dataclass
class RunLog:
    """Parsed or freshly produced run artifact."""

    header: dict
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    path: str = None

    def record_fields(self):
        return list(self.records[0].keys()) if self.records else []


def _serialize_line(kind, data):
    toks = [kind]
    for key, value in data.items():
        toks.append(f"{key}={_fmt(value)}")
    return " ".join(toks)


def write_runlog(log, path):
    lines = [_serialize_line("header", log.header)]
    for rec in log.records:
        lines.append(_serialize_line("record", rec))
    if log.summary:
        lines.append(_serialize_line("summary", log.summary))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    log.path = path
    return path


def parse_runlog(path):
    header, records, summary = {}, [], {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            kind, _, rest = line.partition(" ")
            data = {}
            for tok in rest.split():
                key, _, val = tok.partition("=")
                data[key] = _parse_token(val)
            if kind == "header":
                header = data
            elif kind == "record":
                records.append(data)
            elif kind == "summary":
                summary = data
            else:
                raise ValueError(f"unknown runlog line kind {kind!r}")
    if not header:
        raise ValueError(f"runlog {path} lacks a header line")
    return RunLog(header=header, records=records, summary=summary, path=path)


def _header_for(config, grid=None):
    head = {"scenario": config.scenario, "p": config.p, "n": int(config.n),
            "seed": int(config.seed), "d": config.d, "theta": config.theta,
            "epsilon_star": config.epsilon_star, "mu": config.mu,
            "s_start": config.s_span[0], "s_end": config.s_span[1],
            "filtering": config.filtering,
            "version": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__}
    if grid is not None:
        head["grid_kind"] = grid.kind
        head["grid_n"] = grid.n
    return head


def _record_from_decomp(rec):
    return {"s": rec.s, "d": rec.d, "theta": rec.theta, "lam": rec.lam,
            "a1check": rec.a1check, "aminus_check": rec.aminus_check,
            "aminus_tilde": rec.aminus_tilde, "a": rec.a, "b": rec.b,
            "Rminus": rec.Rminus, "E": rec.E, "normH": rec.normH,
            "dprime": rec.dprime, "thetaprime": rec.thetaprime}


def _seed_perturbation(grid, d, epsilon_star, seed):
    """Random smooth state of H-size epsilon_star, cleared of the
    growing and symmetry modes at drift d."""
    fields = spectral.random_fields(grid, 2, seed=seed)
    raw = wspace.StateField(
        grid, fields[0].first + 1j * fields[1].first,
        fields[0].second + 1j * fields[1].second)
    parts = linop.project(raw, d)
    q = wspace.StateField(
        grid,
        parts["q_minus_real"].first + 1j * parts["q_minus_imag"].first,
        parts["q_minus_real"].second + 1j * parts["q_minus_imag"].second)
    size = wspace.norms(q)["H"]
    return wspace.StateField(grid, (epsilon_star / size) * q.first,
                             (epsilon_star / size) * q.second)


def _scenario_trapping(config, grid):
    q = _seed_perturbation(grid, config.d, config.epsilon_star, config.seed)
    kap = stationary.kappa_values(config.p, config.d, grid.nodes)
    ph = np.exp(1j * config.theta)
    initial = wspace.StateField(grid, ph * (kap + q.first), ph * q.second)
    run = evolve.run_selfsimilar(initial, config.s_span, config.p,
                                 ds_out=config.ds_out,
                                 filtering=config.filtering)
    records, aux = modulation.track_run(run, config.d, config.theta)
    rows = [_record_from_decomp(r) for r in records]
    # fit on the decaying portion: the re-seeded growing mode eventually
    # turns the tail around at machine-level amplitudes
    nrm = np.array([r.normH for r in records])
    cut = int(np.argmin(nrm)) + 1
    fit_part = records[:cut] if cut >= 30 else records
    summary = {}
    est = None
    if len(fit_part) >= 30:
        est = modulation.fit_decay(fit_part)
        summary.update({"kind": "trapping-estimate",
                        "mu_est": est.mu_est, "C_est": est.C_est,
                        "d_infinity": est.d_infinity,
                        "theta_infinity": est.theta_infinity,
                        "epsilon_star": est.epsilon_star,
                        "verdict": est.verdict,
                        "fit_residual": est.fit_residual,
                        "param_shift": est.param_shift,
                        "s_fit_end": records[cut - 1].s})
        if math.isfinite(est.param_rate):
            summary["param_rate"] = est.param_rate
    else:
        summary.update({"kind": "trapping-estimate", "verdict": "inconclusive",
                        "reason": "too-few-samples"})
    if len(records) >= 10:
        rep = modulation.monitor_inequalities(records, aux)
        summary["sandwich_violations"] = rep["sandwich"]["violations"]
        summary["barrier_C_all"] = rep["energy_barrier"]["C_all"]
        summary["param_C_fit"] = rep["param_rate"]["C_fit"]
        if "param_rate_loglog_slope" in rep:
            summary["param_loglog_slope"] = rep["param_rate_loglog_slope"]
    summary["orth_max"] = float(max(aux["orth_check"].max(),
                                    aux["orth_tilde"].max()))
    return rows, summary, est


def _scenario_escape(config, grid):
    initial = evolve.explicit_degenerate_solution(
        config.d, config.mu, grid, config.s_span[0])
    run = evolve.run_selfsimilar(initial, config.s_span, config.p,
                                 ds_out=config.ds_out,
                                 filtering=config.filtering)
    records, aux = modulation.track_run(run, config.d, 0.0)
    rows = [_record_from_decomp(r) for r in records]
    summary = {"kind": "trapping-estimate"}
    if len(records) >= 30:
        est = modulation.fit_decay(records)
        summary.update({"mu_est": est.mu_est, "C_est": est.C_est,
                        "d_infinity": est.d_infinity,
                        "theta_infinity": est.theta_infinity,
                        "epsilon_star": est.epsilon_star,
                        "verdict": est.verdict,
                        "fit_residual": est.fit_residual})
    else:
        summary["verdict"] = "inconclusive"
    if "stopped" in aux:
        summary["stopped"] = aux["stopped"].split(":")[0]
    return rows, summary, None


def _scenario_stationary(config, grid):
    rows = []
    dvals = sorted(set([0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9,
                        float(config.d)]))
    for dval in dvals:
        prof = stationary.kappa_profile(
            stationary.SolitonParams(dval, config.theta), grid)
        res = stationary.stationary_residual(prof, config.p)
        rows.append({"s": 0.0, "d": dval, "theta": config.theta,
                     "residual_H": res})
    summary = {"kind": "residual-table",
               "max_residual": max(r["residual_H"] for r in rows)}
    return rows, summary, None


def _scenario_eigen_audit(config, grid):
    rows = []
    basis = spectral.build_eigenbasis(config.p, 8, grid)
    for dval in (0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9):
        frame = linop.build_frame(dval, grid, basis)
        eig = frame.diagnostics["eigen_residual_H"]
        rows.append({"s": 0.0, "item": "frame", "d": dval,
                     "duality_error": frame.duality["error"],
                     "res_F1_check": eig["F1_check"],
                     "res_F0_check": eig["F0_check"],
                     "res_F0_tilde": eig["F0_tilde"]})
    v0_rows = []
    for dval in (0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9):
        v0 = linop.build_V0(dval, 0.05, grid)
        v0_rows.append({"s": 0.0, "item": "eps-mode", "d": dval,
                        "duality_error": v0.meta["duality_error"],
                        "self_value": v0.meta["self_value"]})
    worst = max(max(r["duality_error"] for r in rows),
                max(max(r[k] for k in ("res_F1_check", "res_F0_check",
                                       "res_F0_tilde")) for r in rows),
                max(r["duality_error"] for r in v0_rows))
    rows += v0_rows
    summary = {"kind": "residual-table", "max_entry": worst,
               "v0_all_negative": all(r["self_value"] < 0 for r in v0_rows)}
    return rows, summary, None


def _scenario_operator_duality(config, grid):
    rows = []
    rng_fields = spectral.random_fields(grid, 6, seed=config.seed)
    for dval in (0.0, 0.4, -0.4, 0.8, -0.8):
        frame = linop.build_frame(dval, grid)
        adj1 = adj0 = adjt = dissip = epsdev = 0.0
        for k in range(3):
            q = rng_fields[2 * k]
            r = rng_fields[2 * k + 1]
            lq_re = linop.apply_linearized(q, dval, "real")
            lq_im = linop.apply_linearized(q, dval, "imag")
            nq = wspace.norms(q)["H"]
            adj1 = max(adj1, abs(
                wspace.inner_phi(lq_re, frame.W1_check).real
                - wspace.inner_phi(q, frame.W1_check).real) / nq)
            adj0 = max(adj0, abs(
                wspace.inner_phi(lq_re, frame.W0_check).real) / nq)
            adjt = max(adjt, abs(
                wspace.inner_phi(lq_im, frame.W0_tilde).real) / nq)
            dissip = max(dissip, abs(
                spectral.quad_form(q, lq_im, dval, "imag-part")
                + (4.0 / (config.p - 1.0))
                * wspace.integral_sing(grid, q.second ** 2)))
            direct = ((1.0 - 0.05) * spectral.quad_form(q, r, dval, "imag-part")
                      - 0.05 * spectral.ceps_coefficient(config.p)
                      * wspace.integral_rho(
                          grid, q.first * r.first
                          * (1.0 - dval * dval)
                          / (1.0 + dval * grid.nodes) ** 2))
            epsdev = max(epsdev, abs(
                spectral.quad_form(q, r, dval, "eps", eps=0.05) - direct))
        rows.append({"s": 0.0, "d": dval, "adjoint_growing": adj1,
                     "adjoint_zero_check": adj0, "adjoint_zero_tilde": adjt,
                     "dissipativity_defect": dissip,
                     "eps_form_agreement": epsdev})
    worst = max(max(v for k, v in r.items() if k not in ("s", "d"))
                for r in rows)
    summary = {"kind": "residual-table", "max_entry": worst}
    return rows, summary, None


def _scenario_physical(config):
    m = 4 * int(config.n)
    x = np.linspace(-2.0, 2.0, m)
    # constant data riding the ODE blow-up u = kappa0 (1 - t)^{-2/(p-1)}
    u0 = np.full(m, stationary.kappa0(config.p))
    u1 = (2.0 / (config.p - 1.0)) * u0
    run = evolve.run_physical(u0, u1, x,
                              {"x0": config.x0, "delta0": config.delta0},
                              config.p, t_max=config.t_max)
    stride = max(1, len(run.t_trace) // 200)
    rows = [{"t": float(run.t_trace[i]), "sup": float(run.sup_trace[i])}
            for i in range(0, len(run.t_trace), stride)]
    summary = {"kind": "blowup-fit", "That": run.That,
               "C_fit": run.fit.get("C", math.nan),
               "T_err_vs_ode": abs(run.That - 1.0), "halted": run.halted}
    grid = wspace.build_grid(int(config.n), config.p)
    frames = evolve.to_selfsimilar(run, config.x0, run.That, grid=grid)
    k0 = stationary.kappa0(config.p)
    last = frames[-1]
    dev = wspace.norms(wspace.StateField(
        grid, last.first - k0, last.second))["H"]
    summary["selfsimilar_dev_H"] = dev
    summary["s_last"] = float(last.meta["s"])
    return rows, summary


def run_experiment(config):
    """Execute one scenario, write its runlog, return the RunLog."""
    config.validate()
    if config.scenario == "sweep":
        raise ValueError("scenario 'sweep' runs through the sweep command "
                         "with --axis arguments")
    os.makedirs(config.outdir, exist_ok=True)
    if config.scenario == "physical-blowup":
        rows, summary = _scenario_physical(config)
        log = RunLog(header=_header_for(config), records=rows,
                     summary=summary)
    else:
        grid = wspace.build_grid(int(config.n), config.p)
        if config.scenario == "trapping":
            rows, summary, _ = _scenario_trapping(config, grid)
        elif config.scenario == "escape":
            rows, summary, _ = _scenario_escape(config, grid)
        elif config.scenario == "stationary-residual":
            rows, summary, _ = _scenario_stationary(config, grid)
        elif config.scenario == "eigen-audit":
            rows, summary, _ = _scenario_eigen_audit(config, grid)
        elif config.scenario == "operator-duality":
            rows, summary, _ = _scenario_operator_duality(config, grid)
        else:
            raise ValueError(f"unhandled scenario {config.scenario!r}")
        log = RunLog(header=_header_for(config, grid), records=rows,
                     summary=summary)
    path = os.path.join(config.outdir, config.run_name() + ".runlog")
    write_runlog(log, path)
    return log


def _sweep_cell(payload):
    index, kwargs = payload
    try:
        config = ExperimentConfig(**kwargs).validate()
        log = run_experiment(config)
        out = {"cell": index, "status": "ok", "runlog": log.path}
        for key, value in log.summary.items():
            out[f"summary_{key}"] = value
        return out
    except Exception as err:  # per-cell isolation: record and move on
        return {"cell": index, "status": "error", "error": str(err)[:200]}


def sweep(base, axes, max_workers=None):
    """Run the cross product of axes over a base config, in parallel.

    Returns the aggregate rows (one per cell, failures included) and
    writes them as a CSV table in the base output directory.
    """
    base.validate()
    names = sorted(axes)
    shape = [len(axes[k]) for k in names]
    total = int(np.prod(shape)) if names else 1
    if total > SWEEP_CAP:
        raise ValueError(f"sweep size {total} exceeds the cap {SWEEP_CAP}")
    cells = []
    for flat in range(total):
        values = {}
        rem = flat
        for name, size in zip(names, shape):
            values[name] = axes[name][rem % size]
            rem //= size
        kwargs = asdict(base)
        kwargs.update(values)
        slug = "-".join(f"{k}{_fmt(values[k])}" for k in names) or "single"
        kwargs["outdir"] = os.path.join(base.outdir, f"cell-{flat}-{slug}")
        cells.append((flat, kwargs, values))
    rows = []
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        for (flat, kwargs, values), result in zip(
                cells, pool.map(_sweep_cell, [(c[0], c[1]) for c in cells])):
            for name in names:
                result[name] = values[name]
            rows.append(result)
    rows.sort(key=lambda r: r["cell"])
    os.makedirs(base.outdir, exist_ok=True)
    table_path = os.path.join(base.outdir, f"sweep-{base.scenario}.csv")
    keys = []
    for row in rows:
        for key in row:
            if key not in keys:
                keys.append(key)
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if not isinstance(v, str) else v
                             for k, v in row.items()})
    return rows, table_path


def export(run, fmt, outdir=None):
    """Write a run as line records or a CSV table; returns the path."""
    if run.path is None and outdir is None:
        raise ValueError("export needs a source path or an outdir")
    base = os.path.splitext(run.path)[0] if run.path else \
        os.path.join(outdir, "run")
    if outdir is not None:
        base = os.path.join(outdir, os.path.basename(base))
    if fmt == "records":
        path = base + ".records.log"
        write_log = RunLog(header=run.header, records=run.records,
                           summary=run.summary)
        write_runlog(write_log, path)
        return path
    if fmt == "table":
        path = base + ".csv"
        fields = run.record_fields()
        if run.header.get("scenario") in ("trapping", "escape") and fields:
            fields = [c for c in TABLE_COLUMNS if c in fields] + \
                [c for c in fields if c not in TABLE_COLUMNS]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for rec in run.records:
                writer.writerow([_fmt(rec.get(k, "")) for k in fields])
        return path
    raise ValueError(f"unknown export format {fmt!r}")


def _parse_axis(text):
    name, _, raw = text.partition("=")
    if not raw:
        raise ValueError(f"axis {text!r} wants name=v1,v2,...")
    values = [_parse_token(tok) for tok in raw.split(",") if tok]
    if not values:
        raise ValueError(f"axis {text!r} carries no values")
    return name.strip(), values


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lab", description="experiment runner for the blow-up "
        "profile laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one scenario from a config")
    p_run.add_argument("--config", required=True)
    p_sweep = sub.add_parser("sweep", help="run a parameter grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", action="append", default=[],
                         help="name=v1,v2,... (repeatable)")
    p_exp = sub.add_parser("export", help="export a runlog")
    p_exp.add_argument("runlog")
    p_exp.add_argument("--format", choices=("records", "table"),
                       default="table")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
        elif args.command == "sweep":
            config = load_config(args.config)
            axes = dict(_parse_axis(a) for a in args.axis)
        else:
            if not os.path.exists(args.runlog):
                raise ValueError(f"runlog not found: {args.runlog}")
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            log = run_experiment(config)
            print(f"wrote {log.path}")
            for key, value in log.summary.items():
                print(f"  {key} = {_fmt(value)}")
        elif args.command == "sweep":
            rows, table = sweep(config, axes)
            failures = sum(1 for r in rows if r["status"] != "ok")
            print(f"wrote {table} ({len(rows)} cells, {failures} failed)")
        else:
            run = parse_runlog(args.runlog)
            path = export(run, args.format)
            print(f"wrote {path}")
    except ValueError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    except Exception as err:
        print(f"scenario failed: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
