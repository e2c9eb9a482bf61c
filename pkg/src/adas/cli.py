"""Command-line front end: ``adas {run,twin,sweep,calibrate,check,inspect-snapshot}``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .assimilation import (
    SweepCell,
    SyncSeries,
    calibrate,
    check_conditions,
    decades_of_decay,
    decay_window,
    estimate_decay_rate,
    measured_c0,
    run_twin,
    sweep,
)
from .config import ConfigError, RunConfig, canonical_text, content_hash, parse_config
from .diagnostics import DiagnosticsRecord, grashof, make_record, monitor_bounds
from .models import NumericalInstabilityError, State, step, write_checkpoint
from .spectral import (
    norm_grad,
    norm_l2,
    random_divfree_field,
    read_snapshot,
    read_snapshot_header,
    set_fft_workers,
)

log = logging.getLogger("adas")

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _fmt(x):
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def config_header(cfg: RunConfig, command: str) -> str:
    text = canonical_text(cfg)
    lines = [f"# adas {command}", f"# input-sha1: {content_hash(text)}", "# config:"]
    lines += [f"#   {line}" for line in text.splitlines()]
    return "\n".join(lines) + "\n"


def write_csv(path, header: str, columns, rows) -> Path:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def read_csv_table(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_series_csv(path, cfg, series: SyncSeries, command="twin"):
    return write_csv(path, config_header(cfg, command), SyncSeries.COLUMNS, series.rows())


def _kv(path, pairs):
    text = "".join(f"{k} = {_fmt(v)}\n" for k, v in pairs)
    Path(path).write_text(text)
    return text


# commands ------------------------------------------------------------------

def cmd_run(cfg: RunConfig) -> int:
    """Single reference simulation with diagnostics CSV and final checkpoint."""
    grid, model, forcing = cfg.grid(), cfg.model(), cfg.forcing()
    t = cfg.data["time"]
    G = grashof(forcing.field(grid), model.nu, grid.lambda1)
    energy = cfg.data["initial"]["energy_velocity2_length3"]
    if energy is None:
        energy = 0.5 * model.nu**2 * grid.lambda1**-0.5 * G**2 if G > 0 else 1.0
    state = State(random_divfree_field(grid, energy, cfg.data["initial"]["shells"], cfg.seed))
    a = cfg.data["assimilation"]
    c_tilde = a["c_tilde"] if a else 1.0
    nsteps = int(round(t["t_end_time"] / t["dt_time"]))
    records = [make_record(state.v, 0.0, model.nu, model.alpha, G, c_tilde)]
    for n in range(1, nsteps + 1):
        state = step(model, state, forcing, t["dt_time"])
        if n % cfg.sample_every == 0 or n == nsteps:
            records.append(make_record(state.v, state.t, model.nu, model.alpha, G, c_tilde))
    out = cfg.output_dir
    write_csv(out / "diagnostics.csv", config_header(cfg, "run"), DiagnosticsRecord.COLUMNS,
              (r.row() for r in records))
    write_checkpoint(out / "final.snap", model, state, t["dt_time"], cfg.seed)
    spin = t["spin_up_time"] or 0.0
    rep = monitor_bounds(records, model.nu, grid.lambda1, G, model.alpha, c_tilde, tau=1.0, spin_up=spin)
    text = _kv(out / "bounds.txt", [
        ("grashof", G), ("suppressed", rep.suppressed), ("flags", ",".join(rep.flags) or "none"),
        ("max_window_enstrophy_integral", rep.max_window_integral), ("enstrophy_integral_bound", rep.integral_bound),
    ])
    log.info("run finished at t=%g\n%s", state.t, text)
    return EXIT_OK


def cmd_twin(cfg: RunConfig) -> int:
    acfg = cfg.assimilation()
    series = run_twin(acfg)
    out = cfg.output_dir
    write_series_csv(out / "series.csv", cfg, series)
    dt = acfg.dt
    write_checkpoint(out / "reference.snap", acfg.model, series.final_reference, dt, cfg.seed)
    write_checkpoint(out / "assimilated.snap", acfg.model, series.final_assimilated, dt, acfg.v_star_seed)
    pairs = [("grashof", series.G), ("c0", series.c0), ("cond1", series.cond1), ("cond2", series.cond2),
             ("decades", decades_of_decay(series)), ("floor_time", series.floor_time),
             ("final_err_L2", series.err_L2[-1])]
    try:
        pairs.append(("decay_rate", estimate_decay_rate(series, decay_window(series), min_samples=3).rate))
    except ValueError:
        pass
    log.info("twin summary\n%s", _kv(out / "twin_summary.txt", pairs))
    return EXIT_OK


def _sweep_cells(cfg: RunConfig, threads: int) -> list[SweepCell]:
    s = cfg.data["sweep"]
    base = cfg.assimilation()
    # gamma0 is a property of the observer family, measured once for the sweep
    base = replace(base, c0=measured_c0(base))
    out = cfg.output_dir
    header = config_header(cfg, "sweep")

    def persist(cells):
        write_csv(out / "sweep.csv", header, SweepCell.COLUMNS, (c.row() for c in cells))

    cells = sweep(s["mu_values_per_time"], s["h_values_length"], base, workers=threads,
                  decades_required=s["converge_decades"], keep_series=s["write_series"], on_cell=persist)
    if s["write_series"]:
        for i, c in enumerate(cells):
            if c.series is not None:
                write_series_csv(out / f"series_{i:03d}.csv", cfg, c.series, "sweep")
    return cells


def cmd_sweep(cfg: RunConfig, threads: int = 1) -> int:
    if cfg.data["sweep"] is None:
        raise ConfigError(["sweep command needs a sweep section"])
    cells = _sweep_cells(cfg, threads)
    for c in cells:
        log.info("mu=%g h=%g -> %s (%.2f decades)", c.mu, c.h, c.verdict, c.decades)
    return EXIT_OK


def _cells_from_csv(path) -> list[SweepCell]:
    cells = []
    for r in read_csv_table(path):
        cells.append(SweepCell(float(r["mu"]), float(r["h"]), r["verdict"], float(r["decades"]), float(r["rate"]),
                               r["cond1"] == "1", r["cond2"] == "1", float(r["mu_threshold"]), float(r["h2_max"]),
                               r["error"]))
    return cells


def cmd_calibrate(cfg: RunConfig, sweep_csv=None, threads: int = 1) -> int:
    if sweep_csv is not None:
        cells = _cells_from_csv(sweep_csv)
    else:
        if cfg.data["sweep"] is None:
            raise ConfigError(["calibrate needs a sweep section or --sweep-csv"])
        cells = _sweep_cells(cfg, threads)
    acfg = cfg.assimilation()
    grid, model = acfg.grid, acfg.model
    G = acfg.grashof
    cal = calibrate(cells, model.nu, model.alpha, grid.lambda1, G)
    pairs = [("cc_tilde", cal.cc_tilde), ("mu_boundary", cal.mu_boundary), ("upward_closed", cal.upward_closed),
             ("violations", ";".join(f"{m!r}:{h!r}" for m, h in cal.violations) or "none"),
             ("grashof", G), ("cells", len(cells))]
    text = _kv(cfg.output_dir / "calibration.txt", pairs)
    log.info("calibration\n%s", text)
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    acfg = cfg.assimilation()
    a = cfg.data["assimilation"]
    model, grid = acfg.model, acfg.grid
    G = acfg.grashof
    c0 = measured_c0(acfg)
    rep = check_conditions(model.nu, model.alpha, grid.lambda1, G, acfg.mu, acfg.observer.h, c0,
                           a["c_const"], a["c_tilde"])
    pairs = [("grashof", G), ("lambda1", grid.lambda1), ("c0", c0), ("c_times_c_tilde", a["c_const"] * a["c_tilde"]),
             ("mu", acfg.mu), ("h", acfg.observer.h), ("mu_threshold", rep.mu_threshold),
             ("h2_max", rep.h2_max), ("cond1", rep.cond1), ("cond2", rep.cond2)]
    text = _kv(cfg.output_dir / "check.txt", pairs)
    print(text, end="")
    return EXIT_OK


def cmd_inspect(path) -> int:
    head = read_snapshot_header(path)
    f = read_snapshot(path)
    pairs = list(head.items()) + [("l2_norm", norm_l2(f)), ("grad_norm", norm_grad(f))]
    if f.is_vector:
        pairs.append(("divergence_residual", f.divergence_residual()))
    print("".join(f"{k} = {_fmt(v)}\n" for k, v in pairs), end="")
    return EXIT_OK


# entry point ---------------------------------------------------------------

def _threads(arg):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("ADAS_THREADS")
    return max(1, int(env)) if env else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adas", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "twin", "sweep", "calibrate", "check"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--quiet", action="store_true")
        if name == "calibrate":
            sp.add_argument("--sweep-csv", type=Path)
    sp = sub.add_parser("inspect-snapshot")
    sp.add_argument("path", type=Path)
    sp.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.command == "inspect-snapshot":
        return cmd_inspect(args.path)
    threads = _threads(args.threads)
    set_fft_workers(threads)
    kernels.set_num_threads(threads)
    try:
        cfg = parse_config(args.config).with_overrides(seed=args.seed, out=args.out)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if not args.quiet:
        log.info("# configuration\n%s", canonical_text(cfg))
    try:
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "twin":
            return cmd_twin(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, threads)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args.sweep_csv, threads)
        return cmd_check(cfg)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except NumericalInstabilityError as e:
        print(f"fatal numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
