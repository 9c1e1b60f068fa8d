"""Command line front end for the exploration toolkit.

Subcommands: model-curve, characterize, simulate, sweep, fit, recommend.
Settings come from an INI-style config file (see README) with flag
overrides; flags win. All outputs are CSV or plain text, written into
the --out directory, and byte-identical across runs for the same config
and seed. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .characterize import (GammaFit, WorkloadStats, characterize, fit_gamma,
                           stats_report, stats_to_csv)
from .isa import FP_CLASSES, OpClass, class_counts
from .kernels import (GenerationError, KernelBundle, KernelKind, KernelSpec,
                      Schedule, generate)
from .model import (HazardProfile, TechnologyParams, optimal_depth,
                    round_depth, sweep_depth, sweep_gamma, sweep_workload,
                    tpi_single)
from .sim import PipelineConfig, SimReport, cycle_time, run, sweep

__all__ = ["main", "DEFAULT_TECHNOLOGY"]

DEFAULT_TECHNOLOGY = TechnologyParams(
    latch_overhead=0.1,
    logic_delay={OpClass.MUL: 8.0, OpClass.ADD: 8.0,
                 OpClass.SQRT: 24.0, OpClass.DIV: 24.0},
)
# Artifact defaults, chosen to put the interesting optima in the
# single-digit to low-teens range; override via [technology].


class _UsageError(Exception):
    pass


def _parse_classes(text: str) -> list[OpClass]:
    names = [t.strip().lower() for t in text.split(",") if t.strip()]
    by_name = {cls.value: cls for cls in FP_CLASSES}
    out = []
    for name in names:
        if name not in by_name:
            raise _UsageError(f"unknown class {name!r}; pick from "
                              f"{', '.join(by_name)}")
        out.append(by_name[name])
    if not out:
        raise _UsageError("no classes selected")
    return out


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


class _Settings:
    """Config file values with flag overrides on top."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cp = configparser.ConfigParser()
        if args.config:
            path = Path(args.config)
            if not path.is_file():
                raise OSError(f"config file not found: {path}")
            self.cp.read(path)

    def get(self, section: str, key: str, default: str) -> str:
        flag = getattr(self.args, key.replace("-", "_"), None) if section != "_" \
            else None
        if flag is not None:
            return str(flag)
        if self.cp.has_option(section, key):
            return self.cp.get(section, key)
        return default

    def technology(self) -> TechnologyParams:
        sec = "technology"
        latch = float(self.get(sec, "latch_overhead",
                               str(DEFAULT_TECHNOLOGY.latch_overhead)))
        delays = {}
        for cls in FP_CLASSES:
            delays[cls] = float(self.get(
                sec, cls.value, str(DEFAULT_TECHNOLOGY.logic_delay[cls])))
        return TechnologyParams(latch, delays)

    def kernel_spec(self) -> KernelSpec:
        name = self._flag_or("kernel", "kernel", "name", "ddot").lower()
        kinds = {k.value: k for k in KernelKind}
        if name not in kinds:
            raise _UsageError(f"unknown kernel {name!r}; pick from "
                              f"{', '.join(kinds)}")
        kind = kinds[name]
        dims_text = self._flag_or("dims", "kernel", "dims", "64")
        dims = tuple(_parse_ints(dims_text))
        needed = {KernelKind.DDOT: 1, KernelKind.DGEMV: 2, KernelKind.DGEMM: 3,
                  KernelKind.DGEQRF: 2, KernelKind.DGETRF: 1}[kind]
        if len(dims) == 1 and needed > 1:
            dims = dims * needed
        if len(dims) != needed:
            raise _UsageError(f"{name} takes {needed} dimension(s), got "
                              f"{len(dims)}")
        schedule_name = self._flag_or("schedule", "kernel", "schedule",
                                      "asap").lower()
        schedules = {s.value: s for s in Schedule}
        if schedule_name not in schedules:
            raise _UsageError(f"unknown schedule {schedule_name!r}; pick from "
                              f"{', '.join(schedules)}")
        seed = int(self._flag_or("seed", "kernel", "seed", "7"))
        try:
            return KernelSpec(kind, dims, schedules[schedule_name], seed)
        except ValueError as exc:
            raise _UsageError(str(exc)) from exc

    def window(self) -> int:
        w = int(self._flag_or("window", "kernel", "window", "4"))
        if w < 1:
            raise _UsageError("window must be >= 1")
        return w

    def num_registers(self) -> int:
        return int(self.get("kernel", "registers", "64"))

    def pipeline(self) -> PipelineConfig:
        sec = "pipeline"
        mem = int(self._flag_or("mem_latency", sec, "mem_latency", "2"))
        return PipelineConfig(
            mul_depth=int(self.get(sec, "mul", "1")),
            add_depth=int(self.get(sec, "add", "1")),
            sqrt_depth=int(self.get(sec, "sqrt", "1")),
            div_depth=int(self.get(sec, "div", "1")),
            mem_latency=mem,
            num_registers=self.num_registers(),
        )

    def depth_range(self) -> range:
        lo = int(self._flag_or("p_min", "sweep", "p_min", "1"))
        hi = int(self._flag_or("p_max", "sweep", "p_max", "16"))
        if lo < 1 or hi < lo:
            raise _UsageError(f"empty or invalid depth range {lo}..{hi}")
        return range(lo, hi + 1)

    def classes(self) -> list[OpClass]:
        text = self._flag_or("classes", "sweep", "classes",
                             "mul,add,sqrt,div")
        return _parse_classes(text)

    def out_dir(self) -> Path:
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def _flag_or(self, flag: str, section: str, key: str, default: str) -> str:
        value = getattr(self.args, flag, None)
        if value is not None:
            return str(value)
        if self.cp.has_option(section, key):
            return self.cp.get(section, key)
        return default


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str],
               rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _oracle_error(report: SimReport, bundle: KernelBundle) -> float:
    """Largest deviation from the expected outputs, relative to their
    magnitude scale."""
    expected = bundle.expected_outputs
    scale = max((abs(v) for v in expected.values()), default=0.0) or 1.0
    worst = 0.0
    for addr, value in expected.items():
        worst = max(worst, abs(report.final_memory[addr] - value))
    return worst / scale


# ---------------------------------------------------------------------------
# subcommands


def cmd_model_curve(args: argparse.Namespace) -> int:
    s = _Settings(args)
    tech = s.technology()
    out = s.out_dir()
    t_o = tech.latch_overhead
    t_p = tech.logic_delay[OpClass.MUL]
    gamma = float(s.get("model", "gamma", "0.5"))
    ratios = _parse_floats(s.get("model", "hazard_ratios",
                                 "0.001,0.01,0.1,0.2,0.4,0.6,0.8"))
    gammas = _parse_floats(s.get("model", "gammas", "0.1,0.2,0.4,0.6,0.8"))
    wl_ratios = _parse_floats(s.get("model", "workload_ratios", "0.1,0.01,0.001"))
    wl_depths = _parse_ints(s.get("model", "workload_depths", "2,4,6,8"))
    d_lo = int(s.get("model", "depth_min", "1"))
    d_hi = int(s.get("model", "depth_max", "48"))
    if d_lo < 1 or d_hi < d_lo:
        raise _UsageError(f"empty or invalid model depth range {d_lo}..{d_hi}")
    depths = range(d_lo, d_hi + 1)
    nominal_n = float(s.get("model", "instructions", "1000000"))

    sizes = sorted(set(int(v) for v in np.geomspace(1e2, 1e7, 26)))
    rows = []
    for ratio in wl_ratios:
        for depth in wl_depths:
            curve = sweep_workload(ratio, gamma, t_o, t_p, depth, sizes)
            rows.extend((ratio, depth, int(x), y) for x, y in curve.points)
    _write_csv(out / "workload_sweep.csv",
               ["hazard_ratio", "depth", "instructions", "tpi"], rows)

    rows = []
    for ratio in ratios:
        profile = HazardProfile(nominal_n, ratio * nominal_n, gamma)
        curve = sweep_depth(profile, t_o, t_p, depths)
        rows.extend((ratio, int(x), y) for x, y in curve.points)
    _write_csv(out / "depth_sweep.csv", ["hazard_ratio", "depth", "tpi"], rows)

    base_ratio = float(s.get("model", "gamma_sweep_ratio", "0.1"))
    rows = []
    for g, curve in sweep_gamma(nominal_n, base_ratio * nominal_n, gammas,
                                t_o, t_p, depths):
        rows.extend((g, int(x), y) for x, y in curve.points)
    _write_csv(out / "gamma_sweep.csv", ["gamma", "depth", "tpi"], rows)
    print(f"wrote 3 curve families to {out}")
    return 0


def cmd_characterize(args: argparse.Namespace) -> int:
    s = _Settings(args)
    spec = s.kernel_spec()
    bundle = generate(spec, s.num_registers())
    stats = characterize(bundle, s.window())
    out = s.out_dir()
    (out / "stats.csv").write_text(stats_to_csv(stats), encoding="utf-8")
    header = (f"kernel {spec.kind.value} dims={','.join(map(str, spec.dims))} "
              f"schedule={spec.schedule.value} seed={spec.seed}\n\n")
    (out / "report.txt").write_text(header + stats_report(stats),
                                    encoding="utf-8")
    print(f"wrote {out / 'stats.csv'} and {out / 'report.txt'}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    s = _Settings(args)
    spec = s.kernel_spec()
    bundle = generate(spec, s.num_registers())
    config = s.pipeline()
    report = run(bundle.program, bundle.inputs, config)
    out = s.out_dir()
    rows = [
        ("total_cycles", report.total_cycles),
        ("busy_cycles", report.busy_cycles),
        ("nonbusy_cycles", report.nonbusy_cycles),
        ("cpi", report.cpi),
        ("oracle_max_rel_err", _oracle_error(report, bundle)),
    ]
    for cls in report.issued:
        rows.append((f"issued_{cls.value}", report.issued[cls]))
    for cls in report.stall_cycles:
        rows.append((f"stalls_{cls.value}", report.stall_cycles[cls]))
    _write_csv(out / "sim_report.csv", ["metric", "value"], rows)
    print(f"wrote {out / 'sim_report.csv'} "
          f"(cycles={report.total_cycles}, cpi={report.cpi:.4f})")
    return 0


_STALL_COLUMNS = [f"stall_{cls.value}" for cls in
                  (OpClass.MUL, OpClass.ADD, OpClass.SQRT, OpClass.DIV,
                   OpClass.LOAD, OpClass.STORE)]


def _class_sweeps(s: _Settings):
    """Shared sweep machinery: generate, characterize, sweep each requested
    populated class, and fit gamma where hazards allow it."""
    spec = s.kernel_spec()
    bundle = generate(spec, s.num_registers())
    stats = characterize(bundle, s.window())
    tech = s.technology()
    base = s.pipeline()
    depths = list(s.depth_range())
    populated = [cls for cls in FP_CLASSES if stats.counts[cls] > 0]
    results = []
    for cls in s.classes():
        if cls not in populated:
            continue
        runs = sweep(bundle.program, bundle.inputs, base, cls, depths)
        points = [(base.with_depth(cls, p).depths(), rep.class_cpi(cls))
                  for p, rep in runs]
        fit: GammaFit | None = None
        fit_error = ""
        if stats.hazards[cls] > 0:
            try:
                fit = fit_gamma(stats, tech, points, cls)
            except ValueError as exc:
                fit_error = str(exc)
        results.append((cls, runs, fit, fit_error))
    return spec, bundle, stats, tech, base, results, populated


def cmd_sweep(args: argparse.Namespace) -> int:
    s = _Settings(args)
    spec, bundle, stats, tech, base, results, populated = _class_sweeps(s)
    t_o = tech.latch_overhead
    rows = []
    for cls, runs, fit, _ in results:
        t_p = tech.logic_delay[cls]
        gamma = fit.gamma if fit is not None else None
        for p, rep in runs:
            stage = t_p / p + t_o
            config = base.with_depth(cls, p)
            tau = cycle_time(config, tech, populated)
            if stats.hazards[cls] == 0:
                profile = HazardProfile(stats.counts[cls], 0, 0.0)
                model = tpi_single(profile, t_o, t_p, p)
            elif gamma is not None:
                profile = HazardProfile(stats.counts[cls], stats.hazards[cls],
                                        gamma)
                model = tpi_single(profile, t_o, t_p, p)
            else:
                model = ""
            rows.append([cls.value, p, rep.cpi, rep.class_cpi(cls), tau,
                         tau * rep.cpi, stage * rep.class_cpi(cls), model]
                        + [rep.stall_cycles[c] for c in
                           (OpClass.MUL, OpClass.ADD, OpClass.SQRT,
                            OpClass.DIV, OpClass.LOAD, OpClass.STORE)])
    out = s.out_dir()
    _write_csv(out / "sweep.csv",
               ["class", "depth", "cpi", "class_cpi", "cycle_time", "wall_tpi",
                "pipe_tpi", "model_tpi"] + _STALL_COLUMNS, rows)
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    s = _Settings(args)
    spec, bundle, stats, tech, base, results, _ = _class_sweeps(s)
    rows = []
    for cls, runs, fit, fit_error in results:
        if fit is not None:
            rows.append([cls.value, fit.gamma, fit.raw_gamma, fit.intercept,
                         fit.residual_rms, fit.n_points])
        else:
            reason = fit_error or "no hazards"
            rows.append([cls.value, "", "", "", "", reason])
    out = s.out_dir()
    _write_csv(out / "fit.csv",
               ["class", "gamma", "raw_gamma", "intercept", "residual_rms",
                "points"], rows)
    print(f"wrote {out / 'fit.csv'}")
    return 0


def cmd_recommend(args: argparse.Namespace) -> int:
    s = _Settings(args)
    spec, bundle, stats, tech, base, results, populated = _class_sweeps(s)
    t_o = tech.latch_overhead
    rows = []
    lines = [f"pipeline depth recommendation for {spec.kind.value} "
             f"dims={','.join(map(str, spec.dims))} "
             f"schedule={spec.schedule.value} seed={spec.seed}", ""]
    for cls, runs, fit, fit_error in results:
        t_p = tech.logic_delay[cls]
        n_i = stats.counts[cls]
        n_h = stats.hazards[cls]
        # Simulated per-pipe time: the pipe's own stage length times its
        # measured cycles per instruction; its argmin is the empirical
        # optimum for this class.
        sim_tpi = [(p, (t_p / p + t_o) * rep.class_cpi(cls)) for p, rep in runs]
        argmin_p = min(sim_tpi, key=lambda pv: pv[1])[0]
        if n_h == 0:
            note = ("no finite optimum: hazard-free pipe, deeper is never "
                    "slower; depth-insensitive, choose by frequency target")
            rows.append([cls.value, n_i, n_h, "", "", "", argmin_p, "", note])
            lines.append(f"{cls.value}: {note}")
            continue
        if fit is None:
            note = f"gamma fit failed: {fit_error}"
            rows.append([cls.value, n_i, n_h, "", "", "", argmin_p, "", note])
            lines.append(f"{cls.value}: {note}")
            continue
        profile = HazardProfile(n_i, n_h, fit.gamma)
        p_opt = optimal_depth(profile, t_o, t_p)
        rounded = round_depth(profile, t_o, t_p, p_opt)
        delta = abs(p_opt - argmin_p)
        note = "model and simulation agree" if delta <= 2 else \
            "model and simulation disagree; inspect sweep.csv"
        rows.append([cls.value, n_i, n_h, fit.gamma, p_opt, rounded, argmin_p,
                     delta, note])
        lines.append(f"{cls.value}: gamma={fit.gamma:.4f}  "
                     f"p_opt={p_opt:.2f} (use {rounded})  "
                     f"simulated argmin={argmin_p}  delta={delta:.2f}")
    out = s.out_dir()
    _write_csv(out / "recommend.csv",
               ["class", "instructions", "hazards", "gamma", "p_opt",
                "p_opt_rounded", "sim_argmin", "delta", "note"], rows)
    (out / "recommend.txt").write_text("\n".join(lines) + "\n",
                                       encoding="utf-8")
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipedepth",
        description="Explore optimum pipeline depths of floating point units "
                    "for dense linear algebra workloads.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", default="pipedepth_out",
                       help="output directory (default: pipedepth_out)")
        p.add_argument("--seed", type=int, help="input data seed")
        p.add_argument("--kernel",
                       help="ddot | dgemv | dgemm | dgeqrf | dgetrf")
        p.add_argument("--dims", help="comma-separated dimensions, e.g. 32,32")
        p.add_argument("--schedule", help="asap | program-order")
        p.add_argument("--window", type=int, help="hazard window W")
        p.add_argument("--p-min", type=int, dest="p_min")
        p.add_argument("--p-max", type=int, dest="p_max")
        p.add_argument("--classes", help="comma-separated FP classes to sweep")
        p.add_argument("--mem-latency", type=int, dest="mem_latency")

    for name, func, help_text in [
        ("model-curve", cmd_model_curve,
         "emit the three theoretical curve families as CSV"),
        ("characterize", cmd_characterize,
         "generate a kernel and write its workload statistics"),
        ("simulate", cmd_simulate,
         "run one kernel at the configured depths and report cycles"),
        ("sweep", cmd_sweep,
         "sweep pipe depths per class and join simulated and model tpi"),
        ("fit", cmd_fit, "fit gamma per class from a depth sweep"),
        ("recommend", cmd_recommend,
         "report fitted gamma, closed-form optimum, and simulated argmin"),
    ]:
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (GenerationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
