"""Command-line front end: convergence tables, error-growth series, single-step dumps.

Exit codes: 0 success, 2 configuration or usage error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .casimir import DegenerateCasimirDirection, step_with_casimir
from .core import SOLVERS, ConvergenceError, SolverConfig, rho_hat, stage_state, step
from .driver import METHODS, ExperimentRecord, StepFailure, convergence_table, growth_study, resolve_method
from .problems import PRESETS, DomainError, preset
from .tableau import build_tableau

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

N_CAP = 6400
PERIOD_CAP = 20
_DOUBLING = (50, 100, 200, 400, 800, 1600, 3200, 6400)

# (problem, method, k, s, n values) per block of a published table
_TABLE_PRESETS = {
    "table1": [("lv2", "gauss", 1, 1, _DOUBLING), ("lv2", "phbvm", 4, 1, _DOUBLING),
               ("lv2", "gauss", 2, 2, _DOUBLING), ("lv2", "phbvm", 4, 2, _DOUBLING),
               ("lv2", "gauss", 3, 3, _DOUBLING[:5]), ("lv2", "phbvm", 6, 3, _DOUBLING[:5])],
    "table2": [("lv3", "gauss", 1, 1, _DOUBLING), ("lv3", "phbvm", 4, 1, _DOUBLING),
               ("lv3", "gauss", 2, 2, _DOUBLING), ("lv3", "phbvm", 4, 2, _DOUBLING),
               ("lv3", "gauss", 3, 3, _DOUBLING[:5]), ("lv3", "phbvm", 6, 3, _DOUBLING[:5])],
    "table3": [("lv3", "ephbvm", 4, 1, _DOUBLING), ("lv3", "ephbvm", 4, 2, _DOUBLING),
               ("lv3", "ephbvm", 6, 3, _DOUBLING[:5])],
}
# (problem, [(method, k, s)]) for the long-time studies, h = T/100
_GROWTH_PRESETS = {
    "fig2": ("lv2", [("gauss", 3, 3), ("phbvm", 6, 3)]),
    "fig4": ("lv3", [("gauss", 3, 3), ("phbvm", 6, 3)]),
    "fig5": ("lv3", [("ephbvm", 6, 3)]),
}
PRESET_NAMES = tuple(_TABLE_PRESETS) + tuple(_GROWTH_PRESETS)

GROWTH_FIELDS = ("method", "k", "s", "period", "e_y", "e_H", "e_C")


class ConfigError(ValueError):
    """Invalid flag combination."""


@dataclass
class RunConfig:
    command: str
    problem: str
    method: str
    k: Optional[int]
    s: int
    n_list: list
    h_per_period: int
    periods: int
    solver: str
    tol: float
    max_iter: int
    output: Optional[str]
    format: str
    preset: Optional[str] = None
    warm_start: bool = False

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.solver, self.tol, self.max_iter, warm_start=self.warm_start)


def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phbvm",
        description="Energy- and Casimir-conserving PHBVM(k,s) integrators for Poisson systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", choices=PRESETS, default="lv2", help="benchmark problem (default: lv2)")
    common.add_argument("--method", choices=METHODS, default="phbvm",
                        help="gauss is PHBVM(s,s); ephbvm needs a problem with a Casimir")
    common.add_argument("--k", type=int, default=None, help="quadrature nodes (default: s for gauss, else required)")
    common.add_argument("--s", type=int, default=1, help="polynomial degree / stages (default: 1)")
    common.add_argument("--periods", type=int, default=None,
                        help=f"number of periods to integrate (default: 1, growth: {PERIOD_CAP})")
    common.add_argument("--solver", choices=SOLVERS, default="blended")
    common.add_argument("--tol", type=float, default=1e-14, help="relative nonlinear tolerance")
    common.add_argument("--max-iter", type=int, default=100)
    common.add_argument("--warm-start", action="store_true", help="start each solve from the previous step")
    common.add_argument("--output", "-o", default=None, help="output file (written atomically)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    presets_help = (
        "run a published configuration: table1/table2 (lv2/lv3, Gauss and PHBVM), table3 (lv3, EPHBVM), "
        "fig2/fig4/fig5 (error growth, h=T/100). Desk-scaled: n at most "
        f"{N_CAP}, at most {PERIOD_CAP} periods. One output file per block, suffixed with the method."
    )
    p_table = sub.add_parser("table", parents=[common], help="convergence table over several n (h = T/n)")
    p_table.add_argument("--n", type=_int_list, default=[50, 100, 200], help="comma-separated steps per period")
    p_table.add_argument("--preset", choices=tuple(_TABLE_PRESETS), default=None, help=presets_help)

    p_growth = sub.add_parser("growth", parents=[common], help="errors at each period boundary")
    p_growth.add_argument("--h-per-period", type=int, default=100, help="steps per period (h = T/value)")
    p_growth.add_argument("--preset", choices=tuple(_GROWTH_PRESETS), default=None, help=presets_help)

    p_dbg = sub.add_parser("step-debug", parents=[common], help="one step from the initial state, with internals")
    p_dbg.add_argument("--n", type=_int_list, default=[100], help="h = T/n (first value used)")
    return parser


def _validate(cfg: RunConfig) -> None:
    try:
        resolve_method(cfg.method, cfg.k, cfg.s)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if cfg.method == "ephbvm" and preset(cfg.problem).system.r == 0:
        raise ConfigError(f"ephbvm needs a problem with a Casimir; {cfg.problem} has none")
    if cfg.periods < 1:
        raise ConfigError("--periods must be positive")
    if cfg.command == "growth" and cfg.periods < 5:
        raise ConfigError("growth needs at least 5 periods")
    if cfg.max_iter < 1 or not cfg.tol > 0:
        raise ConfigError("--tol must be positive and --max-iter at least 1")
    if any(n < 1 for n in cfg.n_list) or cfg.h_per_period < 1:
        raise ConfigError("step counts must be positive")


def _fmt(x) -> str:
    if x is None:
        return "---"
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return f"{x:.2e}"


def _fmt_rate(x) -> str:
    return "**" if x is None else f"{x:.1f}"


def summary_line(rec: ExperimentRecord) -> str:
    parts = [f"n={rec.n:>6d}", f"e_y={_fmt(rec.e_y)}", f"rate={_fmt_rate(rec.rate_y)}",
             f"e_H={_fmt(rec.e_H)}", f"rate={_fmt_rate(rec.rate_H)}"]
    if rec.e_C is not None:
        parts += [f"e_C={_fmt(rec.e_C)}", f"rate={_fmt_rate(rec.rate_C)}"]
    parts += [f"it={rec.mean_iterations:.1f}", f"time={rec.time_sec:.2f}s"]
    return "  ".join(parts)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_table(records: Sequence[ExperimentRecord], fmt: str) -> str:
    rows = [r.as_row() for r in records]
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ExperimentRecord.FIELDS)
    for row in rows:
        w.writerow([_cell(row[key]) for key in ExperimentRecord.FIELDS])
    return buf.getvalue()


def render_growth(series, fmt: str) -> str:
    rows = []
    for g in series:
        for i, p in enumerate(g.period_index):
            rows.append({
                "method": g.method, "k": g.k, "s": g.s, "period": int(p),
                "e_y": float(g.e_y[i]), "e_H": float(g.e_H[i]),
                "e_C": None if g.e_C is None else float(g.e_C[i]),
            })
    if fmt == "json":
        payload = {"series": rows, "slopes": {g.label: g.slope_y for g in series}}
        return json.dumps(payload, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GROWTH_FIELDS)
    for row in rows:
        w.writerow([_cell(row[key]) for key in GROWTH_FIELDS])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to a temporary file in the target directory, then rename it."""
    target = Path(path)
    directory = target.parent if str(target.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _block_path(output: str, method: str, k: int, s: int, problem: str) -> str:
    p = Path(output)
    tag = f"{problem}_gauss{s}" if method == "gauss" else f"{problem}_{method}_k{k}_s{s}"
    return str(p.with_name(f"{p.stem}_{tag}{p.suffix}"))


def _emit(text: str, output: Optional[str], out) -> None:
    if output:
        write_atomic(output, text)
        print(f"wrote {output}", file=out)


def _run_table(cfg: RunConfig, out) -> None:
    if cfg.preset:
        blocks = _TABLE_PRESETS[cfg.preset]
    else:
        blocks = [(cfg.problem, cfg.method, cfg.k, cfg.s, tuple(cfg.n_list))]
    solver = cfg.solver_config()
    for problem, method, k, s, n_list in blocks:
        if cfg.preset:
            n_list = tuple(n for n in n_list if n <= N_CAP)
        k_eff, _ = resolve_method(method, k, s)
        label = f"gauss-{s}" if method == "gauss" else f"{method.upper()}({k_eff},{s})"
        print(f"{problem} {label}, {cfg.periods} period(s), solver={cfg.solver}", file=out)
        records = convergence_table(problem, method, k, s, n_list, cfg.periods, solver)
        for rec in records:
            print("  " + summary_line(rec), file=out)
        if cfg.output:
            path = _block_path(cfg.output, method, k_eff, s, problem) if cfg.preset else cfg.output
            _emit(render_table(records, cfg.format), path, out)


def _run_growth(cfg: RunConfig, out) -> None:
    if cfg.preset:
        problem, methods = _GROWTH_PRESETS[cfg.preset]
        periods, hpp = min(cfg.periods, PERIOD_CAP), 100
    else:
        problem, methods = cfg.problem, [(cfg.method, cfg.k, cfg.s)]
        periods, hpp = cfg.periods, cfg.h_per_period
    series = growth_study(problem, methods, None, 1, hpp, periods, cfg.solver_config())
    for g in series:
        line = (f"{problem} {g.label}: h=T/{hpp}, {periods} periods, e_y slope={g.slope_y:.2f}, "
                f"e_y[end]={_fmt(float(g.e_y[-1]))}, max e_H={_fmt(float(np.max(g.e_H)))}")
        if g.e_C is not None:
            line += f", max e_C={_fmt(float(np.max(g.e_C)))}"
        print(line, file=out)
    _emit(render_growth(series, cfg.format), cfg.output, out)


def _run_step_debug(cfg: RunConfig, out) -> None:
    prob = preset(cfg.problem)
    k, s = resolve_method(cfg.method, cfg.k, cfg.s)
    tab = build_tableau(k, s)
    h = prob.period / cfg.n_list[0]
    solver = cfg.solver_config()
    if cfg.method == "ephbvm":
        res = step_with_casimir(prob.system, tab, prob.y0, h, solver)
    else:
        res = step(prob.system, tab, prob.y0, h, solver)
    st = stage_state(prob.system, tab, prob.y0, h, res.phi if cfg.method != "ephbvm" else _psi(res, prob.y0, h))
    rho = rho_hat(prob.system, tab, st.Y)
    skew = float(max(np.max(np.abs(rho + np.swapaxes(rho, 2, 3))),
                     np.max(np.abs(rho - np.swapaxes(rho, 0, 1)))))
    sysm = prob.system
    info = {
        "problem": cfg.problem, "method": cfg.method, "k": k, "s": s, "h": h, "solver": cfg.solver,
        "y0": prob.y0.tolist(), "y1": res.y1.tolist(),
        "iterations": res.iterations, "residual": res.residual_norm, "stagnated": res.stagnated,
        "alpha": np.asarray(res.alpha).tolist(),
        "H_defect": float(sysm.eval_H(res.y1) - sysm.eval_H(prob.y0)),
        "C_defect": (sysm.casimir_values(res.y1) - sysm.casimir_values(prob.y0)).tolist(),
        "phi": res.phi.tolist(), "stages": st.Y.tolist(), "gamma_hat": st.gamma_hat.tolist(),
        "lambda_s": tab.lambda_s, "rho_skew_defect": skew,
    }
    print(f"{cfg.problem} {cfg.method}({k},{s}) h={h:.6g}: {res.iterations} iterations, "
          f"residual={_fmt(res.residual_norm)}, H defect={_fmt(abs(info['H_defect']))}", file=out)
    text = json.dumps(info, indent=2) + "\n"
    if cfg.output:
        _emit(text, cfg.output, out)
    else:
        out.write(text)


def _psi(res, y0, h):
    psi = res.phi.copy()
    psi[0] = (res.y1 - y0) / h
    return psi


def run_cli(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    """Parse ``argv``, run the command and return the exit code."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    cfg = RunConfig(
        command=ns.command, problem=ns.problem, method=ns.method, k=ns.k, s=ns.s,
        n_list=getattr(ns, "n", [100]), h_per_period=getattr(ns, "h_per_period", 100),
        periods=ns.periods if ns.periods is not None else (PERIOD_CAP if ns.command == "growth" else 1),
        solver=ns.solver, tol=ns.tol, max_iter=ns.max_iter,
        output=ns.output, format=ns.format, preset=getattr(ns, "preset", None), warm_start=ns.warm_start,
    )
    try:
        if not cfg.preset:
            _validate(cfg)
        elif cfg.max_iter < 1 or not cfg.tol > 0 or cfg.periods < 1:
            raise ConfigError("--tol must be positive, --max-iter and --periods at least 1")
        if cfg.command == "table":
            _run_table(cfg, out)
        elif cfg.command == "growth":
            _run_growth(cfg, out)
        else:
            _run_step_debug(cfg, out)
    except (StepFailure, ConvergenceError, DegenerateCasimirDirection, DomainError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=err)
        return EXIT_SOLVER
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=err)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
