"""Command line driver: ``nchf run | compare | gradcheck | validate | inspect``.

Exit codes: 0 success, 1 configuration or user error, 2 CFL collapse,
3 invariant or tolerance failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, config, fixtures, flow
from . import operators as ops
from .diagnostics import CSVSink, format_float
from .exceptions import (
    CFLCollapse,
    CheckpointError,
    ConfigError,
    GridError,
    InvariantViolation,
    NCHFError,
    OperatorOverflow,
    StepTooLarge,
)
from .grid import make_cutoff

EXIT_OK, EXIT_USER, EXIT_CFL, EXIT_FAIL = 0, 1, 2, 3
CLOSED_FORM_TOL = 1e-6
STAND_IN_FIXTURES = ("bump", "equator_wrap")


@contextmanager
def thread_limit():
    """Cap numeric threads from ``NCHF_THREADS``; results do not depend on it."""
    raw = os.environ.get("NCHF_THREADS")
    if not raw:
        yield
        return
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"NCHF_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"NCHF_THREADS must be a positive integer, got {raw!r}")
    # compiled kernels are serial; only the BLAS/OpenMP pools need a cap
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


class SeriesSink:
    """Fans records out to the CSV stream, gnuplot series and checkpoints."""

    def __init__(self, out: Path, grid, checkpoint_every=0):
        out.mkdir(parents=True, exist_ok=True)
        self.out = out
        self.grid = grid
        self.csv = CSVSink(out / "diagnostics.csv")
        self.checkpoint_every = checkpoint_every
        self.checkpoints = []

    def __call__(self, record, state):
        self.csv(record, state)
        k = state.step_count
        if self.checkpoint_every and k > 0 and k % self.checkpoint_every == 0:
            ck = self.out / "checkpoints"
            ck.mkdir(exist_ok=True)
            path = ck / f"step_{k:08d}.nchf"
            checkpoint.save(path, self.grid, state)
            self.checkpoints.append(path)

    @property
    def records(self):
        return self.csv.records

    def close(self):
        self.csv.close()
        if not self.records:
            return
        series = self.out / "series"
        series.mkdir(exist_ok=True)
        names = self.records[0].header()
        rows = [r.row() for r in self.records]
        for j, name in enumerate(names[1:], start=1):
            with open(series / f"{name}.dat", "w") as fh:
                fh.write(f"# t {name}\n")
                for row in rows:
                    fh.write(f"{format_float(row[0])} {format_float(row[j])}\n")


def probe_cells(grid, f0, eps, seed, count=5):
    """Cells for the closed-form ``w`` audit: corner, center, peak density, random."""
    e2 = ops.energy_density(grid, f0, eps)
    cells = [(0,) * grid.dim, (grid.res // 2,) * grid.dim]
    cells.append(tuple(int(i) for i in np.unravel_index(int(np.argmax(e2)), grid.shape)))
    rng = np.random.default_rng([int(seed), 5])
    while len(cells) < count:
        cells.append(tuple(int(i) for i in rng.integers(0, grid.res, grid.dim)))
    return cells


def default_cutoff(grid):
    return make_cutoff(grid, [grid.side / 2] * grid.dim, grid.side / 4)


@dataclass
class LegResult:
    mode: str
    status: str = "ok"
    exit_code: int = EXIT_OK
    message: str = ""
    collapse_time: float = math.nan
    info: flow.RunInfo = field(default_factory=flow.RunInfo)
    state: flow.FlowState | None = None
    closed_form_gap: float = math.nan
    records: list = field(default_factory=list)


def run_leg(cfg, out: Path, mode, state=None, emit_initial=True) -> LegResult:
    grid = cfg.grid
    consts = cfg.constants
    control = flow.with_mode(cfg.control, mode)
    if state is None:
        f0 = fixtures.make_fixture(grid, cfg["initial.fixture"], cfg.L, **cfg.fixture_params())
        state = flow.initial_state(f0)
    probes = cfg.probes
    cutoffs = probes.cutoffs(grid) if probes.probes else [default_cutoff(grid)]
    hist = None
    if mode == "chf" and state.t == 0.0 and np.all(state.w == 1.0):
        hist = flow.WHistory(probe_cells(grid, state.f, consts.eps, cfg["seed"]))
    sink = SeriesSink(out, grid, cfg["outputs.checkpoint_every"])
    res = LegResult(mode)
    try:
        res.state = flow.advance(
            grid, state, control, consts, cfg["flow.t_end"], sink=sink, cutoffs=cutoffs,
            cadence=cfg["outputs.cadence"], tol=cfg["target.constraint_tol"], whistory=hist,
            info=res.info, moment_cutoff=cutoffs[0], emit_initial=emit_initial,
        )
        checkpoint.save(out / "final.nchf", grid, res.state)
        if hist is not None:
            res.closed_form_gap = flow.closed_form_w_check(hist, consts)
            if not res.closed_form_gap <= CLOSED_FORM_TOL:
                res.status, res.exit_code = "closed_form_w", EXIT_FAIL
                res.message = f"closed-form w gap {res.closed_form_gap:.3e} exceeds {CLOSED_FORM_TOL:g}"
    except CFLCollapse as exc:
        res.status, res.exit_code, res.message = "cfl_collapse", EXIT_CFL, str(exc)
        res.collapse_time = exc.t
    except (InvariantViolation, StepTooLarge, OperatorOverflow) as exc:
        res.status, res.exit_code, res.message = type(exc).__name__, EXIT_FAIL, str(exc)
    finally:
        sink.close()
        res.records = sink.records
    _write_metadata(out, cfg, mode, res)
    return res


def _write_metadata(out, cfg, mode, res):
    name = cfg["initial.fixture"]
    lines = [
        f"mode = {mode}",
        f"fixture = {name}",
        f"status = {res.status}",
        f"steps = {res.info.steps}",
        f"closed_form_w_gap = {format_float(res.closed_form_gap)}",
    ]
    if name in STAND_IN_FIXTURES:
        lines.append("fixture_note = engineering stand-in for concentrating initial data")
    if res.message:
        lines.append(f"message = {res.message}")
    (out / "metadata.txt").write_text("\n".join(lines) + "\n")


VERDICT_FIELDS = ["mode", "status", "t_reached", "steps", "max_sup_e2", "initial_D", "max_D", "min_dt", "collapse_time", "final_E"]


def verdict_row(leg: LegResult):
    info = leg.info
    last = leg.records[-1] if leg.records else None
    return [
        leg.mode,
        leg.status,
        format_float(last.t if last else math.nan),
        str(info.steps),
        format_float(info.max_sup_e2),
        format_float(info.D0),
        format_float(info.max_D),
        format_float(info.min_dt),
        format_float(leg.collapse_time),
        format_float(last.E_eps if last else math.nan),
    ]


def write_verdict(path, legs):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(VERDICT_FIELDS)
        for leg in legs:
            wr.writerow(verdict_row(leg))


# commands ------------------------------------------------------------------


def cmd_run(cfg, out: Path, resume=None) -> int:
    state, emit_initial = None, True
    if resume is not None:
        grid, state = checkpoint.load(resume)
        if grid != cfg.grid:
            raise ConfigError(f"checkpoint grid {grid} does not match config grid {cfg.grid}")
        if state.f.shape[-1] != cfg.L:
            raise ConfigError(f"checkpoint L={state.f.shape[-1]} does not match target.L={cfg.L}")
        if not cfg["flow.t_end"] > state.t:
            raise ConfigError(f"field 'flow.t_end': must exceed checkpoint time {state.t}")
        emit_initial = False
    leg = run_leg(cfg, out, cfg["flow.mode"], state, emit_initial)
    if leg.exit_code:
        print(f"run failed ({leg.status}): {leg.message}", file=sys.stderr)
    else:
        print(f"run complete: t = {leg.state.t}, steps = {leg.info.steps}")
    return leg.exit_code


def cmd_compare(cfg, out: Path) -> int:
    legs = [run_leg(cfg, out / mode, mode) for mode in ("frozen_u", "chf")]
    write_verdict(out / "verdict.csv", legs)
    for leg in legs:
        print(f"{leg.mode}: {leg.status} steps={leg.info.steps} max_D={leg.info.max_D:.6g}")
    return EXIT_OK


def cmd_gradcheck(cfg, out: Path) -> int:
    from .gradcheck import gradient_check

    grid = cfg.grid
    f = fixtures.make_fixture(grid, cfg["initial.fixture"], cfg.L, **cfg.fixture_params())
    res = gradient_check(
        grid, f, cfg.constants, n_dirs=cfg["gradcheck.directions"],
        s=cfg["gradcheck.step"], seed=cfg["seed"],
    )
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "gradcheck.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["direction", "analytic", "finite_difference", "relative_error"])
        for k, (a, b, e) in enumerate(zip(res.analytic, res.numeric, res.errors)):
            wr.writerow([k, format_float(a), format_float(b), format_float(e)])
    if res.passed:
        print(f"gradcheck passed: max relative error {res.max_error:.3e}")
        return EXIT_OK
    print(
        f"gradcheck failed: direction {res.worst} has relative error "
        f"{res.max_error:.3e} > {res.tol:g}", file=sys.stderr,
    )
    return EXIT_FAIL


def cmd_validate(cfg, out: Path) -> int:
    from .inequalities import CorpusSpec, corpus_scan

    spec = CorpusSpec(
        n=cfg["grid.dim"], samples=cfg["corpus.samples"], max_freq=cfg["corpus.max_freq"],
        eps=cfg["flow.eps"], beta=cfg["corpus.beta"], radius=cfg["corpus.radius"], L=cfg.L,
    )
    scan = corpus_scan(spec, cfg["seed"], cfg["corpus.resolutions"], cfg["grid.side"])
    out.mkdir(parents=True, exist_ok=True)
    scan.write_csv(out / "inequalities.csv")
    bad = scan.stability_failures()
    if bad:
        print(f"validate failed for: {', '.join(bad)}", file=sys.stderr)
        return EXIT_FAIL
    print("validate passed")
    return EXIT_OK


def cmd_inspect(path) -> int:
    grid, state = checkpoint.load(path)
    for k, v in checkpoint.describe(grid, state).items():
        print(f"{k} = {format_float(v) if isinstance(v, float) else v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nchf", description="Regularized n-conformal heat flow simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "compare", "gradcheck", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="config file (defaults are used if omitted)")
        sp.add_argument("--out", type=Path, help="output directory (overrides outputs.dir)")
        sp.add_argument("--cadence", type=int, help="diagnostics every N steps")
        sp.add_argument("--probes", help="probe balls, e.g. '1.5,2.0@0.8; 4,4@1'")
        sp.add_argument("--seed", type=int, help="seed for random fixtures and directions")
        if name == "run":
            sp.add_argument("--resume", type=Path, help="continue from a checkpoint")
    sp = sub.add_parser("inspect")
    sp.add_argument("checkpoint", type=Path)
    return p


def _load_config(args):
    cfg = config.load(args.config) if args.config else config.RunConfig.defaults()
    overrides = {}
    if args.out is not None:
        overrides["outputs.dir"] = str(args.out)
    if args.cadence is not None:
        overrides["outputs.cadence"] = args.cadence
    if args.probes is not None:
        overrides["probes.spec"] = args.probes
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.with_overrides(**overrides) if overrides else cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USER
    try:
        with thread_limit():
            if args.command == "inspect":
                return cmd_inspect(args.checkpoint)
            cfg = _load_config(args)
            out = Path(cfg["outputs.dir"])
            if args.command == "run":
                return cmd_run(cfg, out, args.resume)
            return {"compare": cmd_compare, "gradcheck": cmd_gradcheck, "validate": cmd_validate}[
                args.command
            ](cfg, out)
    except (ConfigError, GridError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except NCHFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
