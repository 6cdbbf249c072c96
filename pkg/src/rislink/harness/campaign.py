"""Monte-Carlo campaigns: one solver task repeated over seeded trials."""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..dist import run_distributed_episode
from ..exceptions import RisLinkError, SearchSpaceTooLarge, ValidationError
from ..pilot import PilotPool, assign_pilots, ratio_table
from ..precode import solve_wsr, solve_wsr_clustered
from ..reflect import ReflectionConfig
from ..relaysec import secrecy_eval, solve_hybrid, solve_secrecy
from ..scene import synthesize_channels
from ..slp import solve_slp, solve_slp_all_symbols
from .config import parse_config
from .oracles import ORACLE_CAP, brute_force_wsr

log = logging.getLogger(__name__)

TASKS = ("wsr", "wsr_clustered", "slp", "slp_all", "pilot", "hybrid", "secrecy", "distributed")
METRIC_COLUMNS = ("trial", "seed", "objective", "baseline_objective", "iterations", "feasible",
                  "oracle_gap")
PARTIAL_NAME = "metrics.partial.csv"
# tag mixed into the symbol stream of the symbol-level tasks
_TAG_SYMBOLS = 13


@dataclass(frozen=True)
class Campaign:
    """A task run ``trials`` times; trial ``i`` uses seed ``seed_base + i``."""

    scenario_path: str
    task: str
    trials: int = 1
    seed_base: int = 0
    output_dir: str | None = None
    oracle: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {', '.join(TASKS)}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        if not 0 <= int(self.seed_base) < 2**64:
            raise ValueError("seed_base must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(eq=False)
class MetricRow:
    """One trial. ``solution`` and ``trace`` stay in memory; they are not CSV columns."""

    trial: int
    seed: int
    objective: float
    baseline_objective: float
    iterations: int
    wall_ms: float
    feasible: bool
    oracle_gap: float | None = None
    error: str | None = None
    trace: list = field(default_factory=list, repr=False)
    min_slack_trace: list | None = field(default=None, repr=False)
    solution: object = field(default=None, repr=False)

    def csv_row(self):
        gap = "" if self.oracle_gap is None else repr(float(self.oracle_gap))
        return [self.trial, self.seed, repr(float(self.objective)),
                repr(float(self.baseline_objective)), self.iterations,
                "true" if self.feasible else "false", gap]


@dataclass(frozen=True)
class Summary:
    task: str
    trials: int
    feasible: int
    objective_mean: float
    objective_std: float
    objective_min: float
    objective_max: float
    oracle_gap_mean: float | None
    oracle_rows: int

    def lines(self):
        def fmt(v):
            return "none" if v is None else repr(float(v))

        return [
            f"task = {self.task}",
            f"trials = {self.trials}",
            f"feasible = {self.feasible}",
            f"objective_mean = {fmt(self.objective_mean)}",
            f"objective_std = {fmt(self.objective_std)}",
            f"objective_min = {fmt(self.objective_min)}",
            f"objective_max = {fmt(self.objective_max)}",
            f"oracle_gap_mean = {fmt(self.oracle_gap_mean)}",
            f"oracle_rows = {self.oracle_rows}",
        ]


def summarize(task, rows):
    """Statistics over feasible rows (population std); gap mean over oracle rows."""
    obj = np.array([r.objective for r in rows if r.feasible], dtype=float)
    gaps = [r.oracle_gap for r in rows if r.oracle_gap is not None]
    nan = float("nan")
    return Summary(
        task=task, trials=len(rows), feasible=int(obj.size),
        objective_mean=float(obj.mean()) if obj.size else nan,
        objective_std=float(obj.std()) if obj.size else nan,
        objective_min=float(obj.min()) if obj.size else nan,
        objective_max=float(obj.max()) if obj.size else nan,
        oracle_gap_mean=float(np.mean(gaps)) if gaps else None,
        oracle_rows=len(gaps),
    )


# -- per-task trial bodies -----------------------------------------------------
# each returns (objective, baseline, iterations, oracle_gap, trace, min_slack_trace, solution)

def _unit_configs(sc):
    return [ReflectionConfig.unit(p.Q, p.feasibility) for p in sc.ris]


def _wsr_oracle(ch, sc, objective):
    if sc.K != 1 or not all(p.feasibility.is_discrete for p in sc.ris):
        return None
    if math.prod(p.feasibility.tau ** p.Q for p in sc.ris) > ORACLE_CAP:
        return None
    return brute_force_wsr(ch, sc) - objective


def _task_wsr(cfg, sc, ch, params, oracle):
    sol = solve_wsr(ch, sc, params)
    gap = _wsr_oracle(ch, sc, sol.objective) if oracle else None
    # the first random start is the baseline the ascent must dominate
    return sol.objective, sol.initial_objective, sol.iterations, gap, sol.iterate_trace, None, sol


def _task_wsr_clustered(cfg, sc, ch, params, oracle):
    sol = solve_wsr_clustered(ch, sc, params=params)
    full = unclustered_reference(ch, sc, params, sol)
    return sol.objective, full.objective, sol.iterations, None, sol.iterate_trace, None, sol


def unclustered_reference(ch, sc, params, clustered):
    """Unclustered WSR, also started from the clustered optimum (a feasible point of it)."""
    full = solve_wsr(ch, sc, params)
    warm = solve_wsr(ch, sc, params, init=(clustered.P, [c.theta for c in clustered.configs]))
    return warm if warm.objective > full.objective else full


def _symbols(sc, seed):
    rng = np.random.default_rng([seed, _TAG_SYMBOLS])
    return np.array([rng.choice(t.constellation.points) for t in sc.terminals])


def _task_slp(cfg, sc, ch, params, oracle):
    sol = solve_slp(ch, sc, _symbols(sc, params.seed), params=params)
    base = sol.info.get("zf_init_power")
    base = float("nan") if base is None else base
    return (sol.power, base, sol.iterations, None, sol.iterate_trace, sol.min_slack_trace, sol)


def _task_slp_all(cfg, sc, ch, params, oracle):
    sol = solve_slp_all_symbols(ch, sc, params)
    fixed = solve_slp_all_symbols(ch, sc, params, configs_fixed=_unit_configs(sc))
    return (sol.power, fixed.power, sol.iterations, None, sol.iterate_trace,
            sol.min_slack_trace, sol)


def _pilot_pool(cfg, sc, seed):
    count = cfg.pilot.count or sc.K
    if cfg.pilot.pool == "random":
        return PilotPool.random(sc.L, count, np.random.default_rng([seed, _TAG_SYMBOLS + 1]))
    return PilotPool.dft(sc.L, count)


def _task_pilot(cfg, sc, ch, params, oracle):
    pool = _pilot_pool(cfg, sc, params.seed)
    configs = _unit_configs(sc)
    res = assign_pilots(ch, configs, pool, mode=cfg.pilot.mode)
    # round-robin reuse is the assignment-free reference
    naive = np.arange(sc.K) % pool.count
    R = ratio_table(ch, configs, pool, None)
    baseline = float(np.min(R[np.arange(sc.K), naive]))
    gap = None
    if oracle:
        try:
            gap = assign_pilots(ch, configs, pool, mode="exhaustive").score - res.score
        except SearchSpaceTooLarge:
            gap = None
    return res.score, baseline, 0, gap, [res.score], None, res


def _task_hybrid(cfg, sc, ch, params, oracle):
    sol = solve_hybrid(ch, sc, cfg.relay, params)
    passive = sol.info.get("passive_objective", sol.initial_objective)
    return sol.objective, passive, sol.iterations, None, sol.iterate_trace, None, sol


def _task_secrecy(cfg, sc, ch, params, oracle):
    sol = solve_secrecy(ch, sc, cfg.C_demand, params)
    # eve-unaware reference: user 1's rate maximized alone
    ref = solve_wsr(ch, sc, params, weights=np.array([1.0, 0.0]))
    base = secrecy_eval(ch, ref.configs, ref.P[:, 0], ref.P[:, 1], sc).secrecy_rate
    return sol.objective, base, sol.iterations, None, sol.iterate_trace, None, sol


def _task_distributed(cfg, sc, ch, params, oracle):
    d = cfg.distributed
    kw = dict(beta=d.beta, sensing_noise=d.sensing_noise, neighbor_radius=d.neighbor_radius,
              optimize_theta=d.optimize_theta)
    m = run_distributed_episode(sc, cfg.mobility, d.T, d.policy, params, **kw)
    c = run_distributed_episode(sc, cfg.mobility, d.T, d.policy, params, centralized=True, **kw)
    obj = float(np.mean(m.sum_rate)) if len(m) else 0.0
    base = float(np.mean(c.sum_rate)) if len(c) else 0.0
    return obj, base, len(m), None, list(m.sum_rate), list(m.min_true_slack), m


_TASKS = {
    "wsr": _task_wsr, "wsr_clustered": _task_wsr_clustered, "slp": _task_slp,
    "slp_all": _task_slp_all, "pilot": _task_pilot, "hybrid": _task_hybrid,
    "secrecy": _task_secrecy, "distributed": _task_distributed,
}


def check_task(cfg, task):
    """Scenario requirements of a task, raised before any trial runs."""
    sc = cfg.scenario
    if task == "hybrid" and sc.active_antennas < 1:
        raise ValidationError("the hybrid task needs active_antennas >= 1", key="scenario.active_antennas")
    if task == "secrecy":
        if sc.eavesdropper is None:
            raise ValidationError("the secrecy task needs an [eavesdropper] section", key="[eavesdropper]")
        if sc.K != 2:
            raise ValidationError("the secrecy task needs K = 2", key="scenario.K")
    if task == "pilot" and sc.N < 2:
        raise ValidationError("the pilot task needs at least two RIS panels", key="[ris.N]")


def run_trial(cfg, task, trial, seed, oracle=False):
    """Run one trial; solver failures give a row with ``feasible=False``."""
    sc = cfg.scenario.with_seed(seed)
    params = replace(cfg.solver, seed=int(seed) % 2**32, trace_path=None)
    t0 = time.perf_counter()
    try:
        ch = synthesize_channels(sc, 0)
        obj, base, it, gap, trace, slack, sol = _TASKS[task](cfg, sc, ch, params, oracle)
        feasible = bool(np.isfinite(obj))
        err = None
    except (RisLinkError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("trial %d (seed %d) failed: %s", trial, seed, exc)
        obj, base, it, gap, trace, slack, sol = float("nan"), float("nan"), 0, None, [], None, None
        feasible, err = False, f"{type(exc).__name__}: {exc}"
    wall = (time.perf_counter() - t0) * 1e3
    return MetricRow(trial=trial, seed=seed, objective=float(obj), baseline_objective=float(base),
                     iterations=int(it), wall_ms=wall, feasible=feasible, oracle_gap=gap,
                     error=err, trace=[float(v) for v in trace],
                     min_slack_trace=None if slack is None else [float(v) for v in slack],
                     solution=sol)


class _PartialWriter:
    """Appends rows as trials finish; the sorted final CSV comes from emit_report."""

    def __init__(self, output_dir):
        self.path = None
        if output_dir:
            os.makedirs(output_dir, exist_ok=True)
            self.path = os.path.join(output_dir, PARTIAL_NAME)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(METRIC_COLUMNS + ("wall_ms",))

    def write(self, row):
        if self.path:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(row.csv_row() + [f"{row.wall_ms:.3f}"])


def _run_one(args):
    cfg, task, trial, seed, oracle = args
    row = run_trial(cfg, task, trial, seed, oracle)
    # solver objects can be large; only keep them in-process
    row.solution = None
    return row


def run_campaign(c, cfg=None):
    """Run every trial of ``c`` and return ``(rows, summary)``.

    Rows come back sorted by trial index whatever the completion order, so the
    result does not depend on ``workers``. With an output directory, each
    finished trial is appended to ``metrics.partial.csv`` as it completes.
    """
    cfg = cfg or parse_config(c.scenario_path)
    check_task(cfg, c.task)
    writer = _PartialWriter(c.output_dir)
    jobs = [(cfg, c.task, i, (int(c.seed_base) + i) % 2**64, c.oracle) for i in range(c.trials)]
    rows = []
    if c.workers == 1:
        for job in jobs:
            row = run_trial(*job)
            writer.write(row)
            rows.append(row)
    else:
        with ProcessPoolExecutor(max_workers=c.workers) as pool:
            for row in pool.map(_run_one, jobs):
                writer.write(row)
                rows.append(row)
    rows.sort(key=lambda r: r.trial)
    return rows, summarize(c.task, rows)
