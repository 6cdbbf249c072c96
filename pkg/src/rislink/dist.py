"""Distributed per-RIS operation.

Every RIS senses the signal impinging on it, ``y^(n) = H_BR^(n) x + noise``,
recovers a soft symbol estimate through its (possibly stale) copy of the BS
precoder, and solves a local symbol-level problem on its own cascade to pick
its reflection coefficients. The SINR target of each user is split across
panels so that ``sum_n sqrt(gamma_k^(n)) = beta * sqrt(gamma_k)``.

The BS keeps transmitting with its own precoder; the RIS-side precoder copies
only serve estimation and the local problems. A refresh protocol (keep the
local copy, average with neighbors, or take a BS broadcast) controls how far
those copies drift.
"""
from __future__ import annotations

import csv
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InvalidScenario, MissingBroadcast, RankDeficient
from .precode import (
    SolverParams,
    mrt_from_matrix,
    sinr_from_matrix,
    zf_from_matrix,
)
from .reflect import FeasibilitySet, project
from .scene import ChannelSet, _rng, composite_channel, evolve, synthesize_channels
from .slp import normalized_slack, solve_slp

log = logging.getLogger(__name__)

SPLIT_TOL = 1e-9
KEEP_LOCAL, NEIGHBOR_AVERAGE, BS_BROADCAST = "keep_local", "neighbor_average", "bs_broadcast"
_TAG_SYMBOLS = 11
_TAG_SENSING = 12


def equal_split(gamma, beta, N):
    """K x N per-panel targets ``(beta*sqrt(gamma_k)/N)^2``."""
    gamma = np.asarray(gamma, dtype=float)
    return np.repeat(((beta * np.sqrt(gamma) / N) ** 2)[:, None], N, axis=1)


def split_residual(gamma_split, gamma, beta):
    """Largest violation of ``sum_n sqrt(gamma_k^(n)) = beta*sqrt(gamma_k)``."""
    lhs = np.sum(np.sqrt(gamma_split), axis=1)
    return float(np.max(np.abs(lhs - beta * np.sqrt(np.asarray(gamma, float)))))


@dataclass(frozen=True, eq=False)
class DistState:
    """What RIS ``index`` knows and keeps between slots.

    ``gamma_split`` is the K x N table of per-panel targets shared by all
    panels; ``theta`` is the panel's current configuration.
    """

    index: int
    P_local: np.ndarray
    beta: float
    gamma: np.ndarray
    gamma_split: np.ndarray
    theta: np.ndarray
    neighbor_ids: tuple = ()
    refresh_period: int = 1

    def __post_init__(self):
        for name in ("P_local", "theta"):
            a = np.array(getattr(self, name), dtype=complex)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("gamma", "gamma_split"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "neighbor_ids", tuple(int(i) for i in self.neighbor_ids))
        if not 0 < self.beta <= 1:
            raise InvalidScenario("beta must lie in (0, 1]")
        if self.refresh_period < 1:
            raise InvalidScenario("refresh_period must be >= 1")
        if self.gamma_split.ndim != 2 or self.gamma_split.shape[0] != self.gamma.size:
            raise InvalidScenario("gamma_split must be K x N")
        if not 0 <= self.index < self.gamma_split.shape[1]:
            raise InvalidScenario("RIS index outside the gamma_split table")
        if np.any(self.gamma_split <= 0):
            raise InvalidScenario("per-panel SINR targets must be > 0")
        if split_residual(self.gamma_split, self.gamma, self.beta) > SPLIT_TOL:
            raise InvalidScenario("SINR split violates sum_n sqrt(gamma_k^(n)) = beta*sqrt(gamma_k)")

    @property
    def local_gamma(self):
        return self.gamma_split[:, self.index]


@dataclass(frozen=True)
class RefreshPolicy:
    mode: str = BS_BROADCAST
    period: int = 1

    def __post_init__(self):
        if self.mode not in (KEEP_LOCAL, NEIGHBOR_AVERAGE, BS_BROADCAST):
            raise InvalidScenario(f"unknown refresh mode {self.mode!r}")
        if int(self.period) != self.period or self.period < 1:
            raise InvalidScenario("refresh period must be a positive integer")


def soft_estimate(y_ris, H_BR, P_prev):
    """Least-squares symbol estimate ``(H_BR P_prev)^+ y``."""
    M = np.asarray(H_BR, dtype=complex) @ np.asarray(P_prev, dtype=complex)
    K = M.shape[1]
    if M.shape[0] < K or np.linalg.matrix_rank(M) < K:
        raise RankDeficient("effective RIS observation matrix has column rank < K")
    return np.linalg.lstsq(M, np.asarray(y_ris, dtype=complex), rcond=None)[0]


@dataclass(eq=False)
class LocalResult:
    solution: object
    P_local: np.ndarray
    theta: np.ndarray


def local_slp(state, H_BR, H_RU, s_hat, params=None, *, feasibility=None, sigma, phi,
              optimize_theta=True):
    """Local symbol-level problem of one RIS on its own cascade.

    Minimizes ``||x||`` with ``x = P^(n) s_hat`` subject to CI constraints on
    ``h_RU,k^T Theta H_BR x`` against the per-panel targets. The local
    precoder copy is then moved minimally so that it maps ``s_hat`` to ``x``.
    """
    fs = feasibility or FeasibilitySet.continuous()
    H_BR = np.asarray(H_BR, dtype=complex)
    H_RU = np.asarray(H_RU, dtype=complex)
    K, L = H_RU.shape[0], H_BR.shape[1]
    ch = ChannelSet(H_BU=np.zeros((K, L), dtype=complex), H_BR=(H_BR,), H_RU=(H_RU,))
    theta = project(state.theta, fs)
    kw = dict(feasibilities=[fs], sigma=sigma, gamma=state.local_gamma, phi=phi)
    if optimize_theta:
        sol = solve_slp(ch, None, s_hat, None, params, init_configs=[theta], **kw)
    else:
        sol = solve_slp(ch, None, s_hat, [theta], params, **kw)
    s_hat = np.asarray(s_hat, dtype=complex)
    P = np.array(state.P_local)
    P = P + np.outer(sol.x - P @ s_hat, s_hat.conj()) / np.vdot(s_hat, s_hat).real
    return LocalResult(sol, P, np.array(sol.configs[0].theta))


def refresh(states, policy, P_bs=None, t=0):
    """Apply the refresh protocol at slot ``t`` (only when ``t % period == 0``)."""
    states = list(states)
    if policy.mode == KEEP_LOCAL or t % policy.period:
        return states
    if policy.mode == BS_BROADCAST:
        if P_bs is None:
            raise MissingBroadcast(f"no BS precoder available at refresh slot {t}")
        return [replace(s, P_local=np.array(P_bs)) for s in states]
    by_id = {s.index: s for s in states}
    out = []
    for s in states:
        group = [s.index] + [i for i in s.neighbor_ids if i != s.index and i in by_id]
        mean = np.mean([by_id[i].P_local for i in group], axis=0)
        out.append(replace(s, P_local=mean))
    return out


def neighbor_graph(positions, radius=np.inf):
    """Neighbors of each panel: every other panel within ``radius``."""
    pos = np.asarray(positions, dtype=float)
    out = []
    for i in range(len(pos)):
        d = np.linalg.norm(pos - pos[i], axis=1)
        out.append(tuple(int(j) for j in np.flatnonzero(d <= radius) if j != i))
    return out


EPISODE_BASE_COLUMNS = ("slot", "sum_rate", "min_true_slack", "est_error")


@dataclass(eq=False)
class EpisodeMetrics:
    slot: list = field(default_factory=list)
    sum_rate: list = field(default_factory=list)
    min_true_slack: list = field(default_factory=list)
    est_error: list = field(default_factory=list)
    ris_power: list = field(default_factory=list)
    split_residual: list = field(default_factory=list)
    rank_failures: int = 0
    N: int = 0

    def __len__(self):
        return len(self.slot)

    @property
    def columns(self):
        return EPISODE_BASE_COLUMNS + tuple(f"power_{n}" for n in range(self.N))

    def rows(self):
        for i in range(len(self)):
            yield [self.slot[i], self.sum_rate[i], self.min_true_slack[i], self.est_error[i],
                   *self.ris_power[i]]

    def write_csv(self, path):
        """Atomic CSV write of the time series."""
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".episode-", suffix=".csv")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(self.columns)
                for row in self.rows():
                    w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _bs_precoder(ch, thetas, power_budget):
    H = composite_channel(ch, thetas)
    try:
        return zf_from_matrix(H, power_budget)
    except RankDeficient:
        return mrt_from_matrix(H, power_budget)


def _symbols(scenario, t):
    rng = _rng(scenario.seed, t, _TAG_SYMBOLS)
    return np.array([t_.constellation.points[rng.integers(t_.constellation.M)]
                     for t_ in scenario.terminals])


def run_distributed_episode(scenario, profile, T, policy, params=None, *, beta=1.0,
                            sensing_noise=0.0, neighbor_radius=np.inf, optimize_theta=True,
                            gamma_split=None, centralized=False, csv_path=None):
    """Run ``T`` slots of the distributed protocol and return its metrics.

    Per slot: the channel evolves; the BS precodes (ZF on the composite
    channel of the previous configurations, MRT if rank deficient); the
    refresh protocol runs; each RIS senses, estimates and solves its local
    problem; the panels adopt their new coefficients. ``sum_rate`` is the
    rate of the BS precoder under those coefficients.

    ``centralized=True`` runs the same slots with every panel handed the true
    symbols and the BS precoder, the reference the distributed run is
    compared with.
    """
    params = params or SolverParams(restarts=1)
    sc = scenario
    N, K = sc.N, sc.K
    metrics = EpisodeMetrics(N=N)
    if T <= 0:
        if csv_path:
            metrics.write_csv(csv_path)
        return metrics
    gamma = np.array([t.sinr_target for t in sc.terminals])
    sigma = np.sqrt(sc.noise_powers)
    phi = np.array([t.constellation.ci_half_angle for t in sc.terminals])
    table = equal_split(gamma, beta, N) if gamma_split is None else np.asarray(gamma_split)
    neighbors = neighbor_graph([p.position for p in sc.ris], neighbor_radius)
    fss = sc.feasibilities

    ch = synthesize_channels(sc, 0)
    thetas = [np.ones(p.Q, dtype=complex) for p in sc.ris]
    P0 = _bs_precoder(ch, thetas, sc.power_budget)
    states = [DistState(n, P0, beta, gamma, table, thetas[n], neighbors[n], policy.period)
              for n in range(N)]
    for t in range(T):
        if t > 0:
            ch = evolve(ch, profile, t)
        P_bs = _bs_precoder(ch, thetas, sc.power_budget)
        states = refresh(states, policy, P_bs, t)
        s = _symbols(sc, t)
        x = P_bs @ s
        rng = _rng(sc.seed, t, _TAG_SENSING)
        new_states, new_thetas, powers, errors = [], [], [], []
        for n, st in enumerate(states):
            if centralized:
                st = replace(st, P_local=P_bs)
                s_hat = s
            else:
                y = ch.H_BR[n] @ x
                if sensing_noise > 0:
                    w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
                    y = y + np.sqrt(sensing_noise / 2.0) * w
                try:
                    s_hat = soft_estimate(y, ch.H_BR[n], st.P_local)
                except RankDeficient:
                    # a stale copy can lose rank; estimate on its dominant subspace
                    log.info("slot %d, RIS %d: rank-deficient estimate", t, n)
                    metrics.rank_failures += 1
                    M = ch.H_BR[n] @ st.P_local
                    s_hat = np.linalg.pinv(M, rcond=1e-10) @ y
            res = local_slp(st, ch.H_BR[n], ch.H_RU[n], s_hat, params, feasibility=fss[n],
                            sigma=sigma, phi=phi, optimize_theta=optimize_theta)
            new_states.append(replace(st, P_local=res.P_local, theta=res.theta))
            new_thetas.append(res.theta)
            powers.append(res.solution.power)
            errors.append(float(np.linalg.norm(s_hat - s)))
        states, thetas = new_states, new_thetas
        H = composite_channel(ch, thetas)
        rate = float(np.sum(np.log2(1.0 + sinr_from_matrix(H, P_bs, sc.noise_powers))))
        slack = normalized_slack(H @ x, s, sigma, gamma, phi)
        metrics.slot.append(t)
        metrics.sum_rate.append(rate)
        metrics.min_true_slack.append(float(np.min(slack)))
        metrics.est_error.append(max(errors))
        metrics.ris_power.append(powers)
        metrics.split_residual.append(
            max(split_residual(st.gamma_split, st.gamma, st.beta) for st in states))
    if csv_path:
        metrics.write_csv(csv_path)
    return metrics


__all__ = [
    "DistState", "RefreshPolicy", "LocalResult", "EpisodeMetrics", "equal_split",
    "split_residual", "soft_estimate", "local_slp", "refresh", "neighbor_graph",
    "run_distributed_episode",
]
