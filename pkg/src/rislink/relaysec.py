"""Hybrid active/passive relaying under MRC, and secrecy-rate precoding.

The hybrid relay adds an amplify-and-forward path through ``A`` active
antennas co-located with a RIS. The user combines both paths by MRC, so its
SINR is the sum of the passive and active SINRs.

For the secrecy problem two legitimate users are served while an
eavesdropper with ``N_Eve`` antennas observes the same reflected channel
structure. User 1's secrecy rate ``[C1 - C_Eve]^+`` is maximized subject to a
rate demand on user 2.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DemandInfeasible,
    DimensionMismatch,
    InvalidScenario,
    MissingActiveChannels,
    MissingEveChannels,
)
from .precode import (
    LN2,
    SolverParams,
    _finish,
    _resolve,
    _restart_rng,
    _WsrAscent,
    _check_P,
    _noise,
    rate_coefficients,
    sinr,
    initial_point,
    sinr_from_matrix,
    solve_wsr,
    theta_gradient,
)
from .reflect import Clustering
from .scene import composite_channel, eve_channel

log = logging.getLogger(__name__)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
FEASIBILITY_TOL = 1e-6


# -- hybrid relay --------------------------------------------------------------

@dataclass(frozen=True)
class HybridRelayConfig:
    alpha: float = 0.0
    relay_power_budget: float = 0.0
    relay_noise: float = 1.0
    active_antennas: int = 1

    def __post_init__(self):
        if not self.alpha >= 0:
            raise InvalidScenario("alpha must be >= 0")
        if not self.relay_power_budget >= 0:
            raise InvalidScenario("relay_power_budget must be >= 0")
        if not self.relay_noise > 0:
            raise InvalidScenario("relay_noise must be > 0")
        if int(self.active_antennas) != self.active_antennas or self.active_antennas < 1:
            raise InvalidScenario("active_antennas must be a positive integer")


def _active_blocks(ch, cfg):
    if not ch.has_active:
        raise MissingActiveChannels("channel set has no active-relay blocks")
    if ch.H_BR_act.shape[0] != cfg.active_antennas:
        raise DimensionMismatch(
            f"config has {cfg.active_antennas} active antennas, channels have "
            f"{ch.H_BR_act.shape[0]}")
    return ch.H_RU_act, ch.H_BR_act


def _active_sinrs(A_eff, hnorm2, P, alpha, relay_noise, noise):
    """Active-path SINRs of all users; ``A_eff = H_RU_act @ H_BR_act``."""
    if alpha == 0:
        return np.zeros(A_eff.shape[0])
    eff_noise = hnorm2 * relay_noise + noise / alpha**2
    return sinr_from_matrix(A_eff, P, eff_noise)


def sinr_active(ch, cfg, P, k, noise=None):
    """SINR of user ``k`` over the amplify-and-forward path alone."""
    H_RU_act, H_BR_act = _active_blocks(ch, cfg)
    P = _check_P(ch, P)
    if not 0 <= k < ch.K:
        raise IndexError(f"user index {k} out of range")
    noise = _noise(ch, noise)
    hnorm2 = np.sum(np.abs(H_RU_act) ** 2, axis=1)
    g = _active_sinrs(H_RU_act @ H_BR_act, hnorm2, P, cfg.alpha, cfg.relay_noise, noise)
    return float(g[k])


def sinr_mrc(ch, configs, cfg, P, k, noise=None):
    """MRC combination: passive SINR plus active-path SINR."""
    return sinr(ch, configs, P, k, noise) + sinr_active(ch, cfg, P, k, noise)


def relay_power(ch, cfg, P, alpha=None):
    """Left-hand side of the relay transmit-power constraint."""
    _, H_BR_act = _active_blocks(ch, cfg)
    alpha = cfg.alpha if alpha is None else alpha
    P = _check_P(ch, P)
    return float(alpha**2 * (np.sum(np.abs(H_BR_act @ P) ** 2) + ch.K * cfg.relay_noise))


def alpha_max(ch, cfg, P):
    """Largest amplification meeting the relay power budget at precoder ``P``."""
    _, H_BR_act = _active_blocks(ch, cfg)
    denom = np.sum(np.abs(H_BR_act @ P) ** 2) + ch.K * cfg.relay_noise
    return float(np.sqrt(cfg.relay_power_budget / denom))


def golden_section_max(f, lo, hi, tol=1e-10, max_iter=200):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; the end points are also checked."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    best = max(cands, key=lambda t: t[0])
    return best[1], best[0]


class _HybridAscent(_WsrAscent):
    def __init__(self, ch, weights, noise, cfg, *args):
        super().__init__(ch, weights, noise, *args)
        self.cfg = cfg
        H_RU_act, H_BR_act = _active_blocks(ch, cfg)
        self.H_BR_act = H_BR_act
        self.A_eff = H_RU_act @ H_BR_act
        self.hnorm2 = np.sum(np.abs(H_RU_act) ** 2, axis=1)
        self.alpha = 0.0

    def extra_sinr(self, P, alpha=None):
        alpha = self.alpha if alpha is None else alpha
        return _active_sinrs(self.A_eff, self.hnorm2, P, alpha, self.cfg.relay_noise, self.noise)

    def project_P(self, P):
        P = super().project_P(P)
        if self.alpha > 0:
            room = self.cfg.relay_power_budget / self.alpha**2 - self.ch.K * self.cfg.relay_noise
            used = np.sum(np.abs(self.H_BR_act @ P) ** 2)
            if used > room:
                P = P * np.sqrt(max(room, 0.0) / used)
        return P

    def gradients(self, P, tt):
        gP, gT = super().gradients(P, tt)
        if self.alpha > 0:
            H = self._H(tt)
            g_passive = sinr_from_matrix(H, P, self.noise)
            eff_noise = self.hnorm2 * self.cfg.relay_noise + self.noise / self.alpha**2
            Ya = self.A_eff @ P
            Ma = rate_coefficients(Ya, eff_noise, self.weights, g_passive) * Ya
            gP = gP + self.A_eff.conj().T @ Ma
        return gP, gT

    def _alpha_max(self, P):
        denom = np.sum(np.abs(self.H_BR_act @ P) ** 2) + self.ch.K * self.cfg.relay_noise
        return float(np.sqrt(self.cfg.relay_power_budget / denom))

    def extra_step(self, P, tt, f):
        hi = self._alpha_max(P)
        if hi <= 0:
            return f
        g_passive = sinr_from_matrix(self._H(tt), P, self.noise)

        def obj(a):
            g = g_passive + self.extra_sinr(P, a)
            return float(np.sum(self.weights * np.log2(1.0 + g)))

        a, fa = golden_section_max(obj, 0.0, hi)
        if fa > f:
            old = self.alpha
            self.alpha = a
            fn = self._value(P, tt)
            if fn > f:
                return fn
            self.alpha = old
        return f


def solve_hybrid(ch, scenario=None, cfg=None, params=None, *, weights=None,
                 feasibilities=None, power_budget=None, noise=None):
    """Joint (P, theta, alpha) weighted-sum-rate maximization under MRC.

    Starts from the passive-only ``solve_wsr`` solution with ``alpha = 0``,
    which is feasible, so the result never falls below the passive optimum.
    The returned trace is the passive trace followed by the hybrid one.
    """
    cfg = cfg or HybridRelayConfig(active_antennas=max(1, getattr(ch.H_BR_act, "shape", (1,))[0]))
    params = params or SolverParams()
    _active_blocks(ch, cfg)
    base = solve_wsr(ch, scenario, params, weights=weights, feasibilities=feasibilities,
                     power_budget=power_budget, noise=noise)
    base.alpha = 0.0
    base.info["passive_objective"] = base.objective
    if cfg.relay_power_budget == 0 or np.sum(np.abs(base.P)) == 0:
        return base
    fs, pb, w, noise = _resolve(ch, scenario, feasibilities, power_budget, weights, noise)
    clusterings = [Clustering.identity(q) for q in ch.Q]
    engine = _HybridAscent(ch, w, noise, cfg, fs, clusterings, pb, params)
    tt = [np.array(c.theta) for c in base.configs]
    P, tt, f, trace, conv, it = engine.run(base.P, tt)
    sol = _finish(engine, P, tt, f, base.iterate_trace + trace[1:], conv,
                  base.iterations + it, base.initial_objective, alpha=engine.alpha)
    sol.info["passive_objective"] = base.objective
    return sol


# -- secrecy -------------------------------------------------------------------

def _logdet(A):
    sign, val = np.linalg.slogdet(A)
    return val / LN2


def _eve_capacity_from_Y(Ye, noise_eve):
    """C_Eve for eavesdropper observations ``Ye = [g1, g2]`` (N_Eve x 2)."""
    n = Ye.shape[0]
    R2 = noise_eve * np.eye(n) + np.outer(Ye[:, 1], Ye[:, 1].conj())
    R = R2 + np.outer(Ye[:, 0], Ye[:, 0].conj())
    return max(0.0, float(_logdet(R) - _logdet(R2)))


def eve_capacity(ch, configs, p1, p2, eve=None, noise_eve=None):
    """Capacity of the link to the eavesdropper with user 2's stream as interference."""
    if not ch.has_eve:
        raise MissingEveChannels("channel set has no eavesdropper blocks")
    if noise_eve is None:
        if eve is None:
            eve = ch.scenario.eavesdropper if ch.scenario is not None else None
        if eve is None:
            raise MissingEveChannels("eavesdropper noise power unknown")
        noise_eve = eve.noise_power
    if not noise_eve > 0:
        raise InvalidScenario("eavesdropper noise power must be > 0")
    He = eve_channel(ch, configs)
    p1 = np.asarray(p1, dtype=complex).reshape(-1)
    p2 = np.asarray(p2, dtype=complex).reshape(-1)
    if p1.size != ch.L or p2.size != ch.L:
        raise DimensionMismatch("precoder columns must have length L")
    return _eve_capacity_from_Y(np.stack([He @ p1, He @ p2], axis=1), noise_eve)


@dataclass(frozen=True)
class SecrecyResult:
    C1: float
    C2: float
    C_Eve: float
    secrecy_rate: float

    CSV_COLUMNS = ("C1", "C2", "C_Eve", "secrecy_rate")

    def csv_row(self):
        return [repr(float(getattr(self, c))) for c in self.CSV_COLUMNS]


def secrecy_csv(results):
    """CSV text with one row per SecrecyResult."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SecrecyResult.CSV_COLUMNS)
    for r in results:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def _two_users(ch):
    if ch.K != 2:
        raise InvalidScenario(f"the secrecy problem has exactly two users, got K={ch.K}")


def secrecy_eval(ch, configs, p1, p2, scenario=None, noise=None, noise_eve=None):
    """C1, C2, C_Eve and the secrecy rate of user 1 for precoder columns p1, p2."""
    _two_users(ch)
    scenario = scenario if scenario is not None else ch.scenario
    if noise is None and scenario is not None:
        noise = scenario.noise_powers
    noise = _noise(ch, noise)
    eve = scenario.eavesdropper if scenario is not None else None
    P = np.stack([np.asarray(p1, complex).reshape(-1), np.asarray(p2, complex).reshape(-1)], axis=1)
    g = sinr_from_matrix(composite_channel(ch, configs), P, noise)
    c1, c2 = (float(np.log2(1.0 + v)) for v in g)
    c_eve = eve_capacity(ch, configs, P[:, 0], P[:, 1], eve, noise_eve)
    return SecrecyResult(c1, c2, c_eve, max(0.0, c1 - c_eve))


class _SecrecyAscent(_WsrAscent):
    """Penalized secrecy objective ``C1 - C_Eve - mu * [d - C2]_+^2``."""

    def __init__(self, ch, noise, noise_eve, demand, mu, *args):
        super().__init__(ch, np.array([1.0, 0.0]), noise, *args)
        self.noise_eve = noise_eve
        self.demand = demand
        self.mu = mu
        self.H_RE = ch.H_RE

    def _batch(self, Y, Ye):
        """Penalized objective for stacks of legitimate and eavesdropper outputs."""
        pw = np.abs(Y) ** 2
        sig = np.diagonal(pw, axis1=1, axis2=2)
        rates = np.log2(1.0 + sig / (pw.sum(axis=2) - sig + self.noise))
        n = Ye.shape[1]
        y1, y2 = Ye[:, :, 0], Ye[:, :, 1]
        R2 = self.noise_eve * np.eye(n) + y2[:, :, None] * y2.conj()[:, None, :]
        R = R2 + y1[:, :, None] * y1.conj()[:, None, :]
        c_eve = np.maximum((np.linalg.slogdet(R)[1] - np.linalg.slogdet(R2)[1]) / LN2, 0.0)
        short = np.maximum(self.demand - rates[:, 1], 0.0)
        return rates[:, 0] - c_eve - self.mu * short**2

    def rotation_values(self, P, tt, n, psis):
        th = self.thetas(tt)[n]
        Z = self.ch.H_BR[n] @ P
        Y1 = (self.ch.H_RU[n] * th) @ Z
        Ye1 = (self.H_RE[n] * th) @ Z
        Y0 = self._H(tt) @ P - Y1
        Ye0 = self._He(tt) @ P - Ye1
        rot = np.exp(1j * np.asarray(psis))[:, None, None]
        return self._batch(Y0[None] + rot * Y1[None], Ye0[None] + rot * Ye1[None])

    def sweep_state(self, P, tt):
        return self._H(tt) @ P, self._He(tt) @ P

    def _columns(self, P, n, r):
        m = self.cl[n].members(r)
        Z = self.ch.H_BR[n][m] @ P
        return self.ch.H_RU[n][:, m] @ Z, self.H_RE[n][:, m] @ Z

    def sweep_commit(self, state, P, n, r, delta):
        a, b = self._columns(P, n, r)
        return state[0] + delta * a, state[1] + delta * b

    def element_values(self, P, tt, n, r, cands, state=None):
        Y, Ye = self.sweep_state(P, tt) if state is None else state
        a, b = self._columns(P, n, r)
        d = (np.asarray(cands) - tt[n][r])[:, None, None]
        return self._batch(Y[None] + d * a[None], Ye[None] + d * b[None])

    def _He(self, tt):
        return eve_channel(self.ch, self.thetas(tt))

    def parts(self, P, tt):
        g = sinr_from_matrix(self._H(tt), P, self.noise)
        c1, c2 = np.log2(1.0 + g)
        c_eve = _eve_capacity_from_Y(self._He(tt) @ P, self.noise_eve)
        return float(c1), float(c2), c_eve

    def value(self, P, tt):
        c1, c2, c_eve = self.parts(P, tt)
        short = max(0.0, self.demand - c2)
        return c1 - c_eve - self.mu * short**2

    def candidate_P(self, P, tt):
        return []

    def gradients(self, P, tt):
        H = self._H(tt)
        Y = H @ P
        M = rate_coefficients(Y, self.noise, np.array([1.0, 0.0])) * Y
        c2 = np.log2(1.0 + sinr_from_matrix(H, P, self.noise)[1])
        short = max(0.0, self.demand - c2)
        if short > 0:
            M = M + 2.0 * self.mu * short * (
                rate_coefficients(Y, self.noise, np.array([0.0, 1.0])) * Y)
        He = self._He(tt)
        Ye = He @ P
        n = Ye.shape[0]
        R2 = self.noise_eve * np.eye(n) + np.outer(Ye[:, 1], Ye[:, 1].conj())
        R = R2 + np.outer(Ye[:, 0], Ye[:, 0].conj())
        Me = np.linalg.solve(R, Ye) / LN2
        Me[:, 1] -= np.linalg.solve(R2, Ye[:, 1]) / LN2
        gP = H.conj().T @ M - He.conj().T @ Me
        gT = []
        for n_, (ru, br) in enumerate(zip(self.ch.H_RU, self.ch.H_BR)):
            Z = br @ P
            g = theta_gradient(ru, M, Z) - theta_gradient(self.H_RE[n_], Me, Z)
            gT.append(g)
        return gP, gT


PENALTY_SCHEDULE = (1.0, 10.0, 100.0, 1e3, 1e4)


def solve_secrecy(ch, scenario=None, C_demand=0.0, params=None, *, feasibilities=None,
                  power_budget=None, noise=None, noise_eve=None, penalties=PENALTY_SCHEDULE):
    """Maximize user 1's secrecy rate subject to ``C2 >= C_demand``.

    The demand is first checked by maximizing C2 alone; that solution and
    the C1-only rate optimum are used as starts next to the random restarts. Each start
    runs an ascent on the penalized objective for an increasing penalty
    schedule, and the best iterate meeting the demand (to 1e-6) is returned.
    ``info`` carries the SecrecyResult of the returned point.
    """
    _two_users(ch)
    if not ch.has_eve:
        raise MissingEveChannels("channel set has no eavesdropper blocks")
    scenario = scenario if scenario is not None else ch.scenario
    params = params or SolverParams()
    if not C_demand >= 0:
        raise InvalidScenario("C_demand must be >= 0")
    if noise_eve is None:
        if scenario is None or scenario.eavesdropper is None:
            raise MissingEveChannels("eavesdropper noise power unknown")
        noise_eve = scenario.eavesdropper.noise_power
    fs, pb, _, noise = _resolve(ch, scenario, feasibilities, power_budget, None, noise)
    clusterings = [Clustering.identity(q) for q in ch.Q]

    starts = []
    if C_demand > 0:
        best_c2 = solve_wsr(ch, scenario, params, weights=np.array([0.0, 1.0]),
                            feasibilities=fs, power_budget=pb, noise=noise)
        if best_c2.objective < C_demand - FEASIBILITY_TOL:
            raise DemandInfeasible(
                f"user 2 reaches at most {best_c2.objective:.6g} bit/s/Hz < demand {C_demand:.6g}")
        starts.append((best_c2.P, [np.array(c.theta) for c in best_c2.configs]))
    # user 1's rate optimum: the secrecy rate never exceeds C1, and with a blind
    # eavesdropper and no demand the two problems coincide
    best_c1 = solve_wsr(ch, scenario, params, weights=np.array([1.0, 0.0]),
                        feasibilities=fs, power_budget=pb, noise=noise)
    starts.append((best_c1.P, [np.array(c.theta) for c in best_c1.configs]))

    best = {"key": -np.inf}

    def consider(engine, P, tt):
        c1, c2, c_eve = engine.parts(P, tt)
        if c2 >= C_demand - FEASIBILITY_TOL and c1 - c_eve > best["key"]:
            best.update(key=c1 - c_eve, P=P.copy(), tt=[t.copy() for t in tt], engine=engine)

    def make(mu):
        return _SecrecyAscent(ch, noise, noise_eve, C_demand, mu, fs, clusterings, pb, params)

    # random restarts first, so a zero-demand run reproduces the rate solver's starts
    inits = [initial_point(ch, fs, clusterings, pb, _restart_rng(ch, params, r))
             for r in range(params.restarts)] + starts
    schedule = penalties if C_demand > 0 else penalties[:1]
    f0 = None
    traces, total_it = {}, 0
    for P0, tt0 in inits:
        P, tt = np.asarray(P0, complex), [np.asarray(t, complex) for t in tt0]
        for mu in schedule:
            engine = make(mu)
            P = engine.project_P(P)
            if f0 is None:
                f0 = engine._value(P, tt)
            consider(engine, P, tt)
            P, tt, f, trace, conv, it = engine.run(
                P, tt, on_iterate=lambda P_, tt_, f_, e=engine: consider(e, P_, tt_))
            traces[id(engine)] = (trace, conv)
            total_it += it
    if "P" not in best:
        raise DemandInfeasible("no iterate met the user-2 demand")
    engine = best["engine"]
    P, tt = best["P"], best["tt"]
    result = secrecy_eval(ch, engine.thetas(tt), P[:, 0], P[:, 1], scenario, noise, noise_eve)
    trace, conv = traces[id(engine)]
    sol = _finish(engine, P, tt, result.secrecy_rate, trace, conv, total_it, f0)
    sol.info["secrecy"] = result
    return sol


__all__ = [
    "HybridRelayConfig", "SecrecyResult", "sinr_active", "sinr_mrc", "relay_power",
    "alpha_max", "golden_section_max", "solve_hybrid", "eve_capacity", "secrecy_eval",
    "secrecy_csv", "solve_secrecy",
]
