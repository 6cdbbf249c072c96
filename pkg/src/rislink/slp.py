"""Symbol-level precoding with constructive-interference (CI) constraints.

For a PSK symbol ``s`` the noise-free sample ``y = e^T x`` seen by a user is
rotated onto the symbol axis, ``z = y * exp(-j*angle(s))``. The CI sector of
half-angle ``phi`` is

    (Re z - sigma*sqrt(gamma)) * sin(phi) - |Im z| * cos(phi) >= 0,

which is the usual ``tan(phi)`` form multiplied by ``cos(phi)``. Written out
it is the intersection of two half-planes (one when ``phi = pi/2``), so the
minimum-power transmit vector is a least-distance program. It is solved
exactly in its nonnegative dual by an active-set method.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .exceptions import CombinatorialCap, DimensionMismatch, Infeasible, InvalidScenario
from .precode import SolverParams
from .reflect import FeasibilitySet, ReflectionConfig, phase_grid, project
from .scene import composite_channel
from .trace import write_trace_csv

log = logging.getLogger(__name__)

SLACK_TOL = 1e-6
INFEASIBLE_SLACK = -1e-4
DEFAULT_SYMBOL_CAP = 4096


def ci_slack(y_tilde, s, sigma, gamma, phi):
    """Left-hand side of the CI constraint in its ``tan(phi)`` form.

    Nonnegative values mean the noise-free sample lies in the CI sector of
    symbol ``s``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if not 0 < phi < np.pi / 2:
        raise ValueError("phi must lie in (0, pi/2)")
    z = complex(y_tilde) * np.exp(-1j * np.angle(s))
    return (z.real - sigma * np.sqrt(gamma)) * np.tan(phi) - abs(z.imag)


def normalized_slack(y, s, sigma, gamma, phi):
    """CI slack in the ``cos(phi)``-scaled form, finite for ``phi = pi/2``."""
    y = np.asarray(y, dtype=complex)
    z = y * np.exp(-1j * np.angle(s))
    return (z.real - sigma * np.sqrt(gamma)) * np.sin(phi) - np.abs(z.imag) * np.cos(phi)


@dataclass(eq=False)
class SlpSolution:
    """Minimum-power symbol-level solution.

    ``x`` is set for a single symbol slot, ``X`` (one column per symbol
    combination) for the all-symbol variant. ``slack`` holds the scaled CI
    slack per user (per user and column for ``X``).
    """

    x: np.ndarray | None
    X: np.ndarray | None
    slack: np.ndarray
    power: float
    configs: list
    symbols: np.ndarray
    iterate_trace: list = field(default_factory=list)
    min_slack_trace: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    info: dict = field(default_factory=dict)


# -- least-distance program ----------------------------------------------------

def nnqp(Q, c, max_iter=None):
    """Solve ``min 0.5 mu^T Q mu - c^T mu`` subject to ``mu >= 0``.

    Active-set method in the style of Lawson and Hanson; finite for positive
    definite ``Q``. Returns ``mu``.
    """
    m = c.size
    max_iter = max_iter or 10 * m + 50
    mu = np.zeros(m)
    free = np.zeros(m, dtype=bool)
    scale = max(np.max(np.abs(c)), 1e-300)
    tol = 1e-13 * scale * max(1.0, np.max(np.abs(np.diag(Q))))
    for _ in range(max_iter):
        w = c - Q @ mu
        w[free] = -np.inf
        j = int(np.argmax(w))
        if not w[j] > tol:
            break
        free[j] = True
        for _ in range(max_iter):
            idx = np.flatnonzero(free)
            z = np.zeros(m)
            z[idx] = np.linalg.lstsq(Q[np.ix_(idx, idx)], c[idx], rcond=None)[0]
            if np.all(z[idx] > 0):
                mu = z
                break
            neg = idx[z[idx] <= 0]
            ratios = mu[neg] / (mu[neg] - z[neg])
            alpha = np.min(ratios)
            mu = mu + alpha * (z - mu)
            drop = free & (mu <= 0)
            drop[neg[np.argmin(ratios)]] = True
            mu[drop] = 0.0
            free &= ~drop
            if not free.any():
                break
    return np.maximum(mu, 0.0)


def ldp(G, c):
    """Least-norm ``x`` with ``G x >= c``. Returns ``(x, mu, kkt_residual)``.

    ``x = G^T mu`` with ``mu`` the dual multipliers of the inequality rows.
    """
    Qm = G @ G.T
    mu = nnqp(Qm, c)
    x = G.T @ mu
    r = G @ x - c
    scale = max(np.max(np.abs(c)), 1e-300)
    kkt = max(float(np.max(np.maximum(-r, 0.0))), float(np.max(np.abs(mu * r)))) / scale
    return x, mu, kkt


def certify_feasible(G, c):
    """Maximize the worst normalized slack over a box; raise Infeasible if < -1e-4.

    The rows are scaled to unit norm and the thresholds to unit maximum, so
    the certificate does not depend on channel or noise scale.
    """
    norms = np.linalg.norm(G, axis=1)
    if np.any(norms == 0):
        raise Infeasible("a CI constraint has an all-zero channel row")
    Gn = G / norms[:, None]
    cn = c / norms
    cn = cn / max(np.max(np.abs(cn)), 1e-300)
    if np.linalg.matrix_rank(Gn) == Gn.shape[0]:
        return np.inf
    m, d = Gn.shape
    # variables [x, t]; maximize t subject to Gn x - cn >= t, |x_i| <= 1e6
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    A = np.hstack([-Gn, np.ones((m, 1))])
    bounds = [(-1e6, 1e6)] * d + [(None, 1.0)]
    res = linprog(cost, A_ub=A, b_ub=-cn, bounds=bounds, method="highs")
    best = -res.fun if res.status == 0 else -np.inf
    if best < INFEASIBLE_SLACK:
        raise Infeasible(f"CI constraints infeasible (best normalized slack {best:.3g})")
    return best


# -- problem assembly ----------------------------------------------------------

def _real(b):
    """Row of the real-embedded constraint ``Re(b x)`` on ``[Re x, Im x]``."""
    return np.concatenate([b.real, -b.imag], axis=-1)


class _CiProblem:
    """CI constraint rows of every symbol vector, for a given composite channel."""

    def __init__(self, sigma, gamma, phi):
        self.sigma = np.asarray(sigma, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        self.phi = np.asarray(phi, dtype=float)
        self.thr = self.sigma * np.sqrt(self.gamma)
        # rotation weights per user: Re(w * z) >= thr * sin(phi)
        self.w = []
        for ph in self.phi:
            if np.isclose(np.cos(ph), 0.0, atol=1e-15):
                self.w.append(np.array([1.0 + 0j]))
            else:
                self.w.append(np.array([np.sin(ph) - 1j * np.cos(ph),
                                        np.sin(ph) + 1j * np.cos(ph)]))

    def rows(self, s):
        """(user index, complex weight w' such that Re(w' e_k x) >= c, c) per row."""
        users, weights, rhs = [], [], []
        for k, sk in enumerate(s):
            rot = np.exp(-1j * np.angle(sk))
            for w in self.w[k]:
                users.append(k)
                weights.append(w * rot)
                rhs.append(self.thr[k] * np.sin(self.phi[k]))
        return np.array(users), np.array(weights), np.array(rhs)

    def solve(self, E, s, check=True):
        """Minimum-norm x for symbol vector ``s`` on composite channel ``E``."""
        if np.any(np.linalg.norm(E, axis=1) == 0):
            raise Infeasible("a user has an all-zero effective channel")
        users, wts, c = self.rows(s)
        G = _real(wts[:, None] * E[users])
        if check:
            certify_feasible(G, c)
        xr, mu, kkt = ldp(G, c)
        L = E.shape[1]
        x = xr[:L] + 1j * xr[L:]
        return x, mu, kkt, users, wts

    def slacks(self, E, x, s):
        y = E @ x
        return normalized_slack(y, np.asarray(s), self.sigma, self.gamma, self.phi)

    def zf_point(self, E, s):
        """ZF transmit vector placing every user exactly on its CI threshold."""
        if np.linalg.matrix_rank(E) < E.shape[0]:
            return None
        d = self.thr * np.exp(1j * np.angle(np.asarray(s)))
        return np.linalg.pinv(E) @ d


def _terminal_params(ch, scenario, sigma, gamma, phi):
    scenario = scenario if scenario is not None else ch.scenario
    if sigma is None or gamma is None or phi is None:
        if scenario is None:
            raise InvalidScenario("need a Scenario or explicit sigma, gamma and phi")
        terms = scenario.terminals
        sigma = np.sqrt([t.noise_power for t in terms]) if sigma is None else sigma
        gamma = [t.sinr_target for t in terms] if gamma is None else gamma
        phi = [t.constellation.ci_half_angle for t in terms] if phi is None else phi
    sigma, gamma, phi = (np.broadcast_to(np.asarray(v, float), (ch.K,)).copy()
                         for v in (sigma, gamma, phi))
    if np.any(gamma <= 0):
        raise InvalidScenario("sinr targets must be > 0")
    if np.any((phi <= 0) | (phi > np.pi / 2)):
        raise InvalidScenario("CI half-angles must lie in (0, pi/2]")
    return sigma, gamma, phi


def _feasibilities(ch, scenario, feasibilities):
    scenario = scenario if scenario is not None else ch.scenario
    if feasibilities is None:
        feasibilities = (list(scenario.feasibilities) if scenario is not None
                         else [FeasibilitySet.continuous()] * ch.N)
    if len(feasibilities) != ch.N:
        raise InvalidScenario("one feasibility set per RIS is required")
    return list(feasibilities)


def _thetas_of(configs, ch, fs):
    if configs is None:
        return [np.ones(q, dtype=complex) for q in ch.Q]
    out = []
    for c, q in zip(configs, ch.Q):
        th = np.array(c.theta if isinstance(c, ReflectionConfig) else c, dtype=complex)
        if th.size != q:
            raise DimensionMismatch(f"configuration has {th.size} coefficients, RIS has {q}")
        out.append(th)
    if len(out) != ch.N:
        raise DimensionMismatch("one configuration per RIS is required")
    return out


class _SlpEngine:
    """Total minimum power over a set of symbol vectors, as a function of theta."""

    def __init__(self, ch, problem, symbol_sets, fs, params):
        self.ch = ch
        self.prob = problem
        self.S = symbol_sets
        self.fs = fs
        self.params = params

    def evaluate(self, tt, check=True):
        E = composite_channel(self.ch, tt)
        cols, duals = [], []
        kkt = 0.0
        for s in self.S:
            x, mu, r, users, wts = self.prob.solve(E, s, check=check)
            cols.append(x)
            duals.append((mu, users, wts))
            kkt = max(kkt, r)
        X = np.stack(cols, axis=1)
        return float(np.sum(np.abs(X) ** 2)), X, duals, kkt

    def power_or_inf(self, tt):
        try:
            return self.evaluate(tt)[0]
        except Infeasible:
            return np.inf

    def gradient(self, X, duals):
        """d(total power)/d(theta*) per RIS, from the dual multipliers."""
        grads = [np.zeros(q, dtype=complex) for q in self.ch.Q]
        for j, (mu, users, wts) in enumerate(duals):
            x = X[:, j]
            coef = mu * wts
            for n in range(self.ch.N):
                z = self.ch.H_BR[n] @ x
                a = coef @ self.ch.H_RU[n][users]
                grads[n] -= np.conj(a * z)
        return grads

    def step(self, tt, f, X, duals):
        """One theta update; returns (tt, f, X, duals) with f not larger than before."""
        p = self.params
        cont = [n for n, fs in enumerate(self.fs) if not fs.is_discrete]
        if cont:
            g = self.gradient(X, duals)
            gmax = max(np.max(np.abs(g[n])) for n in cont)
            if gmax > 0:
                t = getattr(self, "_t", p.step_init)
                for _ in range(p.max_backtracks):
                    new = list(tt)
                    pred = 0.0
                    for n in cont:
                        new[n] = project(tt[n] - t * g[n] / gmax, self.fs[n])
                        pred += 2.0 * np.real(np.vdot(g[n], tt[n] - new[n]))
                    if pred > 0:
                        try:
                            fn, Xn, dn, _ = self.evaluate(new)
                        except Infeasible:
                            fn = np.inf
                        if fn < f and f - fn >= p.armijo * pred:
                            self._t = min(t / p.backtrack_factor, 1e3)
                            tt, f, X, duals = new, fn, Xn, dn
                            break
                    t *= p.backtrack_factor
                else:
                    self._t = p.step_init
        for n, fs in enumerate(self.fs):
            if not fs.is_discrete:
                continue
            grid = phase_grid(fs.tau)
            for q in range(tt[n].size):
                cur = tt[n][q]
                best_v, best_f = cur, f
                for v in grid:
                    if v == cur:
                        continue
                    trial = list(tt)
                    trial[n] = tt[n].copy()
                    trial[n][q] = v
                    fv = self.power_or_inf(trial)
                    if fv < best_f:
                        best_v, best_f = v, fv
                if best_v != cur:
                    tt = list(tt)
                    tt[n] = tt[n].copy()
                    tt[n][q] = best_v
                    f, X, duals, _ = self.evaluate(tt)
        return tt, f, X, duals

    def run(self, tt, optimize_theta):
        p = self.params
        f, X, duals, kkt = self.evaluate(tt)
        trace, slack_trace = [f], [self.min_slack(tt, X)]
        converged = True
        it = 0
        if optimize_theta:
            converged = False
            for it in range(1, p.max_outer_iters + 1):
                f_prev = f
                tt, f, X, duals = self.step(tt, f, X, duals)
                trace.append(f)
                slack_trace.append(self.min_slack(tt, X))
                if f_prev - f <= p.tol * max(abs(f_prev), 1e-300):
                    converged = True
                    break
            kkt = self.evaluate(tt)[3]
        return tt, f, X, trace, slack_trace, converged, it, kkt

    def slack_matrix(self, tt, X):
        E = composite_channel(self.ch, tt)
        return np.stack([self.prob.slacks(E, X[:, j], s) for j, s in enumerate(self.S)], axis=1)

    def min_slack(self, tt, X):
        return float(np.min(self.slack_matrix(tt, X)))


def _zf_fallback(engine, tt, X, f):
    """Replace columns by the ZF point if that is ever cheaper (it should not be)."""
    E = composite_channel(engine.ch, tt)
    zf_power = 0.0
    for j, s in enumerate(engine.S):
        xz = engine.prob.zf_point(E, s)
        if xz is None:
            return X, f, None
        pz = float(np.sum(np.abs(xz) ** 2))
        zf_power += pz
        if pz < np.sum(np.abs(X[:, j]) ** 2) * (1.0 - 1e-9):
            log.warning("active-set column %d worse than the ZF point; using ZF", j)
            X = X.copy()
            X[:, j] = xz
    return X, float(np.sum(np.abs(X) ** 2)), zf_power


def _zf_power(prob, E, symbol_sets):
    """Total power of the CI-scaled ZF points, or None when E is rank deficient."""
    total = 0.0
    for s in symbol_sets:
        xz = prob.zf_point(E, s)
        if xz is None:
            return None
        total += float(np.sum(np.abs(xz) ** 2))
    return total


def _solve(ch, scenario, symbol_sets, configs_fixed, params, feasibilities, init_configs,
           sigma, gamma, phi):
    params = params or SolverParams()
    fs = _feasibilities(ch, scenario, feasibilities)
    sigma, gamma, phi = _terminal_params(ch, scenario, sigma, gamma, phi)
    prob = _CiProblem(sigma, gamma, phi)
    engine = _SlpEngine(ch, prob, symbol_sets, fs, params)
    if configs_fixed is not None:
        tt = _thetas_of(configs_fixed, ch, fs)
        free = False
    else:
        tt = [project(t, f) for t, f in zip(_thetas_of(init_configs, ch, fs), fs)]
        free = True
    zf_init = _zf_power(prob, composite_channel(ch, tt), engine.S)
    tt, f, X, trace, slack_trace, conv, it, kkt = engine.run(tt, free)
    X, f, zf_power = _zf_fallback(engine, tt, X, f)
    slack = engine.slack_matrix(tt, X)
    if np.min(slack) < -SLACK_TOL * max(1.0, float(np.max(prob.thr))):
        raise Infeasible(f"solver could not meet CI constraints (min slack {np.min(slack):.3g})")
    configs = [ReflectionConfig(th, f_) for th, f_ in zip(tt, fs)]
    if params.trace_path:
        write_trace_csv(params.trace_path, trace, slack_trace)
    info = {"kkt_residual": kkt, "zf_power": zf_power, "zf_init_power": zf_init}
    return X, slack, f, configs, trace, slack_trace, conv, it, info


def solve_slp(ch, scenario=None, symbols=None, configs_fixed=None, params=None, *,
              feasibilities=None, init_configs=None, sigma=None, gamma=None, phi=None):
    """Minimum-power transmit vector for one symbol slot under CI constraints.

    With ``configs_fixed`` the RIS coefficients are held and the problem is
    convex in ``x``. Otherwise ``x`` and theta alternate: exact x-step, then
    a projected gradient step on the optimal power (dual-multiplier
    sensitivity) for continuous/general panels and exact per-element
    enumeration for discrete panels, starting from ``init_configs`` (all
    ones by default).
    """
    if symbols is None:
        raise InvalidScenario("symbols are required")
    s = np.asarray(symbols, dtype=complex).reshape(-1)
    if s.size != ch.K:
        raise DimensionMismatch(f"expected {ch.K} symbols, got {s.size}")
    if np.any(s == 0):
        raise InvalidScenario("PSK symbols must be nonzero")
    X, slack, f, configs, trace, st, conv, it, info = _solve(
        ch, scenario, [s], configs_fixed, params, feasibilities, init_configs, sigma, gamma, phi)
    return SlpSolution(x=X[:, 0], X=None, slack=slack[:, 0], power=f, configs=configs,
                       symbols=s, iterate_trace=trace, min_slack_trace=st, converged=conv,
                       iterations=it, info=info)


def symbol_combinations(scenario):
    """All symbol vectors, user 0 varying slowest (row i is column i of X)."""
    pts = [t.constellation.points for t in scenario.terminals]
    return np.array(list(itertools.product(*pts)), dtype=complex)


def solve_slp_all_symbols(ch, scenario=None, params=None, *, configs_fixed=None,
                          feasibilities=None, init_configs=None, cap=DEFAULT_SYMBOL_CAP,
                          sigma=None, gamma=None, phi=None):
    """One theta shared by every symbol combination, minimizing ``||X||_F``.

    Columns decouple once theta is fixed, so each is solved independently.
    """
    scenario = scenario if scenario is not None else ch.scenario
    if scenario is None:
        raise InvalidScenario("the all-symbol problem needs a Scenario for the constellations")
    count = int(np.prod([t.constellation.M for t in scenario.terminals]))
    if count > cap:
        raise CombinatorialCap(f"{count} symbol combinations exceed the cap of {cap}")
    S = symbol_combinations(scenario)
    X, slack, f, configs, trace, st, conv, it, info = _solve(
        ch, scenario, list(S), configs_fixed, params, feasibilities, init_configs,
        sigma, gamma, phi)
    return SlpSolution(x=None, X=X, slack=slack, power=f, configs=configs, symbols=S,
                       iterate_trace=trace, min_slack_trace=st, converged=conv,
                       iterations=it, info=info)


__all__ = [
    "SlpSolution", "ci_slack", "normalized_slack", "nnqp", "ldp", "certify_feasible",
    "solve_slp", "solve_slp_all_symbols", "symbol_combinations",
]
