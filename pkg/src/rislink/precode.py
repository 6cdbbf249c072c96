"""Channel-level precoding: SINR and weighted sum rate, MRT/ZF baselines and
joint active/passive beamforming by alternating projected-gradient ascent.

Gradients are Wirtinger derivatives with respect to the conjugate variable,
which is the steepest-ascent direction for a real objective of complex
arguments. All line searches accept a step only if it strictly improves the
block objective, so every iterate trace is nondecreasing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatch,
    InvalidScenario,
    NonFiniteObjective,
    RankDeficient,
    ZeroChannel,
)
from .reflect import (
    CONTINUOUS,
    GENERAL,
    Clustering,
    FeasibilitySet,
    ReflectionConfig,
    expand,
    phase_grid,
    project,
    random_feasible,
)
from .scene import cascade, composite_channel
from .trace import write_trace_csv

log = logging.getLogger(__name__)

LN2 = np.log(2.0)


@dataclass(frozen=True)
class SolverParams:
    max_outer_iters: int = 200
    max_inner_iters: int = 20
    tol: float = 1e-6
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    restarts: int = 4
    max_backtracks: int = 40
    armijo: float = 1e-4
    seed: int = 0
    trace_path: str | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.step_init > 0:
            raise ValueError("step_init must be > 0")


@dataclass(eq=False)
class PrecodeSolution:
    P: np.ndarray
    configs: list
    objective: float
    iterate_trace: list
    converged: bool
    initial_objective: float = float("nan")
    iterations: int = 0
    alpha: float | None = None
    clusterings: list | None = None
    info: dict = field(default_factory=dict)

    @property
    def power(self):
        return float(np.sum(np.abs(self.P) ** 2))


# -- evaluation ----------------------------------------------------------------

def _noise(ch, noise):
    if noise is not None:
        return np.broadcast_to(np.asarray(noise, dtype=float), (ch.K,)).copy()
    if ch.scenario is None:
        raise ValueError("noise powers are required for a ChannelSet without a Scenario")
    return ch.scenario.noise_powers


def sinr_from_matrix(H, P, noise):
    """Vector of per-user SINRs for an effective channel ``H`` (K x L)."""
    Y = H @ P
    pw = np.abs(Y) ** 2
    sig = np.diag(pw).copy()
    interf = pw.sum(axis=1) - sig
    return sig / (interf + noise)


def _check_P(ch, P):
    P = np.asarray(P, dtype=complex)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape != (ch.L, ch.K):
        raise DimensionMismatch(f"P must be {ch.L} x {ch.K}, got {P.shape}")
    return P


def sinr(ch, configs, P, k, noise=None):
    """SINR of user ``k`` on the composite channel built from ``configs``."""
    P = _check_P(ch, P)
    if not 0 <= k < ch.K:
        raise DimensionMismatch(f"user index {k} out of range for K={ch.K}")
    H = composite_channel(ch, configs)
    return float(sinr_from_matrix(H, P, _noise(ch, noise))[k])


def weighted_sum_rate(ch, configs, P, weights=None, noise=None):
    """``sum_k w_k log2(1 + sinr_k)``."""
    P = _check_P(ch, P)
    if weights is None:
        weights = ch.scenario.weights if ch.scenario is not None else np.ones(ch.K)
    w = np.asarray(weights, dtype=float)
    g = sinr_from_matrix(composite_channel(ch, configs), P, _noise(ch, noise))
    return float(np.sum(w * np.log2(1.0 + g)))


# -- baselines -----------------------------------------------------------------

def mrt_from_matrix(H, power_budget):
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0):
        raise ZeroChannel("MRT undefined: a user has an all-zero channel")
    K = H.shape[0]
    return (H.conj() / norms[:, None]).T * np.sqrt(power_budget / K)


def mrt_precoder(ch, configs, power_budget):
    """Conjugate beamformer, one unit-norm column per user, equal power split."""
    return mrt_from_matrix(composite_channel(ch, configs), power_budget)


def zf_from_matrix(H, power_budget):
    K = H.shape[0]
    if np.linalg.matrix_rank(H) < K:
        raise RankDeficient("zero-forcing needs a full-row-rank composite channel")
    W = H.conj().T @ np.linalg.inv(H @ H.conj().T)
    W = W / np.linalg.norm(W, axis=0)
    return W * np.sqrt(power_budget / K)


def zf_precoder(ch, configs, power_budget):
    """Right pseudo-inverse with every column scaled to ``power_budget / K``."""
    return zf_from_matrix(composite_channel(ch, configs), power_budget)


# -- gradients -----------------------------------------------------------------

def rate_coefficients(Y, noise, weights, extra_sinr=0.0):
    """Coefficient matrix C with d/dP* sum_k w_k log2(1+g_k+e_k) = H^H (C * Y).

    ``Y = H @ P``; ``extra_sinr`` is an additive SINR term independent of H
    (the active relay path under MRC).
    """
    pw = np.abs(Y) ** 2
    sig = np.diag(pw).copy()
    interf = pw.sum(axis=1) - sig + noise
    total = sig / interf + extra_sinr
    scale = weights / (LN2 * (1.0 + total))
    C = -(scale * sig / interf**2)[:, None] * np.ones_like(pw)
    np.fill_diagonal(C, scale / interf)
    return C


def theta_gradient(H_RU, M, Z):
    """Per-element gradient of a function of ``Y = (H_BU + H_RU diag(t) H_BR) P``.

    ``M`` is dF/dY* weighted (the ``C * Y`` matrix) and ``Z = H_BR @ P``.
    """
    return np.einsum("kq,kj,qj->q", H_RU.conj(), M, Z.conj())


def wmmse_update(H, P, noise, weights, power_budget):
    """One weighted-MMSE precoder update for a fixed effective channel.

    Minorize-maximize step for the weighted sum rate: MMSE receive scalars
    and MSE weights at ``P``, then the power-constrained transmit filter
    (Lagrange multiplier found by bisection).
    """
    Y = H @ P
    T = np.sum(np.abs(Y) ** 2, axis=1) + noise
    d = np.diag(Y).copy()
    u = d.conj() / T
    mse = 1.0 - np.abs(d) ** 2 / T
    w = 1.0 / np.maximum(mse, 1e-300)
    c = weights * w * np.abs(u) ** 2
    B = (H.T * c) @ H.conj()
    B = B.conj()
    rhs = (H.conj() * (weights * w * u.conj())[:, None]).T
    L = H.shape[1]

    def solve(mu):
        return np.linalg.solve(B + mu * np.eye(L), rhs)

    try:
        Pn = solve(0.0)
    except np.linalg.LinAlgError:
        Pn = None
    if Pn is not None and np.all(np.isfinite(Pn)) and np.sum(np.abs(Pn) ** 2) <= power_budget:
        return Pn
    lo, hi = 0.0, 1.0
    while np.sum(np.abs(solve(hi)) ** 2) > power_budget:
        hi *= 2.0
        if hi > 1e300:
            break
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.sum(np.abs(solve(mid)) ** 2) > power_budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return solve(hi)


# -- ascent engine -------------------------------------------------------------

class _Ascent:
    """Alternating ascent over the precoder and (clustered) reflection vectors.

    Subclasses provide ``value`` and ``gradients``; the engine owns the line
    searches, projections and the outer loop.
    """

    def __init__(self, ch, feasibilities, clusterings, power_budget, params):
        self.ch = ch
        self.fs = list(feasibilities)
        self.cl = list(clusterings)
        self.power_budget = float(power_budget)
        self.params = params
        self._tP = params.step_init
        self._tT = params.step_init

    # subclass hooks
    def value(self, P, tt):
        raise NotImplementedError

    def gradients(self, P, tt):
        """Return (dF/dP*, [dF/dtheta* per element, per RIS])."""
        raise NotImplementedError

    def extra_step(self, P, tt, f):
        return f

    # helpers
    def thetas(self, tt):
        return [expand(t, c) for t, c in zip(tt, self.cl)]

    def project_P(self, P):
        n2 = np.sum(np.abs(P) ** 2)
        if n2 > self.power_budget:
            P = P * np.sqrt(self.power_budget / n2)
        return P

    def _value(self, P, tt):
        f = self.value(P, tt)
        if not np.isfinite(f):
            raise NonFiniteObjective(f"objective evaluated to {f}")
        return f

    def _accept(self, f_new, f_old, pred):
        return f_new > f_old and f_new - f_old >= self.params.armijo * pred

    def candidate_P(self, P, tt):
        """Closed-form precoder candidates tried before the gradient steps."""
        return []

    def step_P(self, P, tt, f):
        p = self.params
        if self.power_budget <= 0:
            return P, f
        for cand in self.candidate_P(P, tt):
            cand = self.project_P(cand)
            fc = self._value(cand, tt)
            if fc > f:
                P, f = cand, fc
        radius = np.sqrt(self.power_budget)
        for _ in range(p.max_inner_iters):
            gP, _ = self.gradients(P, tt)
            gn = np.linalg.norm(gP)
            if not gn > 0:
                break
            d = gP / gn * radius
            t = self._tP
            accepted = False
            for _ in range(p.max_backtracks):
                Pn = self.project_P(P + t * d)
                pred = 2.0 * np.real(np.vdot(gP, Pn - P))
                if pred > 0:
                    fn = self._value(Pn, tt)
                    if self._accept(fn, f, pred):
                        accepted = True
                        break
                t *= p.backtrack_factor
            if not accepted:
                self._tP = p.step_init
                break
            gain = fn - f
            P, f = Pn, fn
            self._tP = min(t / p.backtrack_factor, 1e3)
            if gain <= p.tol * max(abs(f), 1e-12):
                break
        return P, f

    def _cluster_grad(self, g_elem, n):
        a = self.cl[n].assignment
        R = self.cl[n].R
        return (np.bincount(a, weights=g_elem.real, minlength=R)
                + 1j * np.bincount(a, weights=g_elem.imag, minlength=R))

    def step_theta(self, P, tt, f):
        if not tt:
            return tt, f
        cont = [n for n, fs in enumerate(self.fs) if not fs.is_discrete]
        tt, f = self._rotate_theta(P, tt, f, cont)
        tt, f = self._coordinate_sweep(P, tt, f)
        if not cont:
            return tt, f
        p = self.params
        for _ in range(p.max_inner_iters):
            _, g = self.gradients(P, tt)
            gc = {n: self._cluster_grad(g[n], n) for n in cont}
            gmax = max(np.max(np.abs(gc[n])) for n in cont)
            if not gmax > 0:
                break
            t = self._tT
            accepted = False
            for _ in range(p.max_backtracks):
                new = list(tt)
                pred = 0.0
                for n in cont:
                    new[n] = project(tt[n] + t * gc[n] / gmax, self.fs[n])
                    pred += 2.0 * np.real(np.vdot(gc[n], new[n] - tt[n]))
                if pred > 0:
                    fn = self._value(P, new)
                    if self._accept(fn, f, pred):
                        accepted = True
                        break
                t *= p.backtrack_factor
            if not accepted:
                self._tT = p.step_init
                break
            gain = fn - f
            tt, f = new, fn
            self._tT = min(t / p.backtrack_factor, 1e3)
            if gain <= p.tol * max(abs(f), 1e-12):
                break
        return tt, f

    def sweep_state(self, P, tt):
        """Cached quantities reused across one coordinate sweep (None: no cache)."""
        return None

    def sweep_commit(self, state, P, n, r, delta):
        return state

    def element_values(self, P, tt, n, r, cands, state=None):
        """Objective with cluster ``r`` of panel ``n`` set to each candidate."""
        out = np.empty(len(cands))
        for i, v in enumerate(cands):
            trial = list(tt)
            trial[n] = tt[n].copy()
            trial[n][r] = v
            out[i] = self._value(P, trial)
        return out

    def _coordinate_sweep(self, P, tt, f, samples=32, rounds=2):
        """Exact one-coefficient-at-a-time maximization.

        Discrete panels enumerate their phase grid; continuous panels search
        a refined phase grid; general panels a refined polar grid.
        """
        start, f_start = tt, f
        tt = [t.copy() for t in tt]
        state = self.sweep_state(P, tt)
        offsets = np.linspace(-1.0, 1.0, samples + 1)
        for n, fs in enumerate(self.fs):
            for r in range(tt[n].size):
                cur = tt[n][r]
                if fs.is_discrete:
                    cands = phase_grid(fs.tau)
                    vals = self.element_values(P, tt, n, r, cands, state)
                    i = int(np.argmax(vals))
                    best_v, best_f = cands[i], vals[i]
                else:
                    best_v, best_f = cur, f
                    center, half = np.angle(cur), np.pi
                    mags = np.array([1.0]) if fs.kind == CONTINUOUS else np.linspace(0.0, 1.0, 5)
                    for _ in range(rounds):
                        ph = center + half * offsets
                        cands = (mags[:, None] * np.exp(1j * ph)[None, :]).ravel()
                        vals = self.element_values(P, tt, n, r, cands, state)
                        i = int(np.argmax(vals))
                        if vals[i] > best_f:
                            best_v, best_f = cands[i], vals[i]
                        center, half = np.angle(best_v), 2.0 * half / samples
                        if fs.kind == GENERAL:
                            mags = np.clip(abs(best_v) + np.linspace(-0.125, 0.125, 5), 0.0, 1.0)
                    best_v = project(np.array([best_v]), fs)[0]
                if best_f > f and best_v != cur:
                    tt[n][r] = best_v
                    if state is None:
                        f_new = self._value(P, tt)
                        if f_new > f:
                            f = f_new
                        else:
                            tt[n][r] = cur
                    else:
                        state = self.sweep_commit(state, P, n, r, best_v - cur)
                        f = best_f
        if state is not None:
            # recompute from scratch so cached updates cannot drift the trace
            f = self._value(P, tt)
            if not f > f_start:
                return start, f_start
        return tt, f

    def rotation_values(self, P, tt, n, psis):
        """Objective with panel ``n`` rotated by each phase in ``psis``."""
        out = np.empty(len(psis))
        for i, psi in enumerate(psis):
            trial = list(tt)
            trial[n] = tt[n] * np.exp(1j * psi)
            out[i] = self._value(P, trial)
        return out

    def _rotate_theta(self, P, tt, f, panels, samples=16, rounds=6):
        """Grid-refined 1-D search over a common phase rotation of each panel.

        Gradient steps contract this mode only slowly when the reflected paths
        dominate the direct one, so it gets its own search.
        """
        for n in panels:
            center, half = 0.0, np.pi
            best_psi, best_f = 0.0, f
            for _ in range(rounds):
                psis = center + np.linspace(-half, half, samples + 1)
                vals = self.rotation_values(P, tt, n, psis)
                i = int(np.argmax(vals))
                if vals[i] > best_f:
                    best_psi, best_f = psis[i], vals[i]
                center, half = best_psi, 2.0 * half / samples
            if best_f > f and np.isfinite(best_f):
                tt = list(tt)
                tt[n] = tt[n] * np.exp(1j * best_psi)
                f = self._value(P, tt)
        return tt, f

    def run(self, P, tt, on_iterate=None):
        p = self.params
        P = self.project_P(np.array(P, dtype=complex))
        tt = [np.array(t, dtype=complex) for t in tt]
        f = self._value(P, tt)
        trace = [f]
        converged = False
        it = 0
        for it in range(1, p.max_outer_iters + 1):
            f_prev = f
            P, f = self.step_P(P, tt, f)
            tt, f = self.step_theta(P, tt, f)
            f = self.extra_step(P, tt, f)
            trace.append(f)
            if on_iterate is not None:
                on_iterate(P, tt, f)
            if f - f_prev <= p.tol * max(abs(f_prev), 1e-12):
                converged = True
                break
        return P, tt, f, trace, converged, it


class _WsrAscent(_Ascent):
    def __init__(self, ch, weights, noise, *args):
        super().__init__(ch, *args)
        self.weights = np.asarray(weights, dtype=float)
        self.noise = noise

    def _H(self, tt):
        return composite_channel(self.ch, self.thetas(tt))

    def extra_sinr(self, P):
        """Additive SINR term that does not depend on theta (zero here)."""
        return 0.0

    def value(self, P, tt):
        g = sinr_from_matrix(self._H(tt), P, self.noise) + self.extra_sinr(P)
        return float(np.sum(self.weights * np.log2(1.0 + g)))

    def rotation_values(self, P, tt, n, psis):
        H = self._H(tt)
        Y1 = cascade(self.ch.H_RU[n], self.thetas(tt)[n], self.ch.H_BR[n]) @ P
        Y0 = H @ P - Y1
        Y = Y0[None] + np.exp(1j * np.asarray(psis))[:, None, None] * Y1[None]
        return self._wsr_batch(Y, self.extra_sinr(P))

    def candidate_P(self, P, tt):
        H = self._H(tt)
        out = []
        for _ in range(3):
            P = wmmse_update(H, P, self.noise, self.weights, self.power_budget)
            out.append(P)
        return out

    def _element_column(self, P, n, r):
        m = self.cl[n].members(r)
        return self.ch.H_RU[n][:, m] @ (self.ch.H_BR[n][m] @ P)

    def sweep_state(self, P, tt):
        return self._H(tt) @ P

    def sweep_commit(self, Y, P, n, r, delta):
        return Y + delta * self._element_column(P, n, r)

    def element_values(self, P, tt, n, r, cands, state=None):
        Y = self._H(tt) @ P if state is None else state
        Y1 = self._element_column(P, n, r)
        delta = np.asarray(cands) - tt[n][r]
        Yc = Y[None] + delta[:, None, None] * Y1[None]
        return self._wsr_batch(Yc, self.extra_sinr(P))

    def _wsr_batch(self, Y, extra=0.0):
        pw = np.abs(Y) ** 2
        sig = np.diagonal(pw, axis1=1, axis2=2)
        g = sig / (pw.sum(axis=2) - sig + self.noise) + extra
        return np.sum(self.weights * np.log2(1.0 + g), axis=1)

    def gradients(self, P, tt):
        H = self._H(tt)
        Y = H @ P
        M = rate_coefficients(Y, self.noise, self.weights, self.extra_sinr(P)) * Y
        gP = H.conj().T @ M
        gT = [theta_gradient(ru, M, br @ P) for ru, br in zip(self.ch.H_RU, self.ch.H_BR)]
        return gP, gT


# -- solvers -------------------------------------------------------------------

def _restart_rng(ch, params, r):
    base = ch.scenario.seed if ch.scenario is not None else 0
    return np.random.default_rng(np.random.SeedSequence([int(base), int(params.seed), 7919, r]))


def _resolve(ch, scenario, feasibilities, power_budget, weights, noise):
    scenario = scenario if scenario is not None else ch.scenario
    if feasibilities is None:
        if scenario is None:
            feasibilities = [FeasibilitySet.continuous()] * ch.N
        else:
            feasibilities = list(scenario.feasibilities)
    if len(feasibilities) != ch.N:
        raise InvalidScenario("one feasibility set per RIS is required")
    if power_budget is None:
        if scenario is None:
            raise InvalidScenario("power budget unknown: pass a Scenario or power_budget")
        power_budget = scenario.power_budget
    if weights is None:
        weights = scenario.weights if scenario is not None else np.ones(ch.K)
    if len(weights) != ch.K:
        raise InvalidScenario("one weight per user is required")
    if noise is None and scenario is not None:
        noise = scenario.noise_powers
    noise = _noise(ch, noise)
    if scenario is not None and (scenario.K != ch.K or scenario.L != ch.L):
        raise InvalidScenario("scenario and channel dimensions disagree")
    return feasibilities, float(power_budget), np.asarray(weights, float), noise


def initial_point(ch, fs, clusterings, power_budget, rng):
    """Random feasible clustered thetas and an MRT precoder at full power."""
    tt = [random_feasible(c.R, f, rng) for c, f in zip(clusterings, fs)]
    thetas = [expand(t, c) for t, c in zip(tt, clusterings)]
    H = composite_channel(ch, thetas)
    try:
        P = mrt_from_matrix(H, power_budget)
    except ZeroChannel:
        P = np.zeros((ch.L, ch.K), dtype=complex)
        P[: ch.K, : ch.K] = np.eye(ch.K) * np.sqrt(power_budget / ch.K)
    return P, tt


def _finish(engine, P, tt, f, trace, converged, it, f0, **extra):
    configs = [ReflectionConfig(th, fs) for th, fs in zip(engine.thetas(tt), engine.fs)]
    if engine.params.trace_path:
        write_trace_csv(engine.params.trace_path, trace)
    return PrecodeSolution(
        P=P, configs=configs, objective=float(f), iterate_trace=[float(v) for v in trace],
        converged=converged, initial_objective=float(f0), iterations=it,
        clusterings=list(engine.cl), **extra,
    )


def _multistart(make_engine, ch, fs, clusterings, power_budget, params, init=None):
    best = None
    f0_first = None
    starts = [init] if init is not None else [None] * params.restarts
    for r, start in enumerate(starts):
        engine = make_engine()
        if start is None:
            P0, tt0 = initial_point(ch, fs, clusterings, power_budget, _restart_rng(ch, params, r))
        else:
            P0, tt0 = start
        f0 = engine._value(engine.project_P(np.asarray(P0, complex)), list(tt0))
        if f0_first is None:
            f0_first = f0
        out = engine.run(P0, tt0)
        if best is None or out[2] > best[1][2]:
            best = (engine, out)
    engine, (P, tt, f, trace, conv, it) = best
    return engine, P, tt, f, trace, conv, it, f0_first


def solve_wsr(ch, scenario=None, params=None, *, weights=None, feasibilities=None,
              power_budget=None, noise=None, clusterings=None, init=None):
    """Maximize the weighted sum rate over the precoder and RIS coefficients.

    Best of ``params.restarts`` random feasible starts (or the single
    ``init=(P, clustered_thetas)`` start when given). ``initial_objective`` of
    the result is the objective at the first start.
    """
    params = params or SolverParams()
    fs, pb, w, noise = _resolve(ch, scenario, feasibilities, power_budget, weights, noise)
    if clusterings is None:
        clusterings = [Clustering.identity(q) for q in ch.Q]
    if [c.Q for c in clusterings] != list(ch.Q):
        raise DimensionMismatch("clusterings must cover every RIS element")

    def make():
        return _WsrAscent(ch, w, noise, fs, clusterings, pb, params)

    if pb == 0:
        engine = make()
        P = np.zeros((ch.L, ch.K), dtype=complex)
        _, tt = initial_point(ch, fs, clusterings, 0.0, _restart_rng(ch, params, 0))
        return _finish(engine, P, tt, 0.0, [0.0], True, 0, 0.0)
    out = _multistart(make, ch, fs, clusterings, pb, params, init)
    return _finish(*out)


def _swap_search(engine, P, tt, f, max_sweeps=2):
    """Greedy element moves between clusters at fixed (P, cluster coefficients)."""
    for _ in range(max_sweeps):
        moved = False
        for n, cl in enumerate(engine.cl):
            a = np.array(cl.assignment)
            for q in range(a.size):
                own = a[q]
                if np.count_nonzero(a == own) == 1:
                    continue
                best_r, best_f = own, f
                for r in range(cl.R):
                    if r == own:
                        continue
                    a[q] = r
                    engine.cl[n] = Clustering(a.copy(), cl.R)
                    fr = engine._value(P, tt)
                    if fr > best_f:
                        best_r, best_f = r, fr
                a[q] = best_r
                engine.cl[n] = Clustering(a.copy(), cl.R)
                if best_r != own:
                    moved = True
                    f = best_f
        if not moved:
            break
    return f


def solve_wsr_clustered(ch, scenario=None, clustering=None, R=None, params=None, **kw):
    """Weighted-sum-rate maximization with clustered (shared) RIS coefficients.

    ``clustering`` fixes the partition (one Clustering per RIS). With only the
    cluster budget ``R`` (int, per-RIS sequence, or the scenario's panel
    budgets) the partition starts from contiguous blocks and is refined by
    greedy element moves followed by a warm-started re-solve.
    """
    params = params or SolverParams()
    if clustering is not None:
        if isinstance(clustering, Clustering):
            clustering = [clustering]
        return solve_wsr(ch, scenario, params, clusterings=list(clustering), **kw)
    scenario = scenario if scenario is not None else ch.scenario
    if R is None:
        if scenario is None:
            raise InvalidScenario("need a clustering, a cluster budget or a Scenario")
        R = [p.cluster_budget for p in scenario.ris]
    if np.isscalar(R):
        R = [int(R)] * ch.N
    for r, q in zip(R, ch.Q):
        if not 1 <= r <= q:
            raise InvalidScenario(f"cluster budget R={r} must satisfy 1 <= R <= Q={q}")
    clusterings = [Clustering.contiguous(q, r) for q, r in zip(ch.Q, R)]
    sol = solve_wsr(ch, scenario, params, clusterings=clusterings, **kw)
    if all(r == q for r, q in zip(R, ch.Q)):
        return sol
    fs, pb, w, noise = _resolve(ch, scenario, kw.get("feasibilities"), kw.get("power_budget"),
                                kw.get("weights"), kw.get("noise"))
    engine = _WsrAscent(ch, w, noise, fs, list(sol.clusterings), pb, params)
    tt = [_compress(c.theta, cl) for c, cl in zip(sol.configs, sol.clusterings)]
    f = _swap_search(engine, sol.P, tt, sol.objective)
    if f <= sol.objective:
        return sol
    P, tt, f, trace, conv, it = engine.run(sol.P, tt)
    out = _finish(engine, P, tt, f, sol.iterate_trace + trace[1:], conv,
                  sol.iterations + it, sol.initial_objective)
    return out


def _compress(theta, clustering):
    """Per-cluster coefficients of an expanded vector (first member of each cluster)."""
    out = np.empty(clustering.R, dtype=complex)
    for r in range(clustering.R):
        out[r] = theta[clustering.members(r)[0]]
    return out


def clustered_configs(sol):
    """Per-cluster coefficient vectors of a clustered solution."""
    return [_compress(c.theta, cl) for c, cl in zip(sol.configs, sol.clusterings)]


__all__ = [
    "SolverParams", "PrecodeSolution", "sinr", "sinr_from_matrix", "weighted_sum_rate",
    "mrt_precoder", "zf_precoder", "solve_wsr", "solve_wsr_clustered", "rate_coefficients",
    "theta_gradient",
]
