"""Max-min pilot assignment over RIS-assisted paths.

Each user is served through one RIS; the other panels only contaminate. With
pilot ``s`` the ratio of user k served by panel n is

    |h_RU,k^(n)T Theta^(n) H_BR^(n) s|^2 / sum_{n' != n} |h_RU,k^(n')T Theta^(n') H_BR^(n') s|^2

and the assignment maximizes the smallest ratio over users. The direct
BS-user link is taken as blocked, so it never enters. Pilot indices in a
PilotAssignment are 1-based, as in the usual notation for pilot sets.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DegenerateObjective,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidScenario,
    SearchSpaceTooLarge,
)
from .reflect import UNIT_TOL
from .scene import _check_configs, _thetas, cascade

log = logging.getLogger(__name__)

EXHAUSTIVE_CAP = 10**6
ORTHO_TOL = 1e-10
EXHAUSTIVE, GREEDY = "exhaustive", "greedy"


@dataclass(frozen=True, eq=False)
class PilotPool:
    """Mutually orthonormal pilots, one per row of ``pilots`` (count x L)."""

    pilots: np.ndarray

    def __post_init__(self):
        S = np.array(self.pilots, dtype=complex)
        if S.ndim != 2 or S.shape[0] < 1:
            raise InvalidScenario("pilots must be a non-empty count x L array")
        gram = S.conj() @ S.T
        if np.max(np.abs(gram - np.eye(S.shape[0]))) >= ORTHO_TOL:
            raise InvalidScenario("pilots must be orthonormal")
        S.setflags(write=False)
        object.__setattr__(self, "pilots", S)

    @classmethod
    def dft(cls, L, count):
        """First ``count`` columns of the unitary L-point DFT matrix."""
        if not 1 <= count <= L:
            raise InvalidScenario(f"need 1 <= count <= L, got count={count}, L={L}")
        n = np.arange(L)
        return cls(np.exp(-2j * np.pi * np.outer(np.arange(count), n) / L) / np.sqrt(L))

    @classmethod
    def random(cls, L, count, rng):
        """Haar-random orthonormal pilots."""
        if not 1 <= count <= L:
            raise InvalidScenario(f"need 1 <= count <= L, got count={count}, L={L}")
        A = rng.standard_normal((L, count)) + 1j * rng.standard_normal((L, count))
        Qm, R = np.linalg.qr(A)
        Qm = Qm * (np.diag(R) / np.abs(np.diag(R)))
        return cls(Qm.T)

    @property
    def count(self):
        return self.pilots.shape[0]

    @property
    def L(self):
        return self.pilots.shape[1]


@dataclass(eq=False)
class PilotAssignment:
    map: np.ndarray
    score: float
    ratios: np.ndarray = None
    flagged: list = field(default_factory=list)

    def __post_init__(self):
        self.map = np.asarray(self.map, dtype=int)
        if self.map.size and self.map.min() < 1:
            raise IndexOutOfRange("pilot indices are 1-based")

    def to_csv(self):
        """CSV rows ``user,pilot,ratio`` (users 0-based, pilots 1-based)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user", "pilot", "ratio"])
        for k, (p, r) in enumerate(zip(self.map, self.ratios)):
            writer.writerow([k, int(p), repr(float(r))])
        return buf.getvalue()


def _unit_modulus(thetas):
    for th in thetas:
        if np.any(np.abs(np.abs(th) - 1.0) > UNIT_TOL * 1e3):
            raise InvalidScenario("pilot assignment assumes unit-modulus reflection coefficients")


def _cascades(ch, configs):
    """Per RIS, the K x L cascaded channel (direct link excluded)."""
    thetas = _thetas(configs)
    _check_configs(ch, thetas)
    _unit_modulus(thetas)
    return [cascade(ru, th, br) for ru, th, br in zip(ch.H_RU, thetas, ch.H_BR)]


def _ratio(num, den):
    if den > 0:
        return num / den
    # zero contamination: +inf sentinel when there is signal, 0 when there is none
    return np.inf if num > 0 else 0.0


def ratio_table(ch, configs, pool, serving_map):
    """``R[k, p]``: ratio of user k with pilot p (0-based pilot column here)."""
    if ch.N < 2:
        raise DegenerateObjective("the contamination ratio needs at least two RIS panels")
    if pool.L != ch.L:
        raise DimensionMismatch(f"pilots have length {pool.L}, BS has L={ch.L}")
    serving = _serving(ch, serving_map)
    casc = _cascades(ch, configs)
    # G[n, k, p] = |cascade_n[k] . s_p|^2
    G = np.abs(np.einsum("nkl,pl->nkp", np.stack(casc), pool.pilots)) ** 2
    R = np.empty((ch.K, pool.count))
    for k in range(ch.K):
        n = serving[k]
        num = G[n, k]
        den = G[:, k].sum(axis=0) - num
        R[k] = [_ratio(a, b) for a, b in zip(num, den)]
    return R


def _serving(ch, serving_map):
    if serving_map is None:
        serving_map = default_serving_map(ch)
    serving = np.asarray(serving_map, dtype=int)
    if serving.shape != (ch.K,):
        raise DimensionMismatch("serving_map needs one RIS index per user")
    if serving.min() < 0 or serving.max() >= ch.N:
        raise IndexOutOfRange(f"serving_map entries must lie in 0..{ch.N - 1}")
    return serving


def default_serving_map(ch):
    """Nearest RIS by cascaded path loss (geometry when known, channel energy otherwise)."""
    sc = ch.scenario
    if sc is not None:
        gp = ch.channel_params
        pos = ch.ris_positions if ch.ris_positions is not None else [p.position for p in sc.ris]
        loss = np.empty((ch.K, ch.N))
        for n, rp in enumerate(pos):
            g_br = gp.gain(np.linalg.norm(np.asarray(rp) - sc.bs_position))
            for k, t in enumerate(sc.terminals):
                loss[k, n] = g_br * gp.gain(np.linalg.norm(t.position - np.asarray(rp)))
        return np.argmax(loss, axis=1)
    energy = np.stack([np.sum(np.abs(ru) ** 2, axis=1) * np.sum(np.abs(br) ** 2)
                       for ru, br in zip(ch.H_RU, ch.H_BR)], axis=1)
    return np.argmax(energy, axis=1)


def pilot_sir(ch, configs, assignment, k, n_serving, pool):
    """Contamination ratio of user ``k`` served by RIS ``n_serving``.

    ``assignment`` is a PilotAssignment or a 1-based pilot map. An empty
    contamination term with nonzero signal gives ``+inf`` (logged).
    """
    if ch.N < 2:
        raise DegenerateObjective("the contamination ratio needs at least two RIS panels")
    pmap = assignment.map if isinstance(assignment, PilotAssignment) else np.asarray(assignment)
    if not 0 <= k < ch.K:
        raise IndexOutOfRange(f"user index {k} out of range")
    if not 0 <= n_serving < ch.N:
        raise IndexOutOfRange(f"RIS index {n_serving} out of range")
    p = int(pmap[k])
    if not 1 <= p <= pool.count:
        raise IndexOutOfRange(f"pilot index {p} outside 1..{pool.count}")
    if pool.L != ch.L:
        raise DimensionMismatch(f"pilots have length {pool.L}, BS has L={ch.L}")
    s = pool.pilots[p - 1]
    terms = np.array([abs(c[k] @ s) ** 2 for c in _cascades(ch, configs)])
    num = terms[n_serving]
    r = _ratio(num, terms.sum() - num)
    if np.isinf(r):
        log.warning("user %d: pilot %d sees no contamination, ratio is +inf", k, p)
    return float(r)


def _score(R, idx):
    """Min ratio over users for 0-based pilot choices ``idx`` (any leading shape)."""
    users = np.arange(R.shape[0])
    return np.min(R[users, idx], axis=-1)


def _exhaustive(R):
    K, count = R.shape
    if count**K > EXHAUSTIVE_CAP:
        raise SearchSpaceTooLarge(f"{count}^{K} assignments exceed the cap of {EXHAUSTIVE_CAP}")
    # rows of ``maps`` run in lexicographic order, so argmax picks the smallest tie
    maps = np.indices((count,) * K).reshape(K, -1).T
    scores = _score(R, maps)
    i = int(np.argmax(scores))
    return maps[i]


def _greedy(R, order):
    K, count = R.shape
    idx = np.zeros(K, dtype=int)
    cur = np.inf
    for k in order:
        cand = np.minimum(cur, R[k])
        idx[k] = int(np.argmax(cand))
        cur = cand[idx[k]]
    best = _score(R, idx)
    # one improvement sweep: single-user moves, then pairwise swaps
    for k in range(K):
        for p in range(count):
            trial = idx.copy()
            trial[k] = p
            s = _score(R, trial)
            if s > best:
                idx, best = trial, s
    for a in range(K):
        for b in range(a + 1, K):
            if idx[a] == idx[b]:
                continue
            trial = idx.copy()
            trial[a], trial[b] = idx[b], idx[a]
            s = _score(R, trial)
            if s > best:
                idx, best = trial, s
    return idx


def assign_pilots(ch, configs, pool, serving_map=None, mode=EXHAUSTIVE):
    """Max-min pilot assignment.

    ``exhaustive`` enumerates every map (ties go to the lexicographically
    smallest); ``greedy`` serves users in descending serving-path gain, each
    taking the pilot that maximizes the running minimum, followed by one
    improvement sweep.
    """
    if mode not in (EXHAUSTIVE, GREEDY):
        raise ValueError(f"unknown mode {mode!r}")
    R = ratio_table(ch, configs, pool, serving_map)
    if mode == EXHAUSTIVE:
        idx = _exhaustive(R)
    else:
        serving = _serving(ch, serving_map)
        casc = _cascades(ch, configs)
        gain = np.array([np.sum(np.abs(casc[serving[k]][k]) ** 2) for k in range(ch.K)])
        idx = _greedy(R, np.argsort(-gain, kind="stable"))
    ratios = R[np.arange(ch.K), idx]
    flagged = [int(k) for k in np.flatnonzero(np.isinf(ratios))]
    return PilotAssignment(map=idx + 1, score=float(np.min(ratios)), ratios=ratios,
                           flagged=flagged)


__all__ = [
    "PilotPool", "PilotAssignment", "pilot_sir", "ratio_table", "assign_pilots",
    "default_serving_map",
]
