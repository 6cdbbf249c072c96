"""Exact reference solutions for small instances."""
from __future__ import annotations

import numpy as np

from ..exceptions import InvalidScenario, SearchSpaceTooLarge
from ..precode import _resolve
from ..reflect import phase_grid

ORACLE_CAP = 2**20
_CHUNK = 2**14


def brute_force_wsr(ch, scenario=None, *, feasibilities=None, power_budget=None, noise=None,
                    weights=None, return_argmax=False):
    """Exact weighted-sum-rate optimum of a single-user discrete instance.

    With one user the matched filter at full power is optimal for every
    configuration, so the rate is ``w*log2(1 + P*||e(theta)||^2 / sigma^2)``
    and only the reflection coefficients need to be enumerated.
    """
    fs, pb, w, noise = _resolve(ch, scenario, feasibilities, power_budget, weights, noise)
    if ch.K != 1:
        raise InvalidScenario("brute_force_wsr needs a single user (K=1)")
    if not all(f.is_discrete for f in fs):
        raise InvalidScenario("brute_force_wsr needs discrete phase sets on every RIS")
    sizes = [f.tau ** q for f, q in zip(fs, ch.Q)]
    total = int(np.prod(sizes, dtype=object))
    if total > ORACLE_CAP:
        raise SearchSpaceTooLarge(f"{total} configurations exceed the cap of {ORACLE_CAP}")
    # per-element cascaded rows g_q (1 x L) and their grids, stacked over panels
    rows, grids = [], []
    for f, ru, br in zip(fs, ch.H_RU, ch.H_BR):
        for q in range(br.shape[0]):
            rows.append(ru[0, q] * br[q])
            grids.append(phase_grid(f.tau))
    G = np.array(rows).reshape(len(rows), ch.L)
    h_d = np.asarray(ch.H_BU[0])
    radices = [g.size for g in grids]
    best, best_idx = -np.inf, None
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        digits = np.stack(np.unravel_index(idx, radices), axis=1) if radices else np.zeros((idx.size, 0), int)
        theta = np.stack([grids[j][digits[:, j]] for j in range(len(grids))], axis=1) \
            if grids else np.zeros((idx.size, 0))
        e = h_d[None, :] + theta @ G
        gain = np.sum(np.abs(e) ** 2, axis=1)
        i = int(np.argmax(gain))
        if gain[i] > best:
            best, best_idx = gain[i], idx[i]
    value = float(w[0] * np.log2(1.0 + pb * best / noise[0]))
    if not return_argmax:
        return value
    digits = np.unravel_index(best_idx, radices) if radices else ()
    flat = np.array([grids[j][d] for j, d in enumerate(digits)], dtype=complex)
    split = np.cumsum(ch.Q)[:-1]
    return value, np.split(flat, split)
