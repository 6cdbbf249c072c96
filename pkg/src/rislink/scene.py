"""Network scenarios, seeded channel synthesis and the composite downlink channel.

Every random draw is keyed by ``(scenario.seed, snapshot_index, link tag)``
through :class:`numpy.random.SeedSequence`, so a snapshot is a pure function
of its inputs and links never share a stream.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DimensionMismatch, InvalidScenario
from .reflect import FeasibilitySet, ReflectionConfig

RAYLEIGH = "rayleigh"
RICIAN = "rician"

# stream tags; appended to (seed, snapshot) when spawning generators
_TAG_BU, _TAG_BR, _TAG_RU, _TAG_BR_ACT, _TAG_RU_ACT = 0, 1, 2, 3, 4
_TAG_EVE, _TAG_RE, _TAG_MARKOV, _TAG_DRIFT = 5, 6, 7, 8


def _vec3(p, name="position"):
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise InvalidScenario(f"{name} must be a finite 3-vector")
    p.setflags(write=False)
    return p


@dataclass(frozen=True)
class ChannelGenParams:
    model: str = RICIAN
    rician_K: float = 1.0
    pathloss_exponent: float = 2.2
    reference_loss: float = 0.0
    carrier_wavelength: float = 0.1

    def __post_init__(self):
        if self.model not in (RAYLEIGH, RICIAN):
            raise InvalidScenario(f"unknown channel model {self.model!r}")
        if self.rician_K < 0:
            raise InvalidScenario("rician_K must be >= 0")
        if self.pathloss_exponent <= 0:
            raise InvalidScenario("pathloss_exponent must be > 0")
        if self.carrier_wavelength <= 0:
            raise InvalidScenario("carrier_wavelength must be > 0")

    @property
    def k_factor(self):
        return 0.0 if self.model == RAYLEIGH else float(self.rician_K)

    def gain(self, distance):
        """Large-scale power gain ``10^(-ref/10) * d^(-exponent)`` (d clipped at 1 m)."""
        d = np.maximum(np.asarray(distance, dtype=float), 1.0)
        return 10.0 ** (-self.reference_loss / 10.0) * d ** (-self.pathloss_exponent)


@dataclass(frozen=True)
class Constellation:
    M: int = 4
    ci_half_angle: float | None = None

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise InvalidScenario("constellation order M must be an integer >= 2")
        if self.ci_half_angle is None:
            object.__setattr__(self, "ci_half_angle", np.pi / self.M)
        # pi/2 is admitted so that BPSK keeps its pi/M default (a half-plane)
        if not 0 < self.ci_half_angle <= np.pi / 2:
            raise InvalidScenario("ci_half_angle must lie in (0, pi/2]")

    @property
    def points(self):
        """PSK points; QPSK and higher carry the usual pi/M offset."""
        offset = 0.0 if self.M == 2 else np.pi / self.M
        return np.exp(1j * (2 * np.pi * np.arange(self.M) / self.M + offset))


@dataclass(frozen=True)
class Terminal:
    noise_power: float = 1.0
    position: np.ndarray = (50.0, 10.0, 0.0)
    sinr_target: float = 1.0
    constellation: Constellation = field(default_factory=Constellation)

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "terminal position"))
        if not self.noise_power > 0:
            raise InvalidScenario("terminal noise_power must be > 0")
        if not self.sinr_target > 0:
            raise InvalidScenario("terminal sinr_target must be > 0")


@dataclass(frozen=True)
class RisPanel:
    Q: int
    feasibility: FeasibilitySet = field(default_factory=FeasibilitySet)
    position: np.ndarray = (25.0, 5.0, 0.0)
    cluster_budget: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "RIS position"))
        if int(self.Q) != self.Q or self.Q < 1:
            raise InvalidScenario("RIS element count Q must be a positive integer")
        if self.cluster_budget is None:
            object.__setattr__(self, "cluster_budget", int(self.Q))
        if not 1 <= self.cluster_budget <= self.Q:
            raise InvalidScenario("cluster_budget R must satisfy 1 <= R <= Q")


@dataclass(frozen=True)
class Eavesdropper:
    N_Eve: int = 1
    noise_power: float = 1.0
    position: np.ndarray = (40.0, -10.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "eavesdropper position"))
        if int(self.N_Eve) != self.N_Eve or self.N_Eve < 1:
            raise InvalidScenario("N_Eve must be a positive integer")
        if not self.noise_power > 0:
            raise InvalidScenario("eavesdropper noise_power must be > 0")


@dataclass(frozen=True, eq=False)
class Scenario:
    L: int
    K: int
    ris: tuple = ()
    terminals: tuple = ()
    eavesdropper: Eavesdropper | None = None
    power_budget: float = 1.0
    weights: tuple | None = None
    seed: int = 0
    channel_params: ChannelGenParams = field(default_factory=ChannelGenParams)
    bs_position: np.ndarray = (0.0, 0.0, 10.0)
    active_antennas: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ris", tuple(self.ris))
        object.__setattr__(self, "terminals", tuple(self.terminals))
        object.__setattr__(self, "bs_position", _vec3(self.bs_position, "BS position"))
        if self.weights is None:
            object.__setattr__(self, "weights", (1.0,) * int(self.K))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        self.validate()

    def validate(self):
        if int(self.L) != self.L or self.L < 1:
            raise InvalidScenario("L must be a positive integer")
        if int(self.K) != self.K or self.K < 1:
            raise InvalidScenario("K must be a positive integer")
        if self.K > self.L:
            raise InvalidScenario(f"K <= L violated (K={self.K}, L={self.L})")
        if len(self.terminals) != self.K:
            raise InvalidScenario(f"expected {self.K} terminals, got {len(self.terminals)}")
        if len(self.weights) != self.K:
            raise InvalidScenario(f"expected {self.K} weights, got {len(self.weights)}")
        if not all(w > 0 for w in self.weights):
            raise InvalidScenario("all weights must be > 0")
        if not self.power_budget >= 0:
            raise InvalidScenario("power_budget must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidScenario("seed must be a 64-bit unsigned integer")
        if self.active_antennas < 0:
            raise InvalidScenario("active_antennas must be >= 0")

    @classmethod
    def simple(cls, L, K, Q=(8,), feasibility=None, seed=0, noise_power=1.0,
               power_budget=1.0, channel_params=None, eavesdropper=None,
               sinr_target=1.0, constellation=None, **kw):
        """Quick scenario with RIS panels on a line and users spread on an arc."""
        fs = feasibility or FeasibilitySet.continuous()
        panels = tuple(
            RisPanel(q, fs, position=(20.0 + 10.0 * n, 5.0 * (-1) ** n, 0.0))
            for n, q in enumerate(Q)
        )
        angles = np.linspace(-0.4, 0.4, K) if K > 1 else np.zeros(1)
        terms = tuple(
            Terminal(noise_power, (40.0 * np.cos(a), 40.0 * np.sin(a), 0.0),
                     sinr_target, constellation or Constellation())
            for a in angles
        )
        return cls(
            L=L, K=K, ris=panels, terminals=terms, eavesdropper=eavesdropper,
            power_budget=power_budget, seed=seed,
            channel_params=channel_params or ChannelGenParams(), **kw,
        )

    @property
    def N(self):
        return len(self.ris)

    @property
    def noise_powers(self):
        return np.array([t.noise_power for t in self.terminals])

    @property
    def feasibilities(self):
        return tuple(p.feasibility for p in self.ris)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Complex channel matrices of one snapshot.

    ``H_RU_act`` is K x A (row k is the active-relay-to-user vector of user k).
    ``H_RE`` holds, per RIS, the N_Eve x Q RIS-to-eavesdropper block.
    """

    H_BU: np.ndarray
    H_BR: tuple = ()
    H_RU: tuple = ()
    H_BR_act: np.ndarray | None = None
    H_RU_act: np.ndarray | None = None
    H_Eve: np.ndarray | None = None
    H_RE: tuple | None = None
    scenario: Scenario | None = None
    snapshot_index: int = 0
    channel_params: ChannelGenParams | None = None
    ris_positions: tuple | None = None
    markov_state: int = 0

    def __post_init__(self):
        def frozen(a):
            if a is None:
                return None
            a = np.array(a, dtype=complex)
            a.setflags(write=False)
            return a

        for name in ("H_BU", "H_BR_act", "H_RU_act", "H_Eve"):
            object.__setattr__(self, name, frozen(getattr(self, name)))
        object.__setattr__(self, "H_BR", tuple(frozen(h) for h in self.H_BR))
        object.__setattr__(self, "H_RU", tuple(frozen(h) for h in self.H_RU))
        if self.H_RE is not None:
            object.__setattr__(self, "H_RE", tuple(frozen(h) for h in self.H_RE))
        self._check()

    def _check(self):
        if self.H_BU.ndim != 2:
            raise DimensionMismatch("H_BU must be a K x L matrix")
        K, L = self.H_BU.shape
        if len(self.H_BR) != len(self.H_RU):
            raise DimensionMismatch("H_BR and H_RU must list the same number of RIS")
        for n, (br, ru) in enumerate(zip(self.H_BR, self.H_RU)):
            if br.ndim != 2 or br.shape[1] != L:
                raise DimensionMismatch(f"H_BR[{n}] must be Q x {L}")
            if ru.shape != (K, br.shape[0]):
                raise DimensionMismatch(f"H_RU[{n}] must be {K} x {br.shape[0]}")
        if (self.H_BR_act is None) != (self.H_RU_act is None):
            raise DimensionMismatch("active relay blocks must be given together")
        if self.H_BR_act is not None:
            A = self.H_BR_act.shape[0]
            if self.H_BR_act.shape != (A, L) or self.H_RU_act.shape != (K, A):
                raise DimensionMismatch("active relay blocks have inconsistent shapes")
        if self.H_Eve is not None:
            if self.H_Eve.ndim != 2 or self.H_Eve.shape[1] != L:
                raise DimensionMismatch(f"H_Eve must be N_Eve x {L}")
            re = self.H_RE if self.H_RE is not None else ()
            if len(re) not in (0, self.N):
                raise DimensionMismatch("H_RE must have one block per RIS")
            for n, blk in enumerate(re):
                if blk.shape != (self.H_Eve.shape[0], self.Q[n]):
                    raise DimensionMismatch(f"H_RE[{n}] has wrong shape")
        for a in self._blocks():
            if not np.all(np.isfinite(a)):
                raise InvalidScenario("channel entries must be finite")

    def _blocks(self):
        out = [self.H_BU, *self.H_BR, *self.H_RU]
        for a in (self.H_BR_act, self.H_RU_act, self.H_Eve):
            if a is not None:
                out.append(a)
        out.extend(self.H_RE or ())
        return out

    @property
    def K(self):
        return self.H_BU.shape[0]

    @property
    def L(self):
        return self.H_BU.shape[1]

    @property
    def N(self):
        return len(self.H_BR)

    @property
    def Q(self):
        return tuple(h.shape[0] for h in self.H_BR)

    @property
    def has_active(self):
        return self.H_BR_act is not None

    @property
    def has_eve(self):
        return self.H_Eve is not None

    def named_blocks(self):
        """``(name, array)`` pairs in a fixed order, for dumps."""
        out = [("H_BU", self.H_BU)]
        out += [(f"H_BR{n}", h) for n, h in enumerate(self.H_BR)]
        out += [(f"H_RU{n}", h) for n, h in enumerate(self.H_RU)]
        if self.H_BR_act is not None:
            out += [("H_BR_act", self.H_BR_act), ("H_RU_act", self.H_RU_act)]
        if self.H_Eve is not None:
            out.append(("H_Eve", self.H_Eve))
            out += [(f"H_RE{n}", h) for n, h in enumerate(self.H_RE or ())]
        return out

    def map_blocks(self, fn):
        """New ChannelSet with ``fn(name, array)`` applied to every block."""
        kw = {
            "H_BU": fn("H_BU", self.H_BU),
            "H_BR": tuple(fn(f"H_BR{n}", h) for n, h in enumerate(self.H_BR)),
            "H_RU": tuple(fn(f"H_RU{n}", h) for n, h in enumerate(self.H_RU)),
        }
        if self.H_BR_act is not None:
            kw["H_BR_act"] = fn("H_BR_act", self.H_BR_act)
            kw["H_RU_act"] = fn("H_RU_act", self.H_RU_act)
        if self.H_Eve is not None:
            kw["H_Eve"] = fn("H_Eve", self.H_Eve)
            if self.H_RE is not None:
                kw["H_RE"] = tuple(fn(f"H_RE{n}", h) for n, h in enumerate(self.H_RE))
        return replace(self, **kw)

    def dump_csv(self, path):
        """Flat ``block,row,col,real,imag`` dump with full float precision."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["block", "row", "col", "real", "imag"])
            for name, a in self.named_blocks():
                for (i, j), v in np.ndenumerate(a):
                    w.writerow([name, i, j, repr(float(v.real)), repr(float(v.imag))])

    def save_npz(self, path):
        np.savez(path, **{name: a for name, a in self.named_blocks()})

    @classmethod
    def load_npz(cls, path):
        with np.load(path) as z:
            data = {k: z[k] for k in z.files}
        n = sum(1 for k in data if k.startswith("H_BR") and k != "H_BR_act")
        return cls(
            H_BU=data["H_BU"],
            H_BR=tuple(data[f"H_BR{i}"] for i in range(n)),
            H_RU=tuple(data[f"H_RU{i}"] for i in range(n)),
            H_BR_act=data.get("H_BR_act"),
            H_RU_act=data.get("H_RU_act"),
            H_Eve=data.get("H_Eve"),
            H_RE=tuple(data[f"H_RE{i}"] for i in range(n)) if "H_Eve" in data else None,
        )


# -- synthesis -----------------------------------------------------------------

def _rng(seed, snapshot, *tags):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(snapshot), *tags]))


def _steering(n, cos_angle):
    # half-wavelength ULA along the x axis
    return np.exp(1j * np.pi * np.arange(n) * cos_angle)


def _link(rng, tx_pos, rx_pos, n_tx, n_rx, params):
    """One n_rx x n_tx Rician block with log-distance path loss."""
    delta = np.asarray(rx_pos) - np.asarray(tx_pos)
    dist = float(np.linalg.norm(delta))
    cos_angle = delta[0] / dist if dist > 0 else 1.0
    los = (
        np.exp(-2j * np.pi * dist / params.carrier_wavelength)
        * np.outer(_steering(n_rx, -cos_angle), _steering(n_tx, cos_angle))
    )
    kf = params.k_factor
    nlos = (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx))) / np.sqrt(2)
    if np.isinf(kf):
        # pure line of sight; the draw still happens so streams stay aligned
        small = los
    else:
        small = np.sqrt(kf / (kf + 1.0)) * los + np.sqrt(1.0 / (kf + 1.0)) * nlos
    return np.sqrt(params.gain(dist)) * small


def _stack_users(rng_for, positions, tx_pos, n_tx, params):
    return np.vstack([_link(rng_for(k), tx_pos, p, n_tx, 1, params) for k, p in enumerate(positions)])


def _realize(scenario, snapshot_index, params, ris_positions, markov_state=0):
    s = scenario
    seed = s.seed
    bs = s.bs_position
    users = [t.position for t in s.terminals]
    H_BU = _stack_users(lambda k: _rng(seed, snapshot_index, _TAG_BU, k), users, bs, s.L, params)
    H_BR, H_RU = [], []
    for n, (panel, pos) in enumerate(zip(s.ris, ris_positions)):
        H_BR.append(_link(_rng(seed, snapshot_index, _TAG_BR, n), bs, pos, s.L, panel.Q, params))
        H_RU.append(_stack_users(
            lambda k, n=n: _rng(seed, snapshot_index, _TAG_RU, n, k), users, pos, panel.Q, params))
    kw = {}
    if s.active_antennas > 0:
        # the active relay is co-located with the first panel (or midway if none)
        relay_pos = ris_positions[0] if s.N else (bs + np.mean(users, axis=0)) / 2
        A = s.active_antennas
        kw["H_BR_act"] = _link(_rng(seed, snapshot_index, _TAG_BR_ACT), bs, relay_pos, s.L, A, params)
        kw["H_RU_act"] = _stack_users(
            lambda k: _rng(seed, snapshot_index, _TAG_RU_ACT, k), users, relay_pos, A, params)
    if s.eavesdropper is not None:
        eve = s.eavesdropper
        kw["H_Eve"] = _link(_rng(seed, snapshot_index, _TAG_EVE), bs, eve.position, s.L, eve.N_Eve, params)
        kw["H_RE"] = tuple(
            _link(_rng(seed, snapshot_index, _TAG_RE, n), pos, eve.position, panel.Q, eve.N_Eve, params)
            for n, (panel, pos) in enumerate(zip(s.ris, ris_positions))
        )
    return ChannelSet(
        H_BU=H_BU, H_BR=tuple(H_BR), H_RU=tuple(H_RU), scenario=s,
        snapshot_index=int(snapshot_index), channel_params=params,
        ris_positions=tuple(ris_positions), markov_state=int(markov_state), **kw,
    )


def synthesize_channels(scenario, snapshot_index=0):
    """Draw the channel realization of one snapshot.

    The result depends only on ``(scenario, snapshot_index)``.
    """
    if not isinstance(scenario, Scenario):
        raise InvalidScenario("expected a Scenario")
    scenario.validate()
    positions = tuple(p.position for p in scenario.ris)
    return _realize(scenario, snapshot_index, scenario.channel_params, positions)


def _thetas(configs):
    return [c.theta if isinstance(c, ReflectionConfig) else np.asarray(c, dtype=complex).reshape(-1)
            for c in configs]


def _check_configs(ch, thetas):
    if len(thetas) != ch.N:
        raise DimensionMismatch(f"expected {ch.N} reflection configs, got {len(thetas)}")
    for n, (th, q) in enumerate(zip(thetas, ch.Q)):
        if th.size != q:
            raise DimensionMismatch(f"config {n} has length {th.size}, RIS has Q={q}")


def cascade(H_RU, theta, H_BR):
    """``H_RU @ diag(theta) @ H_BR`` without forming the diagonal."""
    return (H_RU * theta) @ H_BR


def composite_channel(ch, configs):
    """Effective K x L downlink channel: direct link plus every reflected path."""
    thetas = _thetas(configs)
    _check_configs(ch, thetas)
    H = np.array(ch.H_BU, dtype=complex)
    for ru, th, br in zip(ch.H_RU, thetas, ch.H_BR):
        H += cascade(ru, th, br)
    return H


def eve_channel(ch, configs):
    """N_Eve x L eavesdropper channel with the same reflected structure."""
    if ch.H_Eve is None:
        return None
    thetas = _thetas(configs)
    _check_configs(ch, thetas)
    H = np.array(ch.H_Eve, dtype=complex)
    for re, th, br in zip(ch.H_RE or (), thetas, ch.H_BR):
        H += cascade(re, th, br)
    return H


# -- mobility ------------------------------------------------------------------

STATIC, STOCHASTIC, STEERABLE, PREDICTABLE, HYBRID = (
    "static", "stochastic", "steerable", "predictable", "hybrid")


@dataclass(frozen=True, eq=False)
class MobilityProfile:
    """How a ChannelSet evolves from one snapshot to the next.

    ``states`` and ``transition`` drive the predictable (Markov) profile,
    ``drift_sigma`` the Gauss-Markov innovation, ``trajectory`` the waypoints
    of the steered panel ``steer_index``. ``hybrid`` combines whichever of
    these are configured.
    """

    kind: str = STATIC
    states: tuple = ()
    transition: np.ndarray | None = None
    drift_sigma: float = 0.0
    trajectory: tuple = ()
    steer_index: int = 0

    def __post_init__(self):
        if self.kind not in (STATIC, STOCHASTIC, STEERABLE, PREDICTABLE, HYBRID):
            raise InvalidScenario(f"unknown mobility kind {self.kind!r}")
        if not 0 <= self.drift_sigma <= 1:
            raise InvalidScenario("drift_sigma must lie in [0, 1]")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "trajectory", tuple(_vec3(p, "waypoint") for p in self.trajectory))
        if self.transition is not None:
            T = np.array(self.transition, dtype=float)
            T.setflags(write=False)
            object.__setattr__(self, "transition", T)
            S = len(self.states)
            if T.shape != (S, S):
                raise InvalidScenario("transition matrix must be S x S for S states")
            if np.any(T < 0) or np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-12):
                raise InvalidScenario("transition matrix rows must be stochastic")
        if self.kind == PREDICTABLE and (not self.states or self.transition is None):
            raise InvalidScenario("predictable mobility needs states and a transition matrix")
        if self.kind == STEERABLE and not self.trajectory:
            raise InvalidScenario("steerable mobility needs a trajectory")


def _gauss_markov(ch, sigma, rng):
    """First-order update ``sqrt(1-s^2) H + s W`` with W ~ CN(0, link gain)."""
    if sigma == 0:
        return ch
    a = np.sqrt(1.0 - sigma**2)
    params = ch.channel_params or (ch.scenario.channel_params if ch.scenario else ChannelGenParams())

    def update(name, h):
        var = _block_gain(ch, name, params)
        w = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / np.sqrt(2)
        return a * h + sigma * np.sqrt(var) * w

    return ch.map_blocks(update)


def _block_gain(ch, name, params):
    """Per-entry mean power of a block, from the stored geometry when available."""
    s = ch.scenario
    if s is None:
        h = dict(ch.named_blocks())[name]
        return np.full(h.shape, np.mean(np.abs(h) ** 2))
    pos = ch.ris_positions or tuple(p.position for p in s.ris)
    users = np.array([t.position for t in s.terminals])
    bs = s.bs_position
    relay = pos[0] if pos else (bs + users.mean(axis=0)) / 2

    def g(a, b):
        return params.gain(np.linalg.norm(np.asarray(b) - np.asarray(a), axis=-1))

    if name == "H_BU":
        return g(bs, users)[:, None]
    if name.startswith("H_BR_act"):
        return g(bs, relay)
    if name == "H_RU_act":
        return g(relay, users)[:, None]
    if name == "H_Eve":
        return g(bs, s.eavesdropper.position)
    n = int(name[4:])
    if name.startswith("H_BR"):
        return g(bs, pos[n])
    if name.startswith("H_RU"):
        return g(pos[n], users)[:, None]
    return g(pos[n], s.eavesdropper.position)


def evolve(ch, profile, step):
    """Channel of snapshot ``step`` given the previous snapshot ``ch``."""
    kind = profile.kind
    if kind == STATIC:
        return ch
    if ch.scenario is None and kind != STOCHASTIC:
        raise InvalidScenario(f"{kind} mobility needs a ChannelSet built from a Scenario")
    seed = ch.scenario.seed if ch.scenario is not None else 0
    if kind == STOCHASTIC:
        return _gauss_markov(ch, profile.drift_sigma, _rng(seed, step, _TAG_DRIFT))

    s = ch.scenario
    params = ch.channel_params or s.channel_params
    state = ch.markov_state
    positions = list(ch.ris_positions or (p.position for p in s.ris))
    if profile.states and profile.transition is not None:
        row = profile.transition[state]
        state = int(_rng(seed, step, _TAG_MARKOV).choice(len(row), p=row))
        params = profile.states[state]
    if profile.trajectory and positions:
        positions[profile.steer_index] = profile.trajectory[step % len(profile.trajectory)]
    fresh = _realize(s, step, params, tuple(positions), state)
    if kind != HYBRID or profile.drift_sigma == 0:
        return fresh
    # hybrid: deterministic geometry/state change mixed with the previous fading
    a = np.sqrt(1.0 - profile.drift_sigma**2)
    prev = dict(ch.named_blocks())
    return fresh.map_blocks(lambda name, h: a * prev[name] + profile.drift_sigma * h)


def snapshot_sequence(scenario, profile, T):
    """Snapshots ``0..T-1`` of one episode."""
    out = []
    ch = None
    for t in range(T):
        ch = synthesize_channels(scenario, 0) if t == 0 else evolve(ch, profile, t)
        out.append(ch)
    return out
