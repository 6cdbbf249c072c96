"""Scenario files: INI-style sections of ``key = value`` pairs.

Sections (all optional except ``[scenario]`` and at least one ``[ris.N]``):

``[scenario]``        L, K, power_budget, seed, weights, bs_position, active_antennas
``[channel]``         model, rician_K, pathloss_exponent, reference_loss, carrier_wavelength
``[ris.N]``           Q, feasibility, tau, position, cluster_budget (N = 0, 1, ...)
``[terminals]``       defaults for every terminal: noise_power, sinr_target, M, ci_half_angle
``[terminal.K]``      per-terminal overrides of the above plus position
``[eavesdropper]``    N_Eve, noise_power, position
``[mobility]``        kind, drift_sigma, trajectory, steer_index, states, transition
``[state.NAME]``      channel overrides for one Markov state named in ``mobility.states``
``[relay]``           alpha, relay_power_budget, relay_noise
``[secrecy]``         C_demand
``[pilot]``           count, pool, mode
``[distributed]``     T, refresh, period, beta, sensing_noise, neighbor_radius, optimize_theta
``[solver]``          any SolverParams field except trace_path

Vectors are comma separated; matrices and waypoint lists separate rows with
``;``. See ``configs/scenario.ini`` in the repository for a commented file.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields

import numpy as np

from ..dist import RefreshPolicy
from ..exceptions import InvalidScenario, ParseError, ValidationError
from ..precode import SolverParams
from ..reflect import FeasibilitySet
from ..relaysec import HybridRelayConfig
from ..scene import (
    ChannelGenParams,
    Constellation,
    Eavesdropper,
    MobilityProfile,
    RisPanel,
    Scenario,
    Terminal,
)

_SCHEMA = {
    "scenario": {"L", "K", "power_budget", "seed", "weights", "bs_position", "active_antennas"},
    "channel": {"model", "rician_K", "pathloss_exponent", "reference_loss", "carrier_wavelength"},
    "ris": {"Q", "feasibility", "tau", "position", "cluster_budget"},
    "terminals": {"noise_power", "sinr_target", "M", "ci_half_angle"},
    "terminal": {"noise_power", "sinr_target", "M", "ci_half_angle", "position"},
    "eavesdropper": {"N_Eve", "noise_power", "position"},
    "mobility": {"kind", "drift_sigma", "trajectory", "steer_index", "states", "transition"},
    "state": {"model", "rician_K", "pathloss_exponent", "reference_loss", "carrier_wavelength"},
    "relay": {"alpha", "relay_power_budget", "relay_noise"},
    "secrecy": {"C_demand"},
    "pilot": {"count", "pool", "mode"},
    "distributed": {"T", "refresh", "period", "beta", "sensing_noise", "neighbor_radius",
                    "optimize_theta"},
    "solver": {f.name for f in fields(SolverParams)} - {"trace_path"},
}
_INDEXED = ("ris", "terminal")
_HEADER = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:\s#;][^=:]*?)\s*[=:]")


@dataclass(frozen=True)
class PilotOptions:
    count: int | None = None
    pool: str = "dft"
    mode: str = "exhaustive"


@dataclass(frozen=True)
class DistributedOptions:
    T: int = 5
    policy: RefreshPolicy = field(default_factory=RefreshPolicy)
    beta: float = 1.0
    sensing_noise: float = 0.0
    neighbor_radius: float = np.inf
    optimize_theta: bool = True


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Everything a scenario file specifies, typed and validated."""

    scenario: Scenario
    mobility: MobilityProfile
    solver: SolverParams = field(default_factory=SolverParams)
    relay: HybridRelayConfig = field(default_factory=HybridRelayConfig)
    C_demand: float = 0.0
    pilot: PilotOptions = field(default_factory=PilotOptions)
    distributed: DistributedOptions = field(default_factory=DistributedOptions)
    path: str | None = None


class _Lines:
    """Line numbers of section headers and keys, from a scan of the raw text."""

    def __init__(self, text):
        self.sections, self.keys = {}, {}
        current = None
        for no, raw in enumerate(text.splitlines(), start=1):
            if raw.lstrip().startswith(("#", ";")) or raw[:1].isspace() and current and not _HEADER.match(raw):
                continue
            m = _HEADER.match(raw)
            if m:
                current = m.group(1).strip()
                self.sections.setdefault(current, no)
                continue
            m = _KEY.match(raw)
            if m and current is not None:
                self.keys.setdefault((current, m.group(1).strip()), no)

    def of(self, section, key=None):
        if key is None:
            return self.sections.get(section)
        return self.keys.get((section, key), self.sections.get(section))


class _Reader:
    def __init__(self, cp, lines):
        self.cp, self.lines = cp, lines

    def fail(self, section, key, message):
        raise ValidationError(message, key=f"{section}.{key}" if key else section,
                              line=self.lines.of(section, key))

    def raw(self, section, key):
        if not self.cp.has_section(section) or not self.cp.has_option(section, key):
            return None
        return self.cp.get(section, key).strip()

    def _convert(self, section, key, conv, what):
        text = self.raw(section, key)
        if text is None:
            return None
        try:
            return conv(text)
        except (ValueError, TypeError):
            self.fail(section, key, f"expected {what}, got {text!r}")

    def integer(self, section, key, default=None):
        v = self._convert(section, key, _int, "an integer")
        return default if v is None else v

    def real(self, section, key, default=None):
        v = self._convert(section, key, _real, "a real number")
        return default if v is None else v

    def vector(self, section, key, default=None):
        v = self._convert(section, key, _vector, "comma-separated reals")
        return default if v is None else v

    def matrix(self, section, key):
        return self._convert(section, key, _matrix, "rows of reals separated by ';'")

    def text(self, section, key, default=None):
        v = self.raw(section, key)
        return default if v is None else v

    def boolean(self, section, key, default):
        if self.raw(section, key) is None:
            return default
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            self.fail(section, key, f"expected a boolean, got {self.raw(section, key)!r}")


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(text)
    return int(text) if re.fullmatch(r"[+-]?\d+", text) else int(v)


def _real(text):
    return float(text)


def _vector(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _matrix(text):
    rows = [r for r in text.split(";") if r.strip()]
    out = [[float(t) for t in re.split(r"[,\s]+", r.strip()) if t] for r in rows]
    if len({len(r) for r in out}) > 1:
        raise ValueError(text)
    return np.array(out, dtype=float)


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r} in section [{exc.section}]",
                         exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key/value before any [section] header", exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line (expected 'key = value')", line) from exc
    return cp, _Lines(text)


def _check_schema(cp, lines):
    for section in cp.sections():
        base, _, suffix = section.partition(".")
        if base not in _SCHEMA or (bool(suffix) != (base in _INDEXED + ("state",))):
            raise ValidationError("unknown section", key=f"[{section}]", line=lines.of(section))
        if base in _INDEXED and not re.fullmatch(r"\d+", suffix):
            raise ValidationError("section index must be a non-negative integer",
                                  key=f"[{section}]", line=lines.of(section))
        for key in cp.options(section):
            if key not in _SCHEMA[base]:
                raise ValidationError("unknown key", key=f"{section}.{key}",
                                      line=lines.of(section, key))


def _indexed(cp, lines, base):
    """Indices of ``[base.N]`` sections, which must run 0..n-1."""
    idx = sorted(int(s.split(".", 1)[1]) for s in cp.sections() if s.startswith(base + "."))
    for want, got in enumerate(idx):
        if got != want:
            raise ValidationError(f"[{base}.N] sections must be numbered 0..n-1 without gaps",
                                  key=f"[{base}.{got}]", line=lines.of(f"{base}.{got}"))
    return idx


def _build(section, key, r, fn):
    """Run a constructor, turning its InvalidScenario into a located ValidationError."""
    try:
        return fn()
    except (InvalidScenario, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        r.fail(section, key, str(exc))


def _channel_params(r, section, base=None):
    base = base or ChannelGenParams()
    return _build(section, None, r, lambda: ChannelGenParams(
        model=r.text(section, "model", base.model),
        rician_K=r.real(section, "rician_K", base.rician_K),
        pathloss_exponent=r.real(section, "pathloss_exponent", base.pathloss_exponent),
        reference_loss=r.real(section, "reference_loss", base.reference_loss),
        carrier_wavelength=r.real(section, "carrier_wavelength", base.carrier_wavelength),
    ))


def _feasibility(r, section):
    kind = r.text(section, "feasibility", "continuous")
    aliases = {"general": "general", "continuous": "continuous", "unit": "continuous",
               "discrete": "discrete", "discrete_phase": "discrete"}
    if kind not in aliases:
        r.fail(section, "feasibility", f"expected one of general, continuous, discrete; got {kind!r}")
    if aliases[kind] == "discrete":
        tau = r.integer(section, "tau")
        if tau is None:
            r.fail(section, "tau", "discrete feasibility needs tau")
        return _build(section, "tau", r, lambda: FeasibilitySet.discrete(tau))
    if r.raw(section, "tau") is not None:
        r.fail(section, "tau", "tau only applies to discrete feasibility")
    return FeasibilitySet.continuous() if aliases[kind] == "continuous" else FeasibilitySet.general()


def _terminal(r, k, K):
    section = f"terminal.{k}"

    def get(key, default, conv):
        v = conv(section, key)
        return v if v is not None else conv("terminals", key) if conv("terminals", key) is not None else default

    M = get("M", 4, r.integer)
    phi = get("ci_half_angle", None, r.real)
    const = _build(section if r.raw(section, "M") or r.raw(section, "ci_half_angle") else "terminals",
                   None, r, lambda: Constellation(M, phi))
    # users spread on an arc 40 m from the origin unless placed explicitly
    angles = np.linspace(-0.4, 0.4, K) if K > 1 else np.zeros(1)
    pos = r.vector(section, "position", (40.0 * np.cos(angles[k]), 40.0 * np.sin(angles[k]), 0.0))
    return _build(section, None, r, lambda: Terminal(
        noise_power=get("noise_power", 1.0, r.real),
        position=pos,
        sinr_target=get("sinr_target", 1.0, r.real),
        constellation=const,
    ))


def _mobility(r, cp, lines):
    s = "mobility"
    if not cp.has_section(s):
        return MobilityProfile()
    names = [t.strip() for t in r.text(s, "states", "").split(",") if t.strip()]
    states = []
    for name in names:
        sec = f"state.{name}"
        if not cp.has_section(sec):
            r.fail(s, "states", f"state {name!r} has no [state.{name}] section")
        states.append(_channel_params(r, sec))
    for sec in cp.sections():
        if sec.startswith("state.") and sec.split(".", 1)[1] not in names:
            raise ValidationError("state section not listed in mobility.states",
                                  key=f"[{sec}]", line=lines.of(sec))
    T = r.matrix(s, "transition")
    traj = r.text(s, "trajectory")
    trajectory = ()
    if traj is not None:
        try:
            trajectory = tuple(_vector(p) for p in traj.split(";") if p.strip())
        except ValueError:
            r.fail(s, "trajectory", "expected waypoints 'x, y, z; x, y, z; ...'")
    return _build(s, None, r, lambda: MobilityProfile(
        kind=r.text(s, "kind", "static"),
        states=tuple(states),
        transition=T,
        drift_sigma=r.real(s, "drift_sigma", 0.0),
        trajectory=trajectory,
        steer_index=r.integer(s, "steer_index", 0),
    ))


def _scenario(r, cp, lines):
    s = "scenario"
    if not cp.has_section(s):
        raise ValidationError("missing required section", key="[scenario]")
    L, K = r.integer(s, "L"), r.integer(s, "K")
    for key, v in (("L", L), ("K", K)):
        if v is None:
            r.fail(s, key, "required key is missing")
        if v < 1:
            r.fail(s, key, "must be a positive integer")
    if K > L:
        r.fail(s, "K", f"invariant K <= L violated (K={K}, L={L})")
    ris_idx = _indexed(cp, lines, "ris")
    if not ris_idx:
        raise ValidationError("at least one [ris.0] section is required", key="[ris.N]")
    panels = []
    for n in ris_idx:
        sec = f"ris.{n}"
        Q = r.integer(sec, "Q")
        if Q is None:
            r.fail(sec, "Q", "required key is missing")
        fs = _feasibility(r, sec)
        pos = r.vector(sec, "position", (20.0 + 10.0 * n, 5.0 * (-1) ** n, 0.0))
        R = r.integer(sec, "cluster_budget")
        key = "cluster_budget" if R is not None else "Q"
        panels.append(_build(sec, key, r, lambda: RisPanel(Q, fs, pos, R)))
    # per-terminal sections are overrides, so any subset of 0..K-1 may appear
    term_idx = sorted(int(x.split(".", 1)[1]) for x in cp.sections() if x.startswith("terminal."))
    if term_idx and term_idx[-1] >= K:
        sec = f"terminal.{term_idx[-1]}"
        raise ValidationError(f"terminal index exceeds K-1 = {K - 1}", key=f"[{sec}]",
                              line=lines.of(sec))
    terminals = [_terminal(r, k, K) for k in range(K)]
    eve = None
    if cp.has_section("eavesdropper"):
        e = "eavesdropper"
        eve = _build(e, None, r, lambda: Eavesdropper(
            N_Eve=r.integer(e, "N_Eve", 1), noise_power=r.real(e, "noise_power", 1.0),
            position=r.vector(e, "position", (40.0, -10.0, 0.0))))
    weights = r.vector(s, "weights")
    if weights is not None:
        if len(weights) != K:
            r.fail(s, "weights", f"expected {K} weights (one per terminal), got {len(weights)}")
        if not all(w > 0 for w in weights):
            r.fail(s, "weights", "all weights must be > 0")
    seed = r.integer(s, "seed", 0)
    if not 0 <= seed < 2**64:
        r.fail(s, "seed", "must be a 64-bit unsigned integer")
    pb = r.real(s, "power_budget", 1.0)
    if not pb >= 0:
        r.fail(s, "power_budget", "must be >= 0")
    return _build(s, None, r, lambda: Scenario(
        L=L, K=K, ris=tuple(panels), terminals=tuple(terminals), eavesdropper=eve,
        power_budget=pb, weights=weights, seed=seed,
        channel_params=_channel_params(r, "channel"),
        bs_position=r.vector(s, "bs_position", (0.0, 0.0, 10.0)),
        active_antennas=r.integer(s, "active_antennas", 0),
    ))


def _solver(r):
    s = "solver"
    kw = {}
    for f in fields(SolverParams):
        if f.name == "trace_path":
            continue
        conv = r.integer if isinstance(f.default, int) else r.real
        v = conv(s, f.name)
        if v is not None:
            kw[f.name] = v
    return _build(s, None, r, lambda: SolverParams(**kw))


def parse_config(path):
    """Parse a scenario file into a :class:`ScenarioConfig`.

    Raises
    ------
    ParseError
        The file cannot be read or is not well-formed (duplicate keys or
        sections, lines outside any section, malformed lines).
    ValidationError
        A key is unknown, missing, mistyped or violates an invariant. The
        message names the key and its line.
    """
    cp, lines = _read(path)
    _check_schema(cp, lines)
    r = _Reader(cp, lines)
    scenario = _scenario(r, cp, lines)
    mobility = _mobility(r, cp, lines)

    rl = "relay"
    relay = _build(rl, None, r, lambda: HybridRelayConfig(
        alpha=r.real(rl, "alpha", 0.0),
        relay_power_budget=r.real(rl, "relay_power_budget", 0.0),
        relay_noise=r.real(rl, "relay_noise", 1.0),
        active_antennas=max(scenario.active_antennas, 1),
    ))
    demand = r.real("secrecy", "C_demand", 0.0)
    if not demand >= 0:
        r.fail("secrecy", "C_demand", "must be >= 0")

    p = "pilot"
    mode = r.text(p, "mode", "exhaustive")
    if mode not in ("exhaustive", "greedy"):
        r.fail(p, "mode", f"expected exhaustive or greedy, got {mode!r}")
    pool = r.text(p, "pool", "dft")
    if pool not in ("dft", "random"):
        r.fail(p, "pool", f"expected dft or random, got {pool!r}")
    count = r.integer(p, "count")
    if count is not None and not 1 <= count <= scenario.L:
        r.fail(p, "count", f"need 1 <= count <= L = {scenario.L}")
    pilot = PilotOptions(count=count, pool=pool, mode=mode)

    d = "distributed"
    policy = _build(d, "refresh", r, lambda: RefreshPolicy(
        mode=r.text(d, "refresh", "bs_broadcast"), period=r.integer(d, "period", 1)))
    T = r.integer(d, "T", 5)
    if T < 0:
        r.fail(d, "T", "must be >= 0")
    beta = r.real(d, "beta", 1.0)
    if not beta > 0:
        r.fail(d, "beta", "must be > 0")
    dist = DistributedOptions(
        T=T, policy=policy, beta=beta,
        sensing_noise=r.real(d, "sensing_noise", 0.0),
        neighbor_radius=r.real(d, "neighbor_radius", np.inf),
        optimize_theta=r.boolean(d, "optimize_theta", True),
    )
    return ScenarioConfig(scenario=scenario, mobility=mobility, solver=_solver(r), relay=relay,
                          C_demand=demand, pilot=pilot, distributed=dist, path=str(path))


def parse_scenario(path):
    """Scenario and mobility profile of a scenario file (see :func:`parse_config`)."""
    cfg = parse_config(path)
    return cfg.scenario, cfg.mobility
