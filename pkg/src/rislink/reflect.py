"""Reflection coefficients, their feasibility sets and element clustering.

A RIS element applies ``theta = eta * exp(j*phi)`` to the impinging wave.
Three feasible sets are supported: the closed unit disk (``general``), the
unit circle (``continuous_phase``) and a ``tau``-point phase grid
(``discrete_phase``).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import IndexOutOfRange, InvalidScenario

GENERAL = "general"
CONTINUOUS = "continuous_phase"
DISCRETE = "discrete_phase"
_KINDS = (GENERAL, CONTINUOUS, DISCRETE)

UNIT_TOL = 1e-12


def phase_grid(tau):
    """Return the ``tau`` grid points ``exp(j*2*pi*m/tau)``, m = 0..tau-1.

    Every discrete coefficient in the package is built by indexing this
    array, so grid membership can be checked with exact equality.
    """
    m = np.arange(tau)
    grid = np.exp(2j * np.pi * m / tau)
    # pin the axis points so that e.g. tau=2 gives exactly -1+0j
    quarter = (4 * m) % tau == 0
    k = (4 * m[quarter]) // tau
    grid[quarter] = np.array([1, 1j, -1, -1j])[k % 4]
    return grid


@dataclass(frozen=True)
class FeasibilitySet:
    kind: str = CONTINUOUS
    tau: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidScenario(f"unknown feasibility kind {self.kind!r}")
        if self.kind == DISCRETE:
            if self.tau is None or int(self.tau) != self.tau or self.tau < 2:
                raise InvalidScenario("discrete_phase requires integer tau >= 2")

    @classmethod
    def general(cls):
        return cls(GENERAL)

    @classmethod
    def continuous(cls):
        return cls(CONTINUOUS)

    @classmethod
    def discrete(cls, tau):
        return cls(DISCRETE, int(tau))

    @property
    def is_discrete(self):
        return self.kind == DISCRETE

    def contains(self, theta):
        """Elementwise membership test for an array of coefficients."""
        theta = np.asarray(theta, dtype=complex)
        if self.kind == GENERAL:
            return np.abs(theta) <= 1.0 + UNIT_TOL
        if self.kind == CONTINUOUS:
            return np.abs(np.abs(theta) - 1.0) <= UNIT_TOL
        return np.isin(theta, phase_grid(self.tau))


def _grid_index(theta, tau):
    """Index of the nearest grid phase; ties go to the smaller index."""
    ang = np.mod(np.angle(theta), 2 * np.pi)
    centers = 2 * np.pi * np.arange(tau) / tau
    diff = np.abs(ang[..., None] - centers)
    dist = np.minimum(diff, 2 * np.pi - diff)
    return np.argmin(dist, axis=-1)


def project(theta_raw, fs):
    """Map raw coefficients onto the feasible set ``fs``.

    ``general`` clips the magnitude to 1, ``continuous_phase`` normalizes to
    unit magnitude (zeros map to ``1+0j``) and ``discrete_phase`` picks the
    nearest grid phase.
    """
    theta = np.asarray(theta_raw, dtype=complex)
    if fs.kind == GENERAL:
        mag = np.abs(theta)
        return theta / np.maximum(mag, 1.0)
    if fs.kind == CONTINUOUS:
        mag = np.abs(theta)
        out = np.ones_like(theta)
        nz = mag > 0
        # via the angle: dividing by a subnormal magnitude overflows
        out[nz] = np.exp(1j * np.angle(theta[nz]))
        return out
    return phase_grid(fs.tau)[_grid_index(theta, fs.tau)]


def random_feasible(q, fs, rng):
    """Uniform-random feasible vector of length ``q`` (used for solver restarts)."""
    if fs.kind == DISCRETE:
        return phase_grid(fs.tau)[rng.integers(0, fs.tau, size=q)]
    theta = np.exp(2j * np.pi * rng.random(q))
    if fs.kind == GENERAL:
        # uniform on the disk
        theta = theta * np.sqrt(rng.random(q))
    return theta


@dataclass(frozen=True, eq=False)
class ReflectionConfig:
    theta: np.ndarray
    feasibility: FeasibilitySet = field(default_factory=FeasibilitySet)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=complex).reshape(-1)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if not np.all(np.isfinite(theta)):
            raise InvalidScenario("reflection coefficients must be finite")
        if not np.all(self.feasibility.contains(theta)):
            raise InvalidScenario(
                f"coefficients violate the {self.feasibility.kind} feasible set"
            )

    @classmethod
    def from_raw(cls, theta_raw, fs):
        return cls(project(theta_raw, fs), fs)

    @classmethod
    def unit(cls, q, fs=None):
        fs = fs or FeasibilitySet.continuous()
        return cls(np.ones(q, dtype=complex), fs)

    @property
    def Q(self):
        return self.theta.size

    @property
    def eta(self):
        return np.abs(self.theta)

    @property
    def phi(self):
        return np.mod(np.angle(self.theta), 2 * np.pi)

    def to_csv(self):
        """CSV rows ``index,eta,phi`` (phi in radians, wrapped to [0, 2*pi))."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "eta", "phi"])
        for q, (e, p) in enumerate(zip(self.eta, self.phi)):
            writer.writerow([q, repr(float(e)), repr(float(p))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class Clustering:
    """Partition of the Q elements of one RIS into R clusters.

    ``assignment[q]`` is the (0-based) cluster of element q.
    """

    assignment: np.ndarray
    R: int

    def __post_init__(self):
        a = np.array(self.assignment, dtype=int).reshape(-1)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        if self.R < 1:
            raise InvalidScenario("cluster count R must be positive")
        if a.size and (a.min() < 0 or a.max() >= self.R):
            raise IndexOutOfRange(f"assignment references a cluster outside 0..{self.R - 1}")
        if np.unique(a).size != self.R:
            raise InvalidScenario("every cluster must own at least one element")

    @classmethod
    def contiguous(cls, q, r):
        """Default partition: R contiguous blocks whose sizes differ by at most one."""
        if not 1 <= r <= q:
            raise InvalidScenario(f"need 1 <= R <= Q, got R={r}, Q={q}")
        blocks = np.array_split(np.arange(q), r)
        assignment = np.empty(q, dtype=int)
        for idx, blk in enumerate(blocks):
            assignment[blk] = idx
        return cls(assignment, r)

    @classmethod
    def identity(cls, q):
        return cls(np.arange(q), q)

    @property
    def Q(self):
        return self.assignment.size

    def members(self, r):
        return np.flatnonzero(self.assignment == r)


def expand(clustered_theta, clustering):
    """Broadcast per-cluster coefficients to the elements of each cluster."""
    clustered_theta = np.asarray(clustered_theta, dtype=complex).reshape(-1)
    a = clustering.assignment
    if a.size and a.max() >= clustered_theta.size:
        raise IndexOutOfRange(
            f"assignment references cluster {a.max()} but only "
            f"{clustered_theta.size} coefficients were given"
        )
    return clustered_theta[a]


def control_payload_bits(config, clustering=None, bits_per_coefficient=None):
    """Bits needed to ship a configuration to the RIS controller.

    Discrete sets cost ``ceil(log2(tau))`` bits per coefficient. Continuous and
    general sets need an explicit ``bits_per_coefficient`` quantization depth.
    """
    fs = config.feasibility
    if bits_per_coefficient is None:
        if not fs.is_discrete:
            raise ValueError(
                "bits_per_coefficient is required for non-discrete feasible sets"
            )
        bits_per_coefficient = math.ceil(math.log2(fs.tau))
    count = clustering.R if clustering is not None else config.Q
    return int(count) * int(bits_per_coefficient)
