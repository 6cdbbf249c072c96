import numpy as np
import pytest

from rislink.reflect import FeasibilitySet, ReflectionConfig
from rislink.scene import ChannelGenParams, ChannelSet, Scenario, synthesize_channels

# acceptance results collected for the end-of-run summary
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: int(k.split()[0])):
        ok, detail = CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} ({detail})")


def rayleigh(L, K, Q=(8,), seed=0, **kw):
    """Small Rayleigh scenario plus its snapshot-0 channels."""
    sc = Scenario.simple(L, K, Q=Q, seed=seed, channel_params=ChannelGenParams(model="rayleigh"),
                         **kw)
    return sc, synthesize_channels(sc, 0)


def unit_configs(ch, fs=None):
    return [ReflectionConfig.unit(q, fs) for q in ch.Q]


def random_channels(rng, L, K, Q=(4,)):
    """Unit-variance Gaussian ChannelSet without a Scenario."""
    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return ChannelSet(H_BU=cn(K, L), H_BR=tuple(cn(q, L) for q in Q),
                      H_RU=tuple(cn(K, q) for q in Q))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def continuous():
    return FeasibilitySet.continuous()
