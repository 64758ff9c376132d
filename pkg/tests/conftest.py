import numpy as np
import pytest

from symbiotic_radio.channel import ChannelSet, SystemParams


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channel(rng, J, M_t, M_r, hd_scale=1.0):
    """Unit-variance i.i.d. channels, independent of the scenario geometry."""
    return ChannelSet(hd_scale * cn(rng, M_r, M_t), cn(rng, J, M_t), cn(rng, J, M_r),
                      np.ones(J), np.ones(J), hd_scale ** 2, np.zeros((J, 2)))


def unit_params(J, M_t, M_r, snr_db=10.0, K=128, alpha=1.0):
    """Parameters with noise power 1 W so that ``P`` in watts equals ``snr``."""
    return SystemParams(M_t=M_t, M_r=M_r, J=J, K=K, P_dbm=30.0 + snr_db, sigma2_dbm=30.0,
                        alpha=alpha)


def random_psd_trace1(rng, n, rank=None):
    B = cn(rng, n, rank or n)
    Q = B @ B.conj().T
    return Q / np.real(np.trace(Q))


def random_hermitian(rng, n):
    B = cn(rng, n, n)
    return (B + B.conj().T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
