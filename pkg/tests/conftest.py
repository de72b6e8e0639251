import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chainrestore import channel
from chainrestore.basis import Partition
from chainrestore.evolution import evolution_operator, find_t0
from chainrestore.hamiltonian import ChainSpec

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

COMPLETENESS_TOL = 1e-10
TRACE_TOL = 1e-12


class ChannelMonitor:
    """Completeness and trace of every channel evaluated during the session."""

    def __init__(self):
        self.count = 0
        self.completeness = 0.0
        self.trace = 0.0

    def __call__(self, a, out):
        dim = a.shape[2]
        gram = np.einsum("xni,xnj->ij", a.conj(), a)
        self.completeness = max(self.completeness, float(np.abs(gram - np.eye(dim)).max()))
        if out.ndim == 2:
            err = abs(np.trace(out) - 1)
        else:
            err = np.abs(np.einsum("nnij->ij", out) - np.eye(dim)).max()
        self.trace = max(self.trace, float(err))
        self.count += 1

    @property
    def passed(self) -> bool:
        return self.completeness <= COMPLETENESS_TOL and self.trace <= TRACE_TOL


MONITOR = ChannelMonitor()
ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    channel.evaluation_hooks.append(MONITOR)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"[{'PASS' if MONITOR.passed else 'FAIL'}] suite-wide channel checks: {MONITOR.count} evaluations, "
        f"max completeness error {MONITOR.completeness:.2e} (tol {COMPLETENESS_TOL:g}), "
        f"max trace error {MONITOR.trace:.2e} (tol {TRACE_TOL:g})"
    )


def pytest_sessionfinish(session, exitstatus):
    if MONITOR.count and not MONITOR.passed and exitstatus == 0:
        session.exitstatus = 1


@pytest.fixture
def channel_monitor():
    return MONITOR


@pytest.fixture
def acceptance_log():
    def record(number, name: str, passed: bool, detail: str):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}: {detail}")
        return passed

    return record


@pytest.fixture(scope="session")
def chain42():
    spec = ChainSpec.boundary_adjusted(42, (0.3005, 0.5311))
    return spec, Partition(42, 2, 2, 4)


@pytest.fixture(scope="session")
def t0_42(chain42):
    return find_t0(*chain42)


@pytest.fixture(scope="session")
def v42(chain42, t0_42):
    return evolution_operator(chain42[0], t0_42.t0, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

