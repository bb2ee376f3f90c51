import csv
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nomavlc.noise import NoiseParams

settings.register_profile("ci", max_examples=50, deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one acceptance line: report(criterion, passed, detail) or report(criterion, None, note)."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(criterion, passed, detail):
        tag = "info" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {criterion:>2} {tag}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

REFERENCE_QOS = (0.2, 0.6, 2.0, 5.0)


@pytest.fixture
def ref_noise():
    return NoiseParams(2.0, 2.0 / 3.0, 10, 10)


def read_csv(path):
    """Header plus float rows of a CSV, skipping '#' lines."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows)


def comment_lines(path):
    with open(path) as fh:
        return [ln.rstrip("\n") for ln in fh if ln.startswith("#")]


def snr_power(snr_db, noise):
    return noise.variance * 10.0 ** (snr_db / 10.0)


def gaussian(x, sd):
    return np.exp(-0.5 * (np.asarray(x) / sd) ** 2) / (math.sqrt(2 * math.pi) * sd)


def random_feasible_instance(rng):
    """Sorted gains, QoS thresholds, noise and a budget above the minimum needed for the thresholds."""
    from nomavlc.allocation import QosSpec, minimum_powers

    U = int(rng.integers(1, 6))
    h = np.sort(rng.uniform(0.5, 4.0, U))
    alpha = rng.uniform(0.5, 3.0)
    noise = NoiseParams(alpha, rng.uniform(0.0, 0.6) * alpha, 10)
    th = rng.uniform(0.0, 1.5, U)
    need = float(np.sum(minimum_powers(h, QosSpec(th, 1.0), alpha)))
    total = need * rng.uniform(1.05, 4.0) + rng.uniform(0.1, 5.0)
    return h, QosSpec(th, total), noise
