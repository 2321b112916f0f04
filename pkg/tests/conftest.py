import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from betadelaunay.point_process import Kind, ModelParams  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BETA0 = ModelParams(Kind.BETA, 3, 0.0)
BETA2 = ModelParams(Kind.BETA, 3, 2.0)
BETA_PRIME4 = ModelParams(Kind.BETA_PRIME, 3, 4.0)
GAUSS3 = ModelParams(Kind.GAUSSIAN, 3)


@pytest.fixture(params=[BETA0, BETA2, BETA_PRIME4, GAUSS3], ids=lambda m: f"{m.kind.value}-{m.beta}")
def model3(request):
    return request.param


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
