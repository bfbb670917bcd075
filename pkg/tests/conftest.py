from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from supplierlab.model import Destination, ModelParams

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def three_markets() -> ModelParams:
    """Domestic line plus a poor (low quality taste) and a rich (high quality taste) export market."""
    return ModelParams(
        rho=2.0,
        alpha=0.5,
        destinations=(
            Destination("D", 0.2, income_group="domestic"),
            Destination("P", 0.1, fixed_cost=0.3, income_group="emerging"),
            Destination("R", 0.6, fixed_cost=0.6, income_group="advanced"),
        ),
    )


@pytest.fixture
def heatmap_params() -> ModelParams:
    return ModelParams(
        destinations=(
            Destination("D", 0.2, income_group="domestic"),
            Destination("P", 0.1, fixed_cost=0.065, income_group="emerging"),
            Destination("R", 0.6, income=30.0, fixed_cost=4.1, income_group="advanced"),
        )
    )
