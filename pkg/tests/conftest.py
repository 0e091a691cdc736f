import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from udslab.modules.gmm_oracle import AnalyticDenoiser, Condition, ConditionRegistry, GaussianMixture  # noqa: E402
from udslab.modules.schedule import make_linear_schedule  # noqa: E402


@pytest.fixture(scope="session")
def sched():
    return make_linear_schedule()


@pytest.fixture(scope="session")
def registry():
    """Two prompts that differ only in dimension 0 (canonical editing task)."""

    return ConditionRegistry(
        prompts={
            "src": GaussianMixture.from_components([(0.5, (-2.5, 1.0), 0.1), (0.5, (-1.5, -1.0), 0.1)]),
            "tgt": GaussianMixture.from_components([(0.5, (1.5, 1.0), 0.1), (0.5, (2.5, -1.0), 0.1)]),
        }
    )


@pytest.fixture(scope="session")
def denoiser(registry, sched):
    return AnalyticDenoiser(registry, sched)


@pytest.fixture(scope="session")
def src():
    return Condition.prompt("src")


@pytest.fixture(scope="session")
def tgt():
    return Condition.prompt("tgt")
