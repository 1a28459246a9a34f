import os

import pytest

from src import presets
from src.config_loader import load_defaults
from src.group_core import validate_presentation
from src.walk_engine import WalkParams

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EXPERIMENTS = os.path.join(ROOT, "config", "experiments")


def build(spec):
    pres = validate_presentation(spec, generators=list(spec["mu0"]))
    params = WalkParams.from_names(pres, spec["mu0"], spec["alpha"], spec["p"])
    return pres, params


@pytest.fixture
def klein():
    return build(presets.klein_example(alpha=0.5, p=0.5))


@pytest.fixture
def degenerate():
    return build(presets.degenerate_example(alpha=0.5, p=0.8))


@pytest.fixture
def recurrent():
    return build(presets.degenerate_example(alpha=0.5, p=0.5))


@pytest.fixture
def integers():
    return build(presets.integers_example())


@pytest.fixture
def defaults():
    return load_defaults()


@pytest.fixture
def experiment_path():
    def _path(name):
        return os.path.join(EXPERIMENTS, f"{name}.json")

    return _path
