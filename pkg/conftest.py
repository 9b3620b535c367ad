import copy
import json

import numpy as np
import pytest

from config import Config
from scenario import load_scenario, read_scenario_data, scenario_from_dict


@pytest.fixture
def default_data():
    """The bundled default scenario as a dictionary."""
    return read_scenario_data(Config.SCENARIO_DIR / "default.json")


@pytest.fixture
def linear_data():
    return read_scenario_data(Config.SCENARIO_DIR / "linear.json")


@pytest.fixture
def default_cfg():
    return load_scenario(Config.SCENARIO_DIR / "default.json")


@pytest.fixture
def linear_cfg():
    return load_scenario(Config.SCENARIO_DIR / "linear.json")


@pytest.fixture
def make_cfg():
    """Build a scenario from a base dictionary with top-level keys replaced."""
    def build(base, **changes):
        data = copy.deepcopy(base)
        data.update(changes)
        return scenario_from_dict(data)
    return build


@pytest.fixture
def write_scenario(tmp_path):
    """Write a dictionary (or raw text) to a scenario file and return its path."""
    def write(content, name="scenario.json"):
        path = tmp_path / name
        path.write_text(content if isinstance(content, str) else json.dumps(content), encoding="utf-8")
        return path
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
