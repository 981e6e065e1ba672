import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wardtrack import pipeline
from wardtrack.detector import build_dictionaries
from wardtrack.scene import default_scene
from wardtrack.sim import generate_scenario


@pytest.fixture(scope="session")
def ward():
    return default_scene()


@pytest.fixture(scope="session")
def ward_dicts(ward):
    return build_dictionaries(ward)


@pytest.fixture(scope="session")
def scenario_run(tmp_path_factory):
    """Run the file pipeline once per (kind, seed) and hand back the run directory."""
    cache = {}

    def run(kind, seed=0):
        key = (kind, seed)
        if key not in cache:
            wd = tmp_path_factory.mktemp(f"{kind}_{seed}")
            report = pipeline.run_all(wd, generate_scenario(kind, seed))
            cache[key] = (wd, report)
        return cache[key]

    return run
