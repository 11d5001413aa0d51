import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aaskit.generate import gen_component_aas, gen_system_aas
from aaskit.ingest import load_component_dir, load_component_file, load_system_file

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def webots_component():
    return load_component_file(DATA_DIR / "ComponentWebots.component.json")


@pytest.fixture(scope="session")
def all_components():
    return load_component_dir(DATA_DIR)


@pytest.fixture(scope="session")
def larry_system(all_components):
    return load_system_file(DATA_DIR / "Larry.system.json", all_components)


@pytest.fixture(scope="session")
def webots_env(webots_component):
    return gen_component_aas(webots_component)


@pytest.fixture(scope="session")
def larry_env(larry_system, all_components):
    return gen_system_aas(larry_system, all_components)
