from pathlib import Path

import pytest

from tinybird import tinyml

FIXTURE_DIR = Path(__file__).parent / "fixtures"
MODEL_PATH = FIXTURE_DIR / "songnet.tbm"


@pytest.fixture(scope="session")
def model_path() -> Path:
    return MODEL_PATH


@pytest.fixture(scope="session")
def bundle() -> tinyml.ModelBundle:
    return tinyml.load_model(MODEL_PATH)
