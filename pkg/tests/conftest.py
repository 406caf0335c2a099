import pytest

from misgender_meta.fixtures import data_path, misgendered_templates, ruff_templates, tango_contexts
from misgender_meta.model_client import MockModel


@pytest.fixture(scope="session")
def builtin_mock():
    return MockModel.load(data_path("mock_spec"), model_id="mock")


@pytest.fixture
def templates():
    return {t.id: t for t in misgendered_templates() + ruff_templates()}


@pytest.fixture
def contexts():
    return {c.id: c for c in tango_contexts()}
