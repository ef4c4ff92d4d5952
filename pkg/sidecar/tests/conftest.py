import pytest

from postersidecar.fixtures import make_conformance_fixture, make_labeled_set


@pytest.fixture(scope="session")
def conformance_fixture(tmp_path_factory):
    return make_conformance_fixture(tmp_path_factory.mktemp("conformance"))


@pytest.fixture(scope="session")
def labeled_set(tmp_path_factory):
    return make_labeled_set(tmp_path_factory.mktemp("labeled"), per_category=10, model="four")
