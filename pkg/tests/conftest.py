"""Shared fixtures: a small generated hospital-style dataset and its
fitted artifacts, reused across test modules (session scope keeps the
suite fast)."""

import os

import pytest

from relsynth.analytics import build_analytics_spec, encode_with_spec
from relsynth.dataset import filter_entities, load_dataset, split_holdout
from relsynth.llm.client import EndpointClient, EndpointConfig
from relsynth.pgm import fit_network
from relsynth.similarity import build_index
from relsynth.toyset import generate_toy_dataset

TOKEN_VAR = "RELSYNTH_TEST_TOKEN"


@pytest.fixture(scope="session", autouse=True)
def _token_env():
    os.environ.setdefault(TOKEN_VAR, "test-token")


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toyset")
    generate_toy_dataset(out, entities=400, seed=7)
    return out


@pytest.fixture(scope="session")
def toy_dataset(toy_dir):
    return load_dataset(toy_dir / "config.json")


@pytest.fixture(scope="session")
def toy_split(toy_dataset):
    return split_holdout(toy_dataset, 0.2, seed=1)


@pytest.fixture(scope="session")
def toy_train(toy_dataset, toy_split):
    return filter_entities(toy_dataset, toy_split.train_entities)


@pytest.fixture(scope="session")
def toy_holdout(toy_dataset, toy_split):
    return filter_entities(toy_dataset, toy_split.holdout_entities)


@pytest.fixture(scope="session")
def toy_spec(toy_train, toy_dataset):
    return build_analytics_spec(toy_train, toy_dataset.config.get("discretization", {}))


@pytest.fixture(scope="session")
def toy_encoded(toy_train, toy_spec):
    return encode_with_spec(toy_train, toy_spec)


@pytest.fixture(scope="session")
def toy_net(toy_encoded, toy_spec):
    return fit_network(toy_encoded, epsilon=2.0, seed=3, spec_hash=toy_spec.spec_hash)


@pytest.fixture(scope="session")
def toy_index(toy_encoded, toy_train):
    return build_index(toy_encoded, toy_train.entity_ids)


@pytest.fixture
def make_client():
    """Client factory bound to a mock endpoint URL."""

    def make(url, **overrides):
        fields = dict(
            url=url,
            model="mock-model",
            auth_env_var=TOKEN_VAR,
            max_concurrency=overrides.pop("max_concurrency", 1),
            backoff_base=overrides.pop("backoff_base", 0.0),
        )
        fields.update(overrides)
        return EndpointClient(EndpointConfig(**fields))

    return make
