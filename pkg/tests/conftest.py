import sys
from pathlib import Path

import pytest

from nnintent.corpus import domain_filter, load_dataset, sample_k_shot
from nnintent.scorers import BuiltinScorer

DATA_DIR = Path(__file__).parent / "data"
MOCK_SCORER = Path(__file__).parent / "mock_scorer.py"


def mock_scorer_spec(mode: str, batch_limit: int = 900) -> str:
    return f"cmd:{sys.executable} {MOCK_SCORER} {mode} {batch_limit}"


@pytest.fixture(scope="session")
def tiny_dataset():
    return load_dataset(DATA_DIR / "corpus_tiny.json")


@pytest.fixture(scope="session")
def dataset():
    return load_dataset(DATA_DIR / "corpus_banking_travel.json")


@pytest.fixture(scope="session")
def banking(dataset):
    return domain_filter(dataset, "banking")


@pytest.fixture(scope="session")
def bank3(banking):
    """K=3 banking bank used by the frozen classification goldens."""
    return sample_k_shot(banking, 3, 11)


@pytest.fixture()
def builtin64():
    return BuiltinScorer(embed_dim=64)


@pytest.fixture(scope="session")
def lexicon_path():
    return DATA_DIR / "lexicon_small.tsv"


@pytest.fixture(scope="session")
def bt_path():
    return DATA_DIR / "bt_examples.tsv"


@pytest.fixture(scope="session")
def corpus_path():
    return DATA_DIR / "corpus_banking_travel.json"


@pytest.fixture(scope="session")
def tiny_corpus_path():
    return DATA_DIR / "corpus_tiny.json"
