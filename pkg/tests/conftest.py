import pytest

from clonedet import synth
from clonedet.pipeline import RunConfig, load_corpus

DESK_METHODS = 10_200


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """About 10k independent synthetic methods, extracted and featurized."""
    root = tmp_path_factory.mktemp("desk")
    synth.write_corpus(root, synth.generate_methods(DESK_METHODS, seed=101), per_file=25, seed=102)
    records, skipped = load_corpus(root, RunConfig())
    assert skipped == 0
    return records
