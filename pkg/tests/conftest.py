import numpy as np
import pytest

from driftsearch.corpus import CorpusIndex, load_newsgroups
from driftsearch.synthetic import generate_synthetic_newsgroups


MINI_CORPUS_PARAMS = dict(
    groups=4,
    per_group=30,
    seed=7,
    pool_terms=60,
    boosted_per_group=10,
    boost=4.0,
    doc_activation=0.9,
    base_df_low=0.06,
    base_df_high=0.15,
    rare_words_per_doc=8,
)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("minicorpus")
    return generate_synthetic_newsgroups(root, **MINI_CORPUS_PARAMS)


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    docs = load_newsgroups(corpus_dir, per_group=30, groups=4)
    return CorpusIndex(docs, max_df=0.2, min_df=0.04)


@pytest.fixture(scope="session")
def common_query_term(corpus):
    # A high-document-frequency vocabulary term; guaranteed to retrieve.
    return corpus.vocab.terms[int(np.argmax(corpus.vocab.document_frequency))]
