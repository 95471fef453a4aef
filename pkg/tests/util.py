"""Shared test helpers."""

import numpy as np

from driftsearch.corpus import CorpusIndex, Document, Vocabulary


def stub_corpus(matrix, terms, doc_ids, labels=None):
    """A CorpusIndex with a hand-set TF-IDF matrix."""
    index = CorpusIndex.__new__(CorpusIndex)
    index.matrix = np.asarray(matrix, dtype=float)
    index.vocab = Vocabulary(
        terms=tuple(terms),
        document_frequency=np.full(len(terms), 0.5),
        idf=np.ones(len(terms)),
    )
    labels = labels if labels is not None else [None] * len(doc_ids)
    index.doc_ids = tuple(doc_ids)
    index.labels = tuple(labels)
    index.documents = tuple(
        Document(d, l, "") for d, l in zip(doc_ids, labels)
    )
    index.skipped = ()
    index.max_df, index.min_df = 1.0, 0.0
    index._row = {d: i for i, d in enumerate(doc_ids)}
    return index
