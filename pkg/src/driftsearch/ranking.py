"""Keyword features, displayed relevances, document ranking, pseudo-feedback.

Keyword feature vectors are built dynamically from the current result
slice: one component per top document, holding that document's TF-IDF
weight for the term, L2-normalized.  Documents are scored through the
most relevant keywords, so the loop is
feedback -> keyword relevances -> document ranking -> new slice.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import CorpusIndex, Vocabulary, tokenize
from .errors import EmptySliceError, NoResultsError
from .model import PosteriorState, predict_relevance

TOP_KEYWORDS_FOR_RANKING = 10
KEYWORD_POOL_CAP = 1000


@dataclass(frozen=True)
class KeywordCandidate:
    """A vocabulary term present in the slice, with its slice-space features."""

    term: str
    features: np.ndarray  # dimension = number of slice documents, unit norm
    estimated_relevance: float = 0.0
    displayed_relevance: float = 0.0


@dataclass(frozen=True)
class RankedList:
    doc_ids: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if any(b > a for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("scores must be non-increasing")

    def __len__(self) -> int:
        return len(self.doc_ids)


def clamp01(value: float) -> float:
    return min(1.0, max(0.0, float(value)))


def build_keyword_features(
    slice_doc_ids: list[str],
    corpus: CorpusIndex,
    pool_cap: int = KEYWORD_POOL_CAP,
) -> list[KeywordCandidate]:
    """One candidate per vocabulary term appearing in the slice.

    The d-th feature component is the term's TF-IDF weight in slice
    document d.  The pool is capped at the ``pool_cap`` terms with the
    most TF-IDF mass in the slice to bound the inference problem size.
    """
    if not slice_doc_ids:
        raise EmptySliceError("keyword features need at least one slice document")
    rows = np.array([corpus.row(doc_id) for doc_id in slice_doc_ids])
    sub = corpus.matrix[rows]  # K x D
    mass = sub.sum(axis=0)
    present = np.flatnonzero(mass > 0)
    if pool_cap is not None and present.size > pool_cap:
        keep = np.argsort(-mass[present], kind="stable")[:pool_cap]
        present = present[keep]
    candidates = []
    for col in present:
        vec = sub[:, col]
        candidates.append(
            KeywordCandidate(term=corpus.vocab.terms[col], features=vec / np.linalg.norm(vec))
        )
    candidates.sort(key=lambda c: c.term)
    return candidates


def displayed_keyword_relevance(estimated: float, user_feedback: float | None = None) -> float:
    """Clamp the model estimate to [0,1]; average with explicit feedback.

    Averaging keeps a dragged keyword near where the user put it while the
    model estimate still shows through.
    """
    shown = clamp01(estimated)
    if user_feedback is None:
        return shown
    return 0.5 * (shown + float(user_feedback))


def score_keywords(
    candidates: list[KeywordCandidate],
    posterior: PosteriorState,
    feedback_by_term: dict[str, float] | None = None,
) -> list[KeywordCandidate]:
    """Fill estimated and displayed relevance on each candidate."""
    feedback_by_term = feedback_by_term or {}
    scored = []
    for cand in candidates:
        est = predict_relevance(posterior, cand.features)
        disp = displayed_keyword_relevance(est, feedback_by_term.get(cand.term))
        scored.append(replace(cand, estimated_relevance=est, displayed_relevance=disp))
    return scored


def rank_documents(
    keywords: list[KeywordCandidate],
    corpus: CorpusIndex,
    top_m: int,
    n_top_keywords: int = TOP_KEYWORDS_FOR_RANKING,
) -> RankedList:
    """Score documents through the most relevant keywords.

    score(doc) = sum over the ``n_top_keywords`` highest-displayed-relevance
    keywords of (keyword relevance x document TF-IDF weight for the term).
    Deterministic: keywords tie-break lexicographically, documents by
    ascending doc_id.
    """
    if not keywords:
        raise EmptySliceError("rank_documents needs at least one keyword")
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    chosen = sorted(keywords, key=lambda c: (-c.displayed_relevance, c.term))[:n_top_keywords]
    scores = np.zeros(corpus.matrix.shape[0])
    for cand in chosen:
        col = corpus.vocab.index.get(cand.term)
        if col is not None:
            scores += cand.displayed_relevance * corpus.matrix[:, col]
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], corpus.doc_ids[i]))[:top_m]
    return RankedList(
        doc_ids=tuple(corpus.doc_ids[i] for i in order),
        scores=tuple(float(scores[i]) for i in order),
    )


def rank_by_posterior(posterior: PosteriorState, corpus: CorpusIndex, top_m: int) -> RankedList:
    """Rank documents directly by dot(phi_mean, doc vector).

    Used when observations live in document-vector space (the simulation
    setting), bypassing the keyword layer.
    """
    scores = corpus.matrix @ posterior.phi_mean
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], corpus.doc_ids[i]))[:top_m]
    return RankedList(
        doc_ids=tuple(corpus.doc_ids[i] for i in order),
        scores=tuple(float(scores[i]) for i in order),
    )


def retrieve_by_query(query: str, corpus: CorpusIndex, k: int) -> RankedList:
    """Top-k documents by TF-IDF cosine similarity to the query alone."""
    from .corpus import vectorize

    tokens = tokenize(query)
    if not tokens:
        raise NoResultsError("query is empty after tokenization")
    qvec, empty = vectorize(tokens, corpus.vocab)
    if empty:
        raise NoResultsError("no vocabulary term matches the query")
    scores = corpus.matrix @ qvec
    hits = np.flatnonzero(scores > 0)
    if hits.size == 0:
        raise NoResultsError("no document matches the query")
    order = sorted(hits, key=lambda i: (-scores[i], corpus.doc_ids[i]))[:k]
    return RankedList(
        doc_ids=tuple(corpus.doc_ids[i] for i in order),
        scores=tuple(float(scores[i]) for i in order),
    )


def pseudo_feedback_from_query(
    query: str, corpus: CorpusIndex, retrieval_k: int = 400
) -> list[tuple[str, float]]:
    """Bootstrap feedback from a text query.

    Retrieves documents by query similarity alone, counts in how many of
    them each vocabulary term appears, keeps terms at least half as common
    as the most common one, and assigns value count/max_count (the most
    common term gets exactly 1.0).
    """
    retrieved = retrieve_by_query(query, corpus, retrieval_k)
    rows = np.array([corpus.row(doc_id) for doc_id in retrieved.doc_ids])
    counts = (corpus.matrix[rows] > 0).sum(axis=0)
    c_max = int(counts.max())
    if c_max == 0:  # unreachable: retrieval returned scoring documents
        raise NoResultsError("retrieved documents contain no vocabulary terms")
    keep = np.flatnonzero(counts >= c_max / 2)
    pairs = [(corpus.vocab.terms[i], counts[i] / c_max) for i in keep]
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return pairs
