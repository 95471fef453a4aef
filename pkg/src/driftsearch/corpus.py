"""Dataset ingestion and TF-IDF feature construction.

Pipeline: lowercase, split on non-alphanumeric characters, drop tokens
shorter than two characters; no stemming and no stopword list (the
document-frequency thresholds already remove ubiquitous terms).
TF is the raw in-document count, IDF is log(N / df_count) with the
natural log, and document vectors are L2-normalized.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCorpusError, EmptyVocabularyError, InsufficientDataError

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if len(t) >= 2]


@dataclass(frozen=True)
class Vocabulary:
    """Retained terms in stable lexicographic order."""

    terms: tuple[str, ...]
    document_frequency: np.ndarray  # fraction of documents containing the term
    idf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class Document:
    doc_id: str
    label: str | None
    text: str


def build_vocabulary(
    token_docs: list[list[str]], max_df: float = 0.2, min_df: float = 0.04
) -> Vocabulary:
    """Retain exactly the terms with min_df <= df <= max_df."""
    if not (0.0 <= min_df < max_df <= 1.0):
        raise ValueError(f"invalid df thresholds ({min_df}, {max_df})")
    n_docs = len(token_docs)
    if n_docs == 0:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    df_count: dict[str, int] = {}
    for tokens in token_docs:
        for term in set(tokens):
            df_count[term] = df_count.get(term, 0) + 1
    kept = sorted(t for t, c in df_count.items() if min_df <= c / n_docs <= max_df)
    if not kept:
        raise EmptyVocabularyError("document-frequency thresholds removed every term")
    counts = np.array([df_count[t] for t in kept], dtype=np.float64)
    return Vocabulary(
        terms=tuple(kept),
        document_frequency=counts / n_docs,
        idf=np.log(n_docs / counts),
    )


def vectorize(tokens: list[str], vocab: Vocabulary) -> tuple[np.ndarray, bool]:
    """L2-normalized TF-IDF vector over the vocabulary.

    Unknown terms are ignored.  Returns ``(vector, is_empty)``; a document
    with no vocabulary terms yields the zero vector flagged empty.
    """
    vec = np.zeros(len(vocab))
    index = vocab.index
    for term in tokens:
        i = index.get(term)
        if i is not None:
            vec[i] += 1.0
    if not vec.any():
        return vec, True
    vec *= vocab.idf
    vec /= np.linalg.norm(vec)
    return vec, False


def load_newsgroups(path: str | Path, per_group: int, groups: int) -> list[Document]:
    """Read the standard 20-Newsgroups layout: one directory per group,
    one file per message.  Selects the first ``per_group`` messages per
    group by sorted filename, and the first ``groups`` groups by sorted
    directory name, so the subset is reproducible.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    group_dirs = sorted(p for p in root.iterdir() if p.is_dir())[:groups]
    if len(group_dirs) < groups:
        raise InsufficientDataError(f"{root} holds {len(group_dirs)} groups, need {groups}")
    docs: list[Document] = []
    for gdir in group_dirs:
        files = sorted(p for p in gdir.iterdir() if p.is_file())
        if len(files) < per_group:
            raise InsufficientDataError(
                f"group {gdir.name!r} holds {len(files)} messages, need {per_group}"
            )
        for f in files[:per_group]:
            docs.append(
                Document(
                    doc_id=f"{gdir.name}/{f.name}",
                    label=gdir.name,
                    text=f.read_text(encoding="latin-1", errors="replace"),
                )
            )
    return docs


class CorpusIndex:
    """Immutable TF-IDF index over a document collection.

    ``matrix`` holds one unit-norm row per document; documents whose
    vector is empty after thresholding are excluded and listed in
    ``skipped``.
    """

    def __init__(
        self,
        docs: list[Document],
        max_df: float = 0.2,
        min_df: float = 0.04,
    ):
        if not docs:
            raise EmptyCorpusError("no documents")
        token_docs = [tokenize(d.text) for d in docs]
        self.vocab = build_vocabulary(token_docs, max_df=max_df, min_df=min_df)
        self.max_df, self.min_df = max_df, min_df
        kept_rows, kept_docs, skipped = [], [], []
        for doc, tokens in zip(docs, token_docs):
            vec, empty = vectorize(tokens, self.vocab)
            if empty:
                skipped.append(doc.doc_id)
            else:
                kept_rows.append(vec)
                kept_docs.append(doc)
        if not kept_docs:
            raise EmptyCorpusError("every document vectorized to zero")
        self.documents: tuple[Document, ...] = tuple(kept_docs)
        self.matrix = np.vstack(kept_rows)
        self.skipped: tuple[str, ...] = tuple(skipped)
        self.doc_ids = tuple(d.doc_id for d in self.documents)
        self.labels = tuple(d.label for d in self.documents)
        self._row = {doc_id: i for i, doc_id in enumerate(self.doc_ids)}

    @property
    def dim(self) -> int:
        return len(self.vocab)

    def row(self, doc_id: str) -> int:
        return self._row[doc_id]

    def document(self, doc_id: str) -> Document:
        return self.documents[self._row[doc_id]]

    def content_key(self) -> str:
        """Hash of the raw inputs and preprocessing settings."""
        h = hashlib.sha256()
        h.update(f"max_df={self.max_df};min_df={self.min_df};".encode())
        for d in self.documents:
            h.update(d.doc_id.encode())
            h.update(d.text.encode("utf-8", errors="replace"))
        return h.hexdigest()

    def save_cache(self, path: str | Path) -> None:
        """Write a single-file snapshot of vocabulary plus vectors."""
        meta = {
            "content_key": self.content_key(),
            "max_df": self.max_df,
            "min_df": self.min_df,
            "terms": list(self.vocab.terms),
            "doc_ids": list(self.doc_ids),
            "labels": list(self.labels),
            "texts": [d.text for d in self.documents],
            "skipped": list(self.skipped),
        }
        np.savez_compressed(
            path,
            meta=json.dumps(meta),
            matrix=self.matrix,
            idf=self.vocab.idf,
            document_frequency=self.vocab.document_frequency,
        )

    @classmethod
    def load_cache(cls, path: str | Path) -> "CorpusIndex":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            index = cls.__new__(cls)
            index.vocab = Vocabulary(
                terms=tuple(meta["terms"]),
                document_frequency=data["document_frequency"],
                idf=data["idf"],
            )
            index.max_df, index.min_df = meta["max_df"], meta["min_df"]
            index.documents = tuple(
                Document(doc_id=i, label=l, text=t)
                for i, l, t in zip(meta["doc_ids"], meta["labels"], meta["texts"])
            )
            index.matrix = data["matrix"]
            index.skipped = tuple(meta["skipped"])
            index.doc_ids = tuple(meta["doc_ids"])
            index.labels = tuple(meta["labels"])
            index._row = {doc_id: i for i, doc_id in enumerate(index.doc_ids)}
        return index
