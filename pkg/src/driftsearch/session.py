"""Feedback timeline state machine.

Holds the chronological feedback history, applies user operations
(add / adjust / lock / delete / archive), refits the posterior after
every mutation, and computes highlight levels for feedback the model
suspects is stale.  The same machine drives the interactive keyword
setting (observations live in slice space, features resolved from the
current keyword candidates) and the simulated-user setting (observations
live in document-vector space, appended directly by the harness with
``auto_refit`` off).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .corpus import CorpusIndex
from .errors import NotFoundError, ValidationError
from .inference import FitRequest, ModelKind, fit
from .model import INTERACTIVE, Hyperparameters, Observation, PosteriorState, WeightMode
from .ranking import (
    KeywordCandidate,
    RankedList,
    build_keyword_features,
    pseudo_feedback_from_query,
    rank_documents,
    retrieve_by_query,
    score_keywords,
)

# Highlight intensity thresholds on the expected accuracy weight.
LIGHT_BELOW = 0.65
MEDIUM_BELOW = 0.55
DARK_BELOW = 0.45


class HighlightLevel(enum.Enum):
    NONE = "none"
    LIGHT = "light"
    MEDIUM = "medium"
    DARK = "dark"


class FeedbackSource(enum.Enum):
    USER_RADAR = "user_radar"
    USER_TIMELINE = "user_timeline"
    PSEUDO_FEEDBACK = "pseudo_feedback"
    ARCHIVED_SESSION = "archived_session"
    SIMULATED = "simulated"


class HighlightPolicy(enum.Enum):
    LOWEST_WEIGHT = "lowest_weight"    # ARD: argmin E[w_i], random tie-break
    UNIFORM_RANDOM = "uniform_random"  # LG baseline
    ORACLE_TRUTH = "oracle_truth"      # entries whose value disagrees with truth


def highlight_level(weight: float) -> HighlightLevel:
    """Map an expected accuracy weight to a highlight intensity."""
    if weight < DARK_BELOW:
        return HighlightLevel.DARK
    if weight < MEDIUM_BELOW:
        return HighlightLevel.MEDIUM
    if weight < LIGHT_BELOW:
        return HighlightLevel.LIGHT
    return HighlightLevel.NONE


@dataclass
class TimelineEntry:
    observation: Observation
    term: str
    source: FeedbackSource
    highlight: HighlightLevel = HighlightLevel.NONE
    exempt_from_highlight: bool = False
    truth: float | None = None  # simulation-only ground truth

    @property
    def entry_id(self) -> str:
        return self.observation.id

    @property
    def value(self) -> float:
        return self.observation.value

    @property
    def weight_mode(self) -> WeightMode:
        return self.observation.weight_mode

    @property
    def created_at(self) -> int:
        return self.observation.created_at


@dataclass
class ArchivedKeywords:
    source_session_id: str
    keywords: list[tuple[str, float]]


class SessionState:
    """Single-writer session state; mutations refit before returning."""

    def __init__(
        self,
        session_id: str,
        corpus: CorpusIndex | None = None,
        hyper: Hyperparameters = INTERACTIVE,
        model_kind: ModelKind = ModelKind.ARD,
        rng_seed: int = 0,
        recency_window: int = 1,
        slice_k: int = 400,
        n_top_docs: int = 10,
        n_top_keywords: int = 10,
        auto_refit: bool = True,
        oracle_truth_fit: bool = False,
    ):
        self.session_id = session_id
        self.corpus = corpus
        self.hyper = hyper
        self.model_kind = model_kind
        self.rng_seed = rng_seed
        self.recency_window = recency_window
        self.slice_k = slice_k
        self.n_top_docs = n_top_docs
        self.n_top_keywords = n_top_keywords
        self.auto_refit = auto_refit
        # Simulated-user comparator that fits only on feedback matching
        # ground truth (requires entry.truth to be populated).
        self.oracle_truth_fit = oracle_truth_fit

        self.timeline: list[TimelineEntry] = []
        self.archived: list[ArchivedKeywords] = []
        self.posterior: PosteriorState | None = None
        self.current_slice: RankedList | None = None
        self.candidates: list[KeywordCandidate] = []
        self.query: str | None = None
        self._seq = 0
        self._dim: int | None = None
        self._feature_source: Callable[[str], np.ndarray | None] = lambda term: None

    # ------------------------------------------------------------------
    # bootstrap and feature resolution

    def bootstrap_from_query(self, query: str) -> None:
        """Initialize from a text query via pseudo-feedback."""
        if self.corpus is None:
            raise ValidationError("bootstrap requires a corpus-backed session")
        self.query = query
        initial = retrieve_by_query(query, self.corpus, self.slice_k)
        self._install_slice(self._pad_slice(initial))
        for term, value in pseudo_feedback_from_query(query, self.corpus, self.slice_k):
            self.append_entry(term, value, FeedbackSource.PSEUDO_FEEDBACK)
        self.refresh()

    def _pad_slice(self, ranked: RankedList) -> RankedList:
        """Pad a retrieval result to the fixed slice size with zero-score
        documents (ascending doc_id), so feature dimensions stay constant
        across refits."""
        target = min(self.slice_k, len(self.corpus.doc_ids))
        if len(ranked.doc_ids) >= target:
            return ranked
        have = set(ranked.doc_ids)
        fillers = sorted(d for d in self.corpus.doc_ids if d not in have)
        extra = fillers[: target - len(ranked.doc_ids)]
        return RankedList(
            doc_ids=ranked.doc_ids + tuple(extra),
            scores=ranked.scores + (0.0,) * len(extra),
        )

    def _install_slice(self, ranked: RankedList) -> None:
        self.current_slice = ranked
        slice_ids = list(ranked.doc_ids)
        self.candidates = build_keyword_features(slice_ids, self.corpus)
        self._dim = len(slice_ids)
        rows = np.array([self.corpus.row(d) for d in slice_ids])
        sub = self.corpus.matrix[rows]
        vocab_index = self.corpus.vocab.index

        def resolve(term: str) -> np.ndarray | None:
            col = vocab_index.get(term)
            if col is None:
                return None
            vec = sub[:, col]
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                return None
            return vec / norm

        self._feature_source = resolve

    # ------------------------------------------------------------------
    # timeline mutations

    def append_entry(
        self,
        term: str,
        value: float,
        source: FeedbackSource,
        features: np.ndarray | None = None,
        weight_mode: WeightMode = WeightMode.FREE,
        exempt_from_highlight: bool = False,
        truth: float | None = None,
    ) -> TimelineEntry:
        """Low-level append; features default to the current resolver."""
        if not (0.0 <= value <= 1.0):
            raise ValidationError(f"feedback value {value} outside [0, 1]")
        if features is None:
            features = self._feature_source(term)
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if self._dim is None:
                self._dim = features.shape[0]
        obs = Observation(
            id=f"e{self._seq:05d}",
            features=features,
            value=float(value),
            weight_mode=weight_mode,
            created_at=self._seq,
        )
        self._seq += 1
        entry = TimelineEntry(
            observation=obs,
            term=term,
            source=source,
            exempt_from_highlight=exempt_from_highlight,
            truth=truth,
        )
        self.timeline.append(entry)
        return entry

    def apply_feedback(
        self, term: str, value: float, source: FeedbackSource = FeedbackSource.USER_RADAR
    ) -> TimelineEntry:
        """Add feedback for a keyword, or update the existing entry in place.

        Updating resets the weight mode to Free: new information supersedes
        an earlier lock.
        """
        if not (0.0 <= value <= 1.0):
            raise ValidationError(f"feedback value {value} outside [0, 1]")
        existing = None
        for entry in self.timeline:
            if entry.term == term and entry.weight_mode is not WeightMode.DELETED:
                existing = entry
        if existing is not None:
            existing.observation = replace(
                existing.observation, value=float(value), weight_mode=WeightMode.FREE
            )
            existing.source = source  # an explicit adjustment supersedes pseudo provenance
            self._after_mutation()
            return existing

        features = self._feature_source(term)
        if features is None and not self._is_archived_term(term):
            raise NotFoundError(f"unknown keyword {term!r}")
        # An archived term absent from the current slice stays pending
        # (features None) and joins the fit once a slice contains it.
        entry = self.append_entry(term, value, source, features=features)
        self._after_mutation()
        return entry

    def lock_feedback(self, entry_id: str) -> TimelineEntry:
        entry = self._find_entry(entry_id)
        if entry.weight_mode is WeightMode.DELETED:
            raise NotFoundError(f"entry {entry_id!r} was deleted")
        if entry.weight_mode is not WeightMode.LOCKED:
            entry.observation = replace(entry.observation, weight_mode=WeightMode.LOCKED)
            self._after_mutation()
        return entry

    def delete_feedback(self, entry_id: str) -> TimelineEntry:
        entry = self._find_entry(entry_id)
        if entry.weight_mode is not WeightMode.DELETED:
            entry.observation = replace(entry.observation, weight_mode=WeightMode.DELETED)
            self._after_mutation()
        return entry

    def update_entry_value(self, entry_id: str, value: float) -> TimelineEntry:
        """Revise an entry's value in place (position kept, mode reset Free)."""
        if not (0.0 <= value <= 1.0):
            raise ValidationError(f"feedback value {value} outside [0, 1]")
        entry = self._find_entry(entry_id)
        entry.observation = replace(
            entry.observation, value=float(value), weight_mode=WeightMode.FREE
        )
        self._after_mutation()
        return entry

    def _find_entry(self, entry_id: str) -> TimelineEntry:
        for entry in self.timeline:
            if entry.entry_id == entry_id:
                return entry
        raise NotFoundError(f"unknown entry {entry_id!r}")

    def _is_archived_term(self, term: str) -> bool:
        return any(term == t for arch in self.archived for t, _ in arch.keywords)

    def _after_mutation(self) -> None:
        if self.auto_refit:
            self.refresh()

    # ------------------------------------------------------------------
    # fitting

    def _recent_entry_ids(self) -> set[str]:
        live = [e for e in self.timeline if e.weight_mode is not WeightMode.DELETED]
        recent = sorted(live, key=lambda e: e.created_at)[-self.recency_window:] if self.recency_window else []
        return {e.entry_id for e in recent}

    def build_fit_request(self) -> FitRequest:
        """Observations for the next fit.

        Deleted entries and pending (unresolved-feature) entries are
        excluded; entries inside the recency window are treated as locked,
        realizing the assumption that the most recent feedback is accurate.
        """
        recent = self._recent_entry_ids()
        observations = []
        for entry in self.timeline:
            obs = entry.observation
            if obs.weight_mode is WeightMode.DELETED or obs.features is None:
                continue
            if self.oracle_truth_fit and entry.truth is not None and entry.value != entry.truth:
                continue
            if obs.id in recent and obs.weight_mode is WeightMode.FREE:
                obs = replace(obs, weight_mode=WeightMode.LOCKED)
            observations.append(obs)
        return FitRequest(
            observations=tuple(observations),
            hyper=self.hyper,
            model_kind=self.model_kind,
            rng_seed=self.rng_seed,
            dim=self._dim,
        )

    def refresh(self, rerank: bool = True) -> None:
        """Refit, and re-rank in keyword mode; timeline highlights follow."""
        self._resolve_pending()
        self.posterior = fit(self.build_fit_request())
        if self.corpus is not None and self.current_slice is not None:
            if rerank:
                scored = score_keywords(self.candidates, self.posterior, self._explicit_feedback())
                ranking = rank_documents(scored, self.corpus, top_m=self.slice_k)
                self._install_slice(ranking)
            self.candidates = score_keywords(
                self.candidates, self.posterior, self._explicit_feedback()
            )
        self._stamp_highlights()

    def _resolve_pending(self) -> None:
        for entry in self.timeline:
            if entry.observation.features is None and entry.weight_mode is not WeightMode.DELETED:
                features = self._feature_source(entry.term)
                if features is not None:
                    entry.observation = replace(entry.observation, features=features)

    def _explicit_feedback(self) -> dict[str, float]:
        # Displayed relevance averages only feedback the user gave
        # explicitly; pseudo-feedback initializes the model silently.
        out: dict[str, float] = {}
        for entry in self.timeline:
            if entry.weight_mode is WeightMode.DELETED:
                continue
            if entry.source is FeedbackSource.PSEUDO_FEEDBACK:
                continue
            out[entry.term] = entry.value
        return out

    # ------------------------------------------------------------------
    # highlights

    def _highlightable(self, entry: TimelineEntry, recent: set[str]) -> bool:
        return (
            entry.weight_mode is WeightMode.FREE
            and not entry.exempt_from_highlight
            and entry.entry_id not in recent
            and entry.observation.features is not None
        )

    def compute_highlights(self) -> list[tuple[str, HighlightLevel]]:
        """Highlight levels for every non-deleted entry (pure in E[w])."""
        if self.posterior is None:
            raise ValidationError("posterior not fitted yet")
        weights = self.posterior.expected_weights()
        recent = self._recent_entry_ids()
        out = []
        for entry in self.timeline:
            if entry.weight_mode is WeightMode.DELETED:
                continue
            if not self._highlightable(entry, recent):
                out.append((entry.entry_id, HighlightLevel.NONE))
                continue
            weight = weights.get(entry.entry_id)
            level = HighlightLevel.NONE if weight is None else highlight_level(weight)
            out.append((entry.entry_id, level))
        return out

    def _stamp_highlights(self) -> None:
        levels = dict(self.compute_highlights())
        for entry in self.timeline:
            entry.highlight = levels.get(entry.entry_id, HighlightLevel.NONE)

    def select_highlight_for_simulation(
        self, policy: HighlightPolicy, rng: np.random.Generator
    ) -> str | None:
        """Pick the one entry to surface to the (simulated) user."""
        if self.posterior is None:
            raise ValidationError("posterior not fitted yet")
        recent = self._recent_entry_ids()
        eligible = [e for e in self.timeline
                    if e.weight_mode is not WeightMode.DELETED and self._highlightable(e, recent)]
        if not eligible:
            return None
        if policy is HighlightPolicy.UNIFORM_RANDOM:
            return eligible[int(rng.integers(len(eligible)))].entry_id
        if policy is HighlightPolicy.ORACLE_TRUTH:
            wrong = [e for e in eligible if e.truth is not None and e.value != e.truth]
            if not wrong:
                return None
            return wrong[int(rng.integers(len(wrong)))].entry_id
        weights = self.posterior.expected_weights()
        scored = [(weights[e.entry_id], e.entry_id) for e in eligible if e.entry_id in weights]
        if not scored:
            return None
        lowest = min(w for w, _ in scored)
        tied = [eid for w, eid in scored if w == lowest]
        return tied[int(rng.integers(len(tied)))]

    # ------------------------------------------------------------------
    # archive

    def archive_session(self) -> list[tuple[str, float]]:
        """Distinct non-deleted terms with their most recent values."""
        latest: dict[str, float] = {}
        order: list[str] = []
        for entry in sorted(self.timeline, key=lambda e: e.created_at):
            if entry.weight_mode is WeightMode.DELETED:
                continue
            if entry.term not in latest:
                order.append(entry.term)
            latest[entry.term] = entry.value
        return [(t, latest[t]) for t in order]

    def attach_archive(self, source_session_id: str, keywords: list[tuple[str, float]]) -> None:
        self.archived.append(
            ArchivedKeywords(source_session_id=source_session_id, keywords=list(keywords))
        )

    def remove_archive(self, source_session_id: str) -> None:
        before = len(self.archived)
        self.archived = [a for a in self.archived if a.source_session_id != source_session_id]
        if len(self.archived) == before:
            raise NotFoundError(f"no archived list from session {source_session_id!r}")

    # ------------------------------------------------------------------
    # snapshots

    def to_snapshot(self) -> dict:
        return {
            "session_id": self.session_id,
            "query": self.query,
            "hyper": self.hyper.to_config_text(),
            "model_kind": self.model_kind.value,
            "rng_seed": self.rng_seed,
            "recency_window": self.recency_window,
            "slice_k": self.slice_k,
            "n_top_docs": self.n_top_docs,
            "n_top_keywords": self.n_top_keywords,
            "seq": self._seq,
            "entries": [
                {
                    "entry_id": e.entry_id,
                    "term": e.term,
                    "value": e.value,
                    "weight_mode": e.weight_mode.value,
                    "source": e.source.value,
                    "created_at": e.created_at,
                    "exempt": e.exempt_from_highlight,
                    "truth": e.truth,
                    "features": None if e.observation.features is None
                    else e.observation.features.tolist(),
                }
                for e in self.timeline
            ],
            "archived": [
                {"source_session_id": a.source_session_id, "keywords": a.keywords}
                for a in self.archived
            ],
            "slice": None if self.current_slice is None else {
                "doc_ids": list(self.current_slice.doc_ids),
                "scores": list(self.current_slice.scores),
            },
        }

    def to_snapshot_text(self) -> str:
        return json.dumps(self.to_snapshot())

    @classmethod
    def from_snapshot(cls, snapshot: dict, corpus: CorpusIndex | None = None) -> "SessionState":
        state = cls(
            session_id=snapshot["session_id"],
            corpus=corpus,
            hyper=Hyperparameters.from_config_text(snapshot["hyper"]),
            model_kind=ModelKind(snapshot["model_kind"]),
            rng_seed=snapshot["rng_seed"],
            recency_window=snapshot["recency_window"],
            slice_k=snapshot["slice_k"],
            n_top_docs=snapshot["n_top_docs"],
            n_top_keywords=snapshot["n_top_keywords"],
        )
        state.query = snapshot.get("query")
        for rec in snapshot["entries"]:
            features = None if rec["features"] is None else np.asarray(rec["features"])
            obs = Observation(
                id=rec["entry_id"],
                features=features,
                value=rec["value"],
                weight_mode=WeightMode(rec["weight_mode"]),
                created_at=rec["created_at"],
            )
            state.timeline.append(
                TimelineEntry(
                    observation=obs,
                    term=rec["term"],
                    source=FeedbackSource(rec["source"]),
                    exempt_from_highlight=rec["exempt"],
                    truth=rec["truth"],
                )
            )
            if features is not None and state._dim is None:
                state._dim = features.shape[0]
        state._seq = snapshot["seq"]
        for arch in snapshot["archived"]:
            state.attach_archive(
                arch["source_session_id"], [tuple(kv) for kv in arch["keywords"]]
            )
        stored_slice = snapshot.get("slice")
        if corpus is not None and stored_slice is not None:
            state._install_slice(
                RankedList(
                    doc_ids=tuple(stored_slice["doc_ids"]),
                    scores=tuple(stored_slice["scores"]),
                )
            )
            # Restore the pre-snapshot view exactly: refit and rescore the
            # stored slice's candidates without advancing the ranking.
            state.refresh(rerank=False)
        elif state.timeline:
            state.refresh()
        return state

    # ------------------------------------------------------------------
    # views

    def timeline_display_order(self) -> list[TimelineEntry]:
        """Recent feedback on top."""
        return sorted(self.timeline, key=lambda e: -e.created_at)

    def top_keywords(self) -> list[KeywordCandidate]:
        ranked = sorted(self.candidates, key=lambda c: (-c.displayed_relevance, c.term))
        return ranked[: self.n_top_keywords]

    def top_documents(self) -> RankedList:
        if self.current_slice is None:
            raise ValidationError("session has no ranking yet")
        n = min(self.n_top_docs, len(self.current_slice.doc_ids))
        return RankedList(
            doc_ids=self.current_slice.doc_ids[:n],
            scores=self.current_slice.scores[:n],
        )
