"""Timeline state machine: mutations, refits, highlights, archives."""

import numpy as np
import pytest

from driftsearch.errors import NotFoundError, ValidationError
from driftsearch.inference import ModelKind, fit
from driftsearch.model import INTERACTIVE, SIMULATION, WeightMode, expected_weight
from driftsearch.session import (
    FeedbackSource,
    HighlightLevel,
    HighlightPolicy,
    SessionState,
    highlight_level,
)


@pytest.fixture
def live_session(corpus, common_query_term):
    state = SessionState("s-live", corpus=corpus, rng_seed=3, slice_k=40)
    state.bootstrap_from_query(common_query_term)
    return state


def doc_mode_session(n_entries=5, value=0.8, seed=0, dim=3, **kwargs):
    """Harness-style session: observations carry explicit feature vectors."""
    state = SessionState("s-doc", hyper=SIMULATION, model_kind=ModelKind.ARD,
                         rng_seed=seed, auto_refit=False, **kwargs)
    rng = np.random.default_rng(42)
    for i in range(n_entries):
        feats = rng.random(dim)
        feats /= np.linalg.norm(feats)
        state.append_entry(f"doc{i}", value, FeedbackSource.SIMULATED, features=feats)
    state.refresh()
    return state


class TestHighlightMapping:
    def test_threshold_values_exact(self):
        assert highlight_level(0.66) is HighlightLevel.NONE
        assert highlight_level(0.60) is HighlightLevel.LIGHT
        assert highlight_level(0.50) is HighlightLevel.MEDIUM
        assert highlight_level(0.40) is HighlightLevel.DARK

    def test_boundaries_exclusive(self):
        assert highlight_level(0.65) is HighlightLevel.NONE
        assert highlight_level(0.55) is HighlightLevel.LIGHT
        assert highlight_level(0.45) is HighlightLevel.MEDIUM

    def test_monotone_in_weight(self):
        order = [HighlightLevel.DARK, HighlightLevel.MEDIUM, HighlightLevel.LIGHT, HighlightLevel.NONE]
        grid = np.linspace(0.0, 1.2, 200)
        ranks = [order.index(highlight_level(w)) for w in grid]
        assert all(b >= a for a, b in zip(ranks, ranks[1:]))


class TestApplyFeedback:
    def test_new_term_appends_newest_on_top(self, live_session):
        n_before = len(live_session.timeline)
        term = live_session.candidates[0].term
        live_session.apply_feedback(term, 0.9)
        display = live_session.timeline_display_order()
        assert len(live_session.timeline) == n_before + 1
        assert display[0].term == term and display[0].value == 0.9

    def test_existing_term_updates_in_place(self, live_session):
        term = live_session.candidates[0].term
        live_session.apply_feedback(term, 0.2)
        n = len(live_session.timeline)
        position = [e.term for e in live_session.timeline].index(term)
        live_session.apply_feedback(term, 0.8)
        assert len(live_session.timeline) == n
        assert live_session.timeline[position].value == 0.8

    def test_out_of_range_value_rejected(self, live_session):
        with pytest.raises(ValidationError):
            live_session.apply_feedback(live_session.candidates[0].term, 1.2)

    def test_unknown_term_rejected(self, live_session):
        with pytest.raises(NotFoundError):
            live_session.apply_feedback("nosuchterm", 0.5)

    def test_posterior_refit_after_every_mutation(self, live_session):
        term = live_session.candidates[0].term
        live_session.apply_feedback(term, 1.0)
        fresh = fit(live_session.build_fit_request())
        assert np.array_equal(live_session.posterior.phi_mean, fresh.phi_mean)


class TestLockDelete:
    def test_locked_weight_exactly_one(self, live_session):
        term = live_session.candidates[0].term
        entry = live_session.apply_feedback(term, 0.9)
        live_session.apply_feedback(live_session.candidates[1].term, 0.1)
        live_session.lock_feedback(entry.entry_id)
        assert expected_weight(live_session.posterior, entry.entry_id) == 1.0
        assert entry.highlight is HighlightLevel.NONE

    def test_lock_idempotent(self, live_session):
        entry = live_session.apply_feedback(live_session.candidates[0].term, 0.9)
        live_session.lock_feedback(entry.entry_id)
        snapshot = live_session.to_snapshot()
        live_session.lock_feedback(entry.entry_id)
        assert live_session.to_snapshot() == snapshot

    def test_adjust_after_lock_returns_to_free(self, live_session):
        term = live_session.candidates[0].term
        entry = live_session.apply_feedback(term, 0.9)
        live_session.lock_feedback(entry.entry_id)
        live_session.apply_feedback(term, 0.4)
        assert entry.weight_mode is WeightMode.FREE

    def test_delete_all_returns_prior(self, corpus, common_query_term):
        state = SessionState("s", corpus=corpus, rng_seed=1, slice_k=30)
        state.bootstrap_from_query(common_query_term)
        for entry in list(state.timeline):
            state.delete_feedback(entry.entry_id)
        post = state.posterior
        assert np.array_equal(post.phi_mean, np.zeros(post.dim))
        assert np.array_equal(post.phi_cov, INTERACTIVE.lambda_phi * np.eye(post.dim))
        assert post.sigma2_shape == INTERACTIVE.alpha_sigma2
        assert post.sigma2_scale == INTERACTIVE.beta_sigma2

    def test_delete_equals_fit_from_scratch(self, live_session):
        t1, t2 = live_session.candidates[0].term, live_session.candidates[1].term
        live_session.apply_feedback(t1, 0.9)
        entry = live_session.apply_feedback(t2, 0.1)
        live_session.delete_feedback(entry.entry_id)
        fresh = fit(live_session.build_fit_request())
        assert np.allclose(live_session.posterior.phi_mean, fresh.phi_mean, atol=1e-10)
        assert np.allclose(live_session.posterior.phi_cov, fresh.phi_cov, atol=1e-10)

    def test_unknown_entry_raises(self, live_session):
        with pytest.raises(NotFoundError):
            live_session.delete_feedback("e99999")
        with pytest.raises(NotFoundError):
            live_session.lock_feedback("e99999")


class TestRecencyWindow:
    def test_most_recent_fit_as_locked(self):
        state = doc_mode_session(n_entries=4)
        request = state.build_fit_request()
        newest = max(state.timeline, key=lambda e: e.created_at)
        modes = {o.id: o.weight_mode for o in request.observations}
        assert modes[newest.entry_id] is WeightMode.LOCKED
        older = [o for o in request.observations if o.id != newest.entry_id]
        assert all(o.weight_mode is WeightMode.FREE for o in older)

    def test_most_recent_never_highlighted(self):
        state = doc_mode_session(n_entries=4)
        newest = max(state.timeline, key=lambda e: e.created_at)
        levels = dict(state.compute_highlights())
        assert levels[newest.entry_id] is HighlightLevel.NONE

    def test_window_configurable(self):
        state = doc_mode_session(n_entries=5, recency_window=3)
        request = state.build_fit_request()
        locked = [o.id for o in request.observations if o.weight_mode is WeightMode.LOCKED]
        assert len(locked) == 3


class TestReplayEquivalence:
    def test_random_operation_sequences(self, corpus, common_query_term):
        rng = np.random.default_rng(17)
        for trial in range(8):
            state = SessionState("s", corpus=corpus, rng_seed=trial, slice_k=25)
            state.bootstrap_from_query(common_query_term)
            for _ in range(12):
                op = rng.choice(["feedback", "lock", "delete", "adjust"])
                live = [e for e in state.timeline if e.weight_mode is not WeightMode.DELETED]
                if op == "feedback" or not live:
                    term = state.candidates[int(rng.integers(len(state.candidates)))].term
                    state.apply_feedback(term, float(rng.random()))
                elif op == "adjust":
                    entry = live[int(rng.integers(len(live)))]
                    state.apply_feedback(entry.term, float(rng.random()))
                elif op == "lock":
                    entry = live[int(rng.integers(len(live)))]
                    state.lock_feedback(entry.entry_id)
                else:
                    entry = live[int(rng.integers(len(live)))]
                    state.delete_feedback(entry.entry_id)
                fresh = fit(state.build_fit_request())
                assert np.allclose(state.posterior.phi_mean, fresh.phi_mean, atol=1e-10)
                assert np.allclose(state.posterior.phi_cov, fresh.phi_cov, atol=1e-10)
                assert state.posterior.sigma2_scale == fresh.sigma2_scale


class TestHighlightSelection:
    def test_unique_argmin_selected(self):
        state = doc_mode_session(n_entries=1, dim=1)
        # Hand-placed weights via identical features and one contradiction.
        state = SessionState("s", hyper=SIMULATION, model_kind=ModelKind.ARD,
                             rng_seed=0, auto_refit=False)
        for i, value in enumerate([0.9, 0.9, 0.9, 0.9, 0.0, 0.9]):
            state.append_entry(f"d{i}", value, FeedbackSource.SIMULATED,
                               features=np.array([1.0]))
        state.refresh()
        rng = np.random.default_rng(0)
        weights = state.posterior.expected_weights()
        eligible = [e for e in state.timeline[:-1]]  # last is recency-locked
        argmin = min(eligible, key=lambda e: weights.get(e.entry_id, 1.0))
        assert argmin.term == "d4"
        for _ in range(10):
            assert state.select_highlight_for_simulation(HighlightPolicy.LOWEST_WEIGHT, rng) == argmin.entry_id

    def test_equal_weights_uniform_tiebreak(self):
        state = SessionState("s", hyper=SIMULATION, model_kind=ModelKind.ARD,
                             rng_seed=0, auto_refit=False)
        for i in range(5):
            state.append_entry(f"d{i}", 0.8, FeedbackSource.SIMULATED,
                               features=np.array([1.0]))
        state.refresh()
        rng = np.random.default_rng(123)
        n_eligible = 4  # newest entry sits in the recency window
        trials = 100_000
        counts = {}
        for _ in range(trials):
            eid = state.select_highlight_for_simulation(HighlightPolicy.LOWEST_WEIGHT, rng)
            counts[eid] = counts.get(eid, 0) + 1
        assert len(counts) == n_eligible
        p = 1.0 / n_eligible
        bound = 3 * np.sqrt(p * (1 - p) / trials)
        for count in counts.values():
            assert abs(count / trials - p) < bound

    def test_oracle_with_all_correct_returns_none(self):
        state = SessionState("s", hyper=SIMULATION, model_kind=ModelKind.LG,
                             rng_seed=0, auto_refit=False)
        for i in range(4):
            state.append_entry(f"d{i}", 1.0, FeedbackSource.SIMULATED,
                               features=np.array([1.0]), truth=1.0)
        state.refresh()
        rng = np.random.default_rng(0)
        assert state.select_highlight_for_simulation(HighlightPolicy.ORACLE_TRUTH, rng) is None

    def test_oracle_picks_disagreeing_entry(self):
        state = SessionState("s", hyper=SIMULATION, model_kind=ModelKind.LG,
                             rng_seed=0, auto_refit=False)
        for i, (value, truth) in enumerate([(1.0, 1.0), (0.0, 1.0), (1.0, 1.0), (1.0, 1.0)]):
            state.append_entry(f"d{i}", value, FeedbackSource.SIMULATED,
                               features=np.array([1.0]), truth=truth)
        state.refresh()
        rng = np.random.default_rng(0)
        chosen = state.select_highlight_for_simulation(HighlightPolicy.ORACLE_TRUTH, rng)
        assert state._find_entry(chosen).term == "d1"

    def test_never_selects_locked_or_deleted(self):
        rng = np.random.default_rng(31)
        for trial in range(10):
            state = SessionState("s", hyper=SIMULATION, model_kind=ModelKind.ARD,
                                 rng_seed=trial, auto_refit=False)
            for i in range(6):
                state.append_entry(f"d{i}", float(rng.random()), FeedbackSource.SIMULATED,
                                   features=np.array([1.0]))
            state.lock_feedback(state.timeline[0].entry_id)
            state.delete_feedback(state.timeline[1].entry_id)
            state.refresh()
            for _ in range(50):
                eid = state.select_highlight_for_simulation(HighlightPolicy.LOWEST_WEIGHT, rng)
                entry = state._find_entry(eid)
                assert entry.weight_mode is WeightMode.FREE
            for _ in range(50):
                eid = state.select_highlight_for_simulation(HighlightPolicy.UNIFORM_RANDOM, rng)
                assert state._find_entry(eid).weight_mode is WeightMode.FREE


class TestArchive:
    def test_dedup_keeps_last_value(self):
        state = SessionState("s", auto_refit=False)
        state.append_entry("a", 0.3, FeedbackSource.SIMULATED, features=np.array([1.0]))
        state.append_entry("b", 0.5, FeedbackSource.SIMULATED, features=np.array([1.0]))
        state.append_entry("a", 0.9, FeedbackSource.SIMULATED, features=np.array([1.0]))
        assert state.archive_session() == [("a", 0.9), ("b", 0.5)]

    def test_empty_session_archives_nothing(self):
        assert SessionState("s", auto_refit=False).archive_session() == []

    def test_deleted_entries_not_archived(self):
        state = SessionState("s", auto_refit=False)
        entry = state.append_entry("a", 0.3, FeedbackSource.SIMULATED, features=np.array([1.0]))
        state.append_entry("b", 0.5, FeedbackSource.SIMULATED, features=np.array([1.0]))
        state.refresh()
        state.delete_feedback(entry.entry_id)
        assert state.archive_session() == [("b", 0.5)]

    def test_feedback_to_archived_term(self, corpus, common_query_term, live_session):
        # Give feedback on a keyword the next session's bootstrap won't
        # produce by itself, then carry it over through the archive.
        bootstrap_terms = {e.term for e in live_session.timeline}
        extra = next(c.term for c in live_session.candidates if c.term not in bootstrap_terms)
        live_session.apply_feedback(extra, 0.6)
        archived = live_session.archive_session()

        new_session = SessionState("s2", corpus=corpus, rng_seed=9, slice_k=40)
        new_session.attach_archive(live_session.session_id, archived)
        new_session.bootstrap_from_query(common_query_term)
        assert all(e.term != extra for e in new_session.timeline)
        entry = new_session.apply_feedback(extra, 0.7, FeedbackSource.ARCHIVED_SESSION)
        assert entry.source is FeedbackSource.ARCHIVED_SESSION
        assert any(e.term == extra for e in new_session.timeline)

    def test_remove_archive(self, live_session):
        live_session.attach_archive("old", [("kw", 1.0)])
        live_session.remove_archive("old")
        assert live_session.archived == []
        with pytest.raises(NotFoundError):
            live_session.remove_archive("old")


class TestDisplayOrderAndSnapshot:
    def test_display_is_reverse_chronological(self, live_session):
        terms = [c.term for c in live_session.candidates[:4]]
        for i, term in enumerate(terms):
            live_session.apply_feedback(term, 0.5 + 0.1 * i)
        display = live_session.timeline_display_order()
        stamps = [e.created_at for e in display]
        assert stamps == sorted(stamps, reverse=True)
        assert sorted(e.entry_id for e in display) == sorted(e.entry_id for e in live_session.timeline)

    def test_snapshot_round_trip(self, corpus, live_session):
        live_session.apply_feedback(live_session.candidates[0].term, 0.9)
        entry = live_session.apply_feedback(live_session.candidates[1].term, 0.2)
        live_session.lock_feedback(entry.entry_id)
        snapshot = live_session.to_snapshot()
        restored = SessionState.from_snapshot(snapshot, corpus=corpus)
        assert [e.term for e in restored.timeline] == [e.term for e in live_session.timeline]
        assert [e.value for e in restored.timeline] == [e.value for e in live_session.timeline]
        assert [e.weight_mode for e in restored.timeline] == [
            e.weight_mode for e in live_session.timeline
        ]
        assert np.array_equal(restored.posterior.phi_mean, live_session.posterior.phi_mean)
        assert restored.current_slice.doc_ids == live_session.current_slice.doc_ids
        assert [c.term for c in restored.top_keywords()] == [
            c.term for c in live_session.top_keywords()
        ]
