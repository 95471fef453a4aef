"""HTTP API: bootstrap, mutations, read-your-writes, archives, persistence."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from driftsearch.service import ServiceSettings, create_app


@pytest.fixture()
def app_client(corpus, tmp_path):
    settings = ServiceSettings(data_dir=str(tmp_path / "data"), slice_k=40)
    app = create_app(settings, corpus=corpus)
    with TestClient(app) as client:
        yield client


@pytest.fixture()
def session_view(app_client, common_query_term):
    response = app_client.post("/sessions", json={"query": common_query_term})
    assert response.status_code == 200
    return response.json()


class TestCreateSession:
    def test_bootstrap_shape(self, session_view):
        assert len(session_view["documents"]) == 10
        assert 1 <= len(session_view["keywords"]) <= 10
        assert len(session_view["timeline"]) >= 1
        assert all(e["source"] == "pseudo_feedback" for e in session_view["timeline"])

    def test_empty_query_400(self, app_client):
        assert app_client.post("/sessions", json={"query": "   "}).status_code == 400

    def test_no_results_payload_and_no_leak(self, app_client):
        response = app_client.post("/sessions", json={"query": "zzznotaword"})
        assert response.status_code == 404
        assert response.json()["error"] == "no_results"
        store = app_client.app.state.store
        assert store.sessions == {}

    def test_pseudo_feedback_values_proportional(self, session_view):
        values = [e["value"] for e in session_view["timeline"]]
        assert max(values) == 1.0
        assert all(0 < v <= 1.0 for v in values)


class TestMutationsRoundTrip:
    def test_feedback_updates_view_and_get_agrees(self, app_client, session_view):
        sid = session_view["session_id"]
        term = session_view["keywords"][0]["term"]
        post_view = app_client.post(f"/sessions/{sid}/feedback",
                                    json={"term": term, "value": 0.7}).json()
        entry = next(e for e in post_view["timeline"] if e["term"] == term)
        assert entry["value"] == 0.7
        shown = next((k for k in post_view["keywords"] if k["term"] == term), None)
        if shown is not None:
            expected = 0.5 * (min(1.0, max(0.0, shown["estimated_relevance"])) + 0.7)
            assert shown["displayed_relevance"] == pytest.approx(expected, abs=1e-9)
        assert app_client.get(f"/sessions/{sid}").json() == post_view

    def test_lock_clears_highlight_and_flags(self, app_client, session_view):
        sid = session_view["session_id"]
        entry_id = session_view["timeline"][0]["entry_id"]
        view = app_client.post(f"/sessions/{sid}/lock", json={"entry_id": entry_id}).json()
        entry = next(e for e in view["timeline"] if e["entry_id"] == entry_id)
        assert entry["locked"] is True
        assert entry["highlight"] == "none"

    def test_delete_entry(self, app_client, session_view):
        sid = session_view["session_id"]
        entry_id = session_view["timeline"][0]["entry_id"]
        view = app_client.delete(f"/sessions/{sid}/feedback/{entry_id}").json()
        entry = next(e for e in view["timeline"] if e["entry_id"] == entry_id)
        assert entry["deleted"] is True

    def test_delete_all_yields_prior_tiebreak_ranking(self, app_client, corpus, session_view):
        sid = session_view["session_id"]
        view = session_view
        for entry in list(view["timeline"]):
            view = app_client.delete(f"/sessions/{sid}/feedback/{entry['entry_id']}").json()
        shown = [d["doc_id"] for d in view["documents"]]
        assert shown == sorted(corpus.doc_ids)[:10]
        assert all(d["score"] == 0.0 for d in view["documents"])

    def test_unknown_session_and_entry_404(self, app_client, session_view):
        sid = session_view["session_id"]
        assert app_client.get("/sessions/nope").status_code == 404
        assert app_client.post("/sessions/nope/feedback",
                               json={"term": "x", "value": 0.5}).status_code == 404
        assert app_client.post(f"/sessions/{sid}/lock",
                               json={"entry_id": "e99999"}).status_code == 404
        assert app_client.delete(f"/sessions/{sid}/feedback/e99999").status_code == 404

    def test_invalid_value_422(self, app_client, session_view):
        sid = session_view["session_id"]
        term = session_view["keywords"][0]["term"]
        response = app_client.post(f"/sessions/{sid}/feedback",
                                   json={"term": term, "value": 1.2})
        assert response.status_code == 422

    def test_unknown_term_404(self, app_client, session_view):
        sid = session_view["session_id"]
        response = app_client.post(f"/sessions/{sid}/feedback",
                                   json={"term": "zzznotaword", "value": 0.5})
        assert response.status_code == 404


class TestArchiveEndpoints:
    def test_archive_lists_distinct_terms(self, app_client, session_view):
        sid = session_view["session_id"]
        term = session_view["keywords"][0]["term"]
        app_client.post(f"/sessions/{sid}/feedback", json={"term": term, "value": 0.9})
        archive = app_client.get(f"/sessions/{sid}/archive").json()
        terms = [k["term"] for k in archive["keywords"]]
        assert len(terms) == len(set(terms))
        assert term in terms
        looked_up = {k["term"]: k["value"] for k in archive["keywords"]}
        assert looked_up[term] == 0.9

    def test_import_archive_into_new_session(self, app_client, session_view, common_query_term):
        old_sid = session_view["session_id"]
        response = app_client.post(
            "/sessions", json={"query": common_query_term, "import_archive": [old_sid]}
        )
        view = response.json()
        assert view["archived"][0]["source_session_id"] == old_sid
        archived_terms = [k["term"] for k in view["archived"][0]["keywords"]]
        assert archived_terms
        feedback = app_client.post(
            f"/sessions/{view['session_id']}/feedback",
            json={"term": archived_terms[0], "value": 0.8},
        ).json()
        assert any(e["term"] == archived_terms[0] for e in feedback["timeline"])

    def test_import_unknown_archive_404(self, app_client, common_query_term):
        response = app_client.post(
            "/sessions", json={"query": common_query_term, "import_archive": ["missing"]}
        )
        assert response.status_code == 404

    def test_remove_archived_list(self, app_client, session_view, common_query_term):
        old_sid = session_view["session_id"]
        view = app_client.post(
            "/sessions", json={"query": common_query_term, "import_archive": [old_sid]}
        ).json()
        sid = view["session_id"]
        after = app_client.delete(f"/sessions/{sid}/archive/{old_sid}").json()
        assert after["archived"] == []
        assert app_client.get(f"/sessions/{sid}").json()["archived"] == []

    def test_archive_survives_eviction(self, app_client, session_view):
        sid = session_view["session_id"]
        store = app_client.app.state.store
        store.settings.session_ttl_seconds = 0.0
        store.evict_idle()
        assert store.sessions == {}
        archive = app_client.get(f"/sessions/{sid}/archive")
        assert archive.status_code == 200
        assert archive.json()["keywords"]


class TestDocumentsAndHealth:
    def test_document_detail(self, app_client, corpus):
        doc_id = corpus.doc_ids[0]
        body = app_client.get(f"/documents/{doc_id}").json()
        assert body["doc_id"] == doc_id
        assert body["text"]

    def test_unknown_document_404(self, app_client):
        assert app_client.get("/documents/missing/doc.txt").status_code == 404

    def test_healthz(self, app_client, corpus):
        body = app_client.get("/healthz").json()
        assert body["documents"] == len(corpus.doc_ids)


class TestPersistence:
    def test_operation_log_format(self, app_client, session_view, tmp_path):
        sid = session_view["session_id"]
        term = session_view["keywords"][0]["term"]
        app_client.post(f"/sessions/{sid}/feedback", json={"term": term, "value": 0.4})
        store = app_client.app.state.store
        log_path = store.dir / f"{sid}.log"
        records = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert [r["seq"] for r in records] == list(range(1, len(records) + 1))
        assert all({"seq", "op", "payload", "timestamp"} <= set(r) for r in records)
        assert records[0]["op"] == "create"
        assert records[-1] == {
            "seq": records[-1]["seq"],
            "op": "feedback",
            "payload": {"term": term, "value": 0.4},
            "timestamp": records[-1]["timestamp"],
        }

    def test_snapshot_restores_identical_view(self, app_client, session_view):
        sid = session_view["session_id"]
        term = session_view["keywords"][0]["term"]
        view = app_client.post(f"/sessions/{sid}/feedback",
                               json={"term": term, "value": 0.4}).json()
        store = app_client.app.state.store
        store.sessions.clear()  # simulate restart; snapshot reload on GET
        assert app_client.get(f"/sessions/{sid}").json() == view

    def test_replaying_operation_log_reproduces_responses(self, corpus, tmp_path,
                                                          common_query_term):
        settings = ServiceSettings(data_dir=str(tmp_path / "a"), slice_k=40)
        with TestClient(create_app(settings, corpus=corpus)) as client:
            view = client.post("/sessions", json={"query": common_query_term}).json()
            sid = view["session_id"]
            term = view["keywords"][0]["term"]
            r1 = client.post(f"/sessions/{sid}/feedback", json={"term": term, "value": 0.4}).json()
            entry_id = r1["timeline"][0]["entry_id"]
            r2 = client.post(f"/sessions/{sid}/lock", json={"entry_id": entry_id}).json()
            log = (client.app.state.store.dir / f"{sid}.log").read_text()

        # Re-drive a fresh service instance from the recorded log; session
        # ids differ but the observable state sequence must match.
        records = [json.loads(line) for line in log.splitlines()]
        settings2 = ServiceSettings(data_dir=str(tmp_path / "b"), slice_k=40)
        with TestClient(create_app(settings2, corpus=corpus)) as client2:
            replay_view = None
            sid2 = None
            id_map = {}
            for record in records:
                op, payload = record["op"], record["payload"]
                if op == "create":
                    replay_view = client2.post(
                        "/sessions",
                        json={"query": payload["query"], "rng_seed": payload["rng_seed"]},
                    ).json()
                    sid2 = replay_view["session_id"]
                elif op == "feedback":
                    replay_view = client2.post(f"/sessions/{sid2}/feedback", json=payload).json()
                elif op == "lock":
                    mapped = id_map.get(payload["entry_id"], payload["entry_id"])
                    replay_view = client2.post(f"/sessions/{sid2}/lock",
                                               json={"entry_id": mapped}).json()

            def normalize(view):
                out = dict(view)
                out.pop("session_id")
                return out

            assert normalize(replay_view) == normalize(r2)


class TestReadYourWritesRandomized:
    def test_randomized_sequences(self, corpus, tmp_path, common_query_term):
        # Compact version of the acceptance sweep: random mutations, each
        # response must equal an immediate GET.
        settings = ServiceSettings(data_dir=str(tmp_path / "rw"), slice_k=25)
        rng = np.random.default_rng(0)
        with TestClient(create_app(settings, corpus=corpus)) as client:
            for _ in range(10):
                view = client.post("/sessions", json={"query": common_query_term}).json()
                sid = view["session_id"]
                for _ in range(6):
                    view = self.random_mutation(client, sid, view, rng)
                    assert client.get(f"/sessions/{sid}").json() == view

    @staticmethod
    def random_mutation(client, sid, view, rng):
        ops = ["feedback", "lock", "delete"]
        live = [e for e in view["timeline"] if not e["deleted"]]
        op = ops[int(rng.integers(len(ops)))] if live else "feedback"
        if op == "feedback":
            pool = view["keywords"] or [{"term": e["term"]} for e in live]
            term = pool[int(rng.integers(len(pool)))]["term"]
            response = client.post(f"/sessions/{sid}/feedback",
                                   json={"term": term, "value": float(rng.random())})
        elif op == "lock":
            entry = live[int(rng.integers(len(live)))]
            response = client.post(f"/sessions/{sid}/lock",
                                   json={"entry_id": entry["entry_id"]})
        else:
            entry = live[int(rng.integers(len(live)))]
            response = client.delete(f"/sessions/{sid}/feedback/{entry['entry_id']}")
        assert response.status_code == 200
        return response.json()
