import json

import pytest
from fastapi.testclient import TestClient

from belieftrack.service.app import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture(scope="module")
def synth_world(client, tmp_path_factory):
    """Generated ontology + corpora + a small trained model, shared."""
    root = tmp_path_factory.mktemp("svc")
    corpus = str(root / "train.json")
    test_corpus = str(root / "test.json")
    ontology = str(root / "ontology.json")
    model = str(root / "model.json")

    resp = client.post(
        "/synthesize",
        json={
            "out_path": corpus,
            "ontology_out": ontology,
            "n_dialogues": 30,
            "turns_per_dialogue": 5,
            "n_slots": 2,
            "values_per_slot": 3,
            "seed": 11,
        },
    )
    assert resp.status_code == 200, resp.text
    resp = client.post(
        "/synthesize",
        json={
            "out_path": test_corpus,
            "ontology_path": ontology,
            "n_dialogues": 10,
            "turns_per_dialogue": 5,
            "seed": 12,
        },
    )
    assert resp.status_code == 200, resp.text

    resp = client.post(
        "/train",
        json={
            "corpus_path": corpus,
            "ontology_path": ontology,
            "model_out": model,
            "config": {
                "epochs": 4,
                "batch_size": 64,
                "dropout_rate": 0.0,
                "learning_rate": 5e-3,
                "mechanism": "constrained",
                "embedding_dim": 8,
                "seed": 0,
            },
        },
    )
    assert resp.status_code == 200, resp.text
    return {
        "corpus": corpus,
        "test_corpus": test_corpus,
        "ontology": ontology,
        "model": model,
        "train_response": resp.json(),
    }


class TestHealth:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"


class TestSynthesize:
    def test_writes_corpus_sidecar_and_ontology(self, synth_world):
        with open(synth_world["corpus"]) as handle:
            corpus = json.load(handle)
        assert len(corpus) == 30
        with open(synth_world["corpus"] + ".dynamics.json") as handle:
            sidecar = json.load(handle)
        assert sidecar["seed"] == 11
        with open(synth_world["ontology"]) as handle:
            onto = json.load(handle)
        assert set(onto["informable"]) == {"slot0", "slot1"}

    def test_generated_ontology_requires_out_path(self, client, tmp_path):
        resp = client.post(
            "/synthesize", json={"out_path": str(tmp_path / "c.json")}
        )
        assert resp.status_code == 400
        assert "ontology_out" in resp.json()["detail"]


class TestTrain:
    def test_response_shape(self, synth_world):
        body = synth_world["train_response"]
        assert body["epochs_run"] == 4
        assert body["best_epoch"] >= 1
        assert body["n_train_dialogues"] + body["n_val_dialogues"] == 30
        assert body["model_path"] == synth_world["model"]

    def test_log_file_has_one_line_per_epoch(self, synth_world):
        with open(synth_world["train_response"]["log_path"]) as handle:
            lines = [l for l in handle.read().splitlines() if l]
        assert len(lines) == 4
        fields = lines[0].split("\t")
        assert len(fields) == 5

    def test_missing_corpus_is_client_error(self, client, synth_world, tmp_path):
        resp = client.post(
            "/train",
            json={
                "corpus_path": str(tmp_path / "missing.json"),
                "ontology_path": synth_world["ontology"],
                "model_out": str(tmp_path / "m.json"),
            },
        )
        assert resp.status_code == 400
        assert "missing.json" in resp.json()["detail"]

    def test_invalid_config_rejected_by_schema(self, client, synth_world, tmp_path):
        resp = client.post(
            "/train",
            json={
                "corpus_path": synth_world["corpus"],
                "ontology_path": synth_world["ontology"],
                "model_out": str(tmp_path / "m.json"),
                "config": {"batch_size": 0},
            },
        )
        assert resp.status_code == 422  # pydantic validation


class TestEvaluate:
    def test_report_fields(self, client, synth_world):
        resp = client.post(
            "/evaluate",
            json={
                "model_path": synth_world["model"],
                "corpus_path": synth_world["test_corpus"],
            },
        )
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert 0.0 <= body["joint_goal_accuracy"] <= 1.0
        assert set(body["per_slot_accuracy"]) == {"slot0", "slot1"}
        assert body["mechanism"] == "constrained"
        assert isinstance(body["errors"], list)

    def test_report_is_valid_json_roundtrip(self, client, synth_world):
        resp = client.post(
            "/evaluate",
            json={
                "model_path": synth_world["model"],
                "corpus_path": synth_world["test_corpus"],
            },
        )
        assert json.loads(resp.text)["n_dialogues"] == 10

    def test_ontology_mismatch_rejected(self, client, synth_world, tmp_path):
        other = tmp_path / "other_onto.json"
        other.write_text(json.dumps({"informable": {"food": ["x"]}, "requestable": []}))
        resp = client.post(
            "/evaluate",
            json={
                "model_path": synth_world["model"],
                "corpus_path": synth_world["test_corpus"],
                "ontology_path": str(other),
            },
        )
        assert resp.status_code == 400
        assert "mismatch" in resp.json()["detail"]

    def test_corpus_outside_model_ontology_rejected(self, client, synth_world, tmp_path):
        alien = [
            {
                "dialogue_idx": "x",
                "dialogue": [
                    {"transcript": "hi", "system_acts": [], "turn_label": [["food", "thai"]]}
                ],
            }
        ]
        path = tmp_path / "alien.json"
        path.write_text(json.dumps(alien))
        resp = client.post(
            "/evaluate",
            json={"model_path": synth_world["model"], "corpus_path": str(path)},
        )
        assert resp.status_code == 400
        assert "mismatch" in resp.json()["detail"]


class TestGradcheckEndpoint:
    def test_passes_on_fresh_model(self, client):
        resp = client.post(
            "/gradcheck",
            json={"mechanism": "constrained", "dimension": 6, "n_examples": 8},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["passed"] is True
        assert body["max_relative_error"] < 1e-4


class TestCompareEndpoint:
    def test_two_mechanism_comparison(self, client, synth_world):
        resp = client.post(
            "/compare",
            json={
                "train_corpus_path": synth_world["corpus"],
                "test_corpus_path": synth_world["test_corpus"],
                "ontology_path": synth_world["ontology"],
                "mechanisms": ["rule", "constrained"],
                "seeds": [0],
                "config": {
                    "epochs": 2,
                    "dropout_rate": 0.0,
                    "learning_rate": 5e-3,
                    "embedding_dim": 8,
                },
            },
        )
        assert resp.status_code == 200, resp.text
        rows = resp.json()["rows"]
        assert [r["mechanism"] for r in rows] == ["rule", "constrained"]
        assert rows[0]["chosen_lambda"] is not None
        assert rows[1]["chosen_lambda"] is None
        for row in rows:
            assert len(row["per_seed"]) == 1


class TestSessions:
    def test_full_session_flow(self, client, synth_world):
        resp = client.post("/sessions", json={"model_path": synth_world["model"]})
        assert resp.status_code == 200, resp.text
        created = resp.json()
        sid = created["session_id"]
        assert created["mechanism"] == "constrained"
        assert created["state"]["turn_index"] == 0
        assert all(g == "none" for g in created["state"]["goals"].values())

        resp = client.post(
            f"/sessions/{sid}/turn",
            json={"utterance": "i want s0v1 please", "system_acts": []},
        )
        assert resp.status_code == 200
        view = resp.json()
        assert view["turn_index"] == 1
        belief = view["belief"]["slot0"]
        assert abs(sum(belief.values()) - 1.0) < 1e-6

        resp = client.post(
            f"/sessions/{sid}/turn",
            json={
                "utterance": "",
                "system_acts": [{"kind": "confirm", "slot": "slot0", "value": "s0v1"}],
            },
        )
        assert resp.status_code == 200
        assert resp.json()["turn_index"] == 2

        resp = client.post(f"/sessions/{sid}/reset")
        assert resp.status_code == 200
        reset_view = resp.json()
        assert reset_view["turn_index"] == 0
        assert reset_view["belief"] == created["state"]["belief"]

        resp = client.delete(f"/sessions/{sid}")
        assert resp.status_code == 200
        assert client.get(f"/sessions/{sid}").status_code == 404

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404

    def test_bad_system_act_rejected(self, client, synth_world):
        sid = client.post("/sessions", json={"model_path": synth_world["model"]}).json()[
            "session_id"
        ]
        resp = client.post(
            f"/sessions/{sid}/turn",
            json={
                "utterance": "hello",
                "system_acts": [{"kind": "request", "slot": "bogus"}],
            },
        )
        assert resp.status_code == 400

    def test_missing_model_is_client_error(self, client, tmp_path):
        resp = client.post(
            "/sessions", json={"model_path": str(tmp_path / "missing-model.json")}
        )
        assert resp.status_code == 400
