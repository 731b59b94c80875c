import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

import ilsa
from ilsa import GenConfig, PolicyConfig, build_policy_params, cereal_pour
from ilsa.config import AppConfig
from ilsa.service import build_service
from ilsa.trajgen import generate_task_trajectories

SMALL = PolicyConfig(d_model=16, n_heads=2, n_layers=1, ffn_dim=32, mlp_hidden=16)


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    task = cereal_pour()
    params = build_policy_params(SMALL, 2, seed=0)
    pretrain_trajs = generate_task_trajectories(
        task, GenConfig(trajectories_per_task=2, rng_seed=1))
    root = tmp_path_factory.mktemp("sessions")
    from dataclasses import replace
    app_cfg = AppConfig(policy=SMALL, step_budget=40,
                        finetune=replace(AppConfig().finetune, epochs=3))
    app = build_service(task, params, SMALL, app_cfg, pretrain_trajs, root, seed=5)
    return app


def recv(ws):
    return json.loads(ws.receive_text())


def send(ws, kind, payload=None):
    ws.send_text(json.dumps({"kind": kind, "seq": 0, "payload": payload or {}}))


def drive_to_trial_end(ws, max_ticks=400):
    """Send idle inputs in lockstep until TrialComplete arrives."""
    for _ in range(max_ticks):
        send(ws, "UserInput", {"translation": [0.0, 0.0, 0.0]})
        recv(ws)  # GateEvent
        state = recv(ws)  # StateUpdate
        assert state["kind"] == "StateUpdate"
        if state["payload"]["trial_done"]:
            return recv(ws)  # TrialComplete
    raise AssertionError("trial never completed")


class TestEndpoints:
    def test_tasks_endpoint(self, service):
        client = TestClient(service)
        r = client.get("/tasks")
        assert r.status_code == 200
        body = r.json()
        assert body["serving"] == "cereal_pour"
        assert {t["name"] for t in body["tasks"]} == {"cereal_pour", "pill_bottle"}

    def test_unknown_session_metrics(self, service):
        client = TestClient(service)
        r = client.get("/sessions/nope/metrics")
        assert "error" in r.json()


class TestSessionProtocol:
    def test_hello_and_state_on_connect(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            hello = recv(ws)
            assert hello["kind"] == "Hello"
            assert hello["payload"]["task"]["name"] == "cereal_pour"
            assert hello["payload"]["lockstep"] is True
            state = recv(ws)
            assert state["kind"] == "StateUpdate"
            assert len(state["payload"]["ee"]) == 6
            assert len(state["payload"]["objects"]) == 2
            assert state["payload"]["obstacles"]

    def test_second_connection_rejected(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            recv(ws), recv(ws)
            with client.websocket_connect("/session?lockstep=1") as ws2:
                err = recv(ws2)
                assert err["kind"] == "Error"
                assert "busy" in err["payload"]["message"]

    def test_sequence_numbers_strictly_increasing(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            seqs = [recv(ws)["seq"], recv(ws)["seq"]]
            for _ in range(5):
                send(ws, "UserInput", {"translation": [0.5, 0.0, 0.0]})
                seqs.append(recv(ws)["seq"])
                seqs.append(recv(ws)["seq"])
            assert seqs == list(range(len(seqs)))

    def test_tick_advances_state(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            recv(ws)
            s0 = recv(ws)["payload"]
            send(ws, "UserInput", {"translation": [0.0, 0.0, -1.0]})
            gate = recv(ws)
            assert gate["kind"] == "GateEvent"
            s1 = recv(ws)["payload"]
            assert s1["tick"] == s0["tick"] + 1
            assert not np.allclose(s1["ee"], s0["ee"])

    def test_malformed_message_keeps_session_alive(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            recv(ws), recv(ws)
            ws.send_text("this is not json")
            err = recv(ws)
            assert err["kind"] == "Error"
            send(ws, "UserInput", {"translation": [0.0, 0.0, 0.5]})
            assert recv(ws)["kind"] == "GateEvent"

    def test_unsupported_kind_gets_error(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            recv(ws), recv(ws)
            send(ws, "SelfDestruct")
            err = recv(ws)
            assert err["kind"] == "Error"
            assert "SelfDestruct" in err["payload"]["message"]

    def test_finetune_before_trial_end_rejected(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            recv(ws), recv(ws)
            send(ws, "FinetuneRequest")
            err = recv(ws)
            assert err["kind"] == "Error"
            assert "running" in err["payload"]["message"]


class TestTrialFlow:
    def test_trial_completion_finetune_and_advance(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            recv(ws), recv(ws)
            done = drive_to_trial_end(ws)
            assert done["kind"] == "TrialComplete"
            assert done["payload"]["trial"] == 0
            assert done["payload"]["metrics"]["completion_steps"] > 0

            send(ws, "FinetuneRequest")
            progress = [recv(ws) for _ in range(3)]  # epochs=3 in fixture
            assert all(m["kind"] == "FinetuneProgress" for m in progress)
            assert [m["payload"]["epoch"] for m in progress] == [1, 2, 3]
            summary = recv(ws)
            assert summary["kind"] == "MetricsSummary"
            assert summary["payload"]["finetuned"] is True

            # client acknowledges; next trial begins with a fresh Hello
            send(ws, "TrialComplete")
            hello = recv(ws)
            assert hello["kind"] == "Hello"
            assert hello["payload"]["trial"] == 1
            state = recv(ws)
            assert state["kind"] == "StateUpdate"
            assert state["payload"]["trial"] == 1
            assert state["payload"]["tick"] == 0

    def test_session_directory_persisted(self, service):
        client = TestClient(service)
        with client.websocket_connect("/session?lockstep=1") as ws:
            hello = recv(ws)
            sid = hello["payload"]["session_id"]
            recv(ws)
            drive_to_trial_end(ws)
        r = client.get(f"/sessions/{sid}/metrics")
        body = r.json()
        assert body["trials"]
        assert body["trials"][0]["completion_steps"] > 0
