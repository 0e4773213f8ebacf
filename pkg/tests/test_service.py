import time

import numpy as np
import pytest
from starlette.testclient import TestClient

from mazesteer import maze as mz
from mazesteer import service as sv

BATCH = 8


@pytest.fixture(scope="module")
def app(mini_policy, corridors_maze):
    return sv.create_app(
        mini_policy, corridors_maze, tick_hz=200.0, ckpt_hash="deadbeef", default_batch=BATCH
    )


@pytest.fixture(scope="module")
def client(app):
    with TestClient(app) as c:
        yield c


def steer_msg(req_id, kind="point", method="ss", seed=None, **cfg):
    config = {"method": method, "mcmc_steps": 4 if method == "ss" else 1,
              "beta": 40.0 if method in ("gd", "ss") else 0.0, "batch": BATCH, **cfg}
    if seed is not None:
        config["seed"] = seed
    interaction = {
        "point": {"kind": "point", "z": [9.5, 7.5]},
        "sketch": {"kind": "sketch", "points": [[1.5, 1.5], [5.0, 1.5], [9.0, 5.0]]},
        "nudge": {"kind": "nudge", "prefix": [[1.5, 1.5], [1.8, 1.8]]},
    }[kind]
    return {"id": req_id, "type": "steer", "interaction": interaction, "config": config}


def read_until_batch(ws, want_id, allow=("snapshot",)):
    msgs = []
    while True:
        msg = ws.receive_json()
        msgs.append(msg)
        if msg["type"] == "batch" and msg["id"] == want_id:
            return msgs
        assert msg["type"] in allow + ("batch",), f"unexpected {msg}"


class TestHttp:
    def test_health(self, client, mini_policy):
        r = client.get("/health").json()
        assert r["status"] == "ok"
        assert r["checkpoint"] == "deadbeef"
        assert r["horizon"] == mini_policy.horizon

    def test_map_round_trips(self, client, corridors_maze):
        text = client.get("/map").text
        again = mz.load_maze_text(text)
        assert np.array_equal(again.occupancy, corridors_maze.occupancy)

    def test_goals_empty_for_corridors(self, client):
        assert client.get("/goals").json() == []


class TestSteer:
    def test_snapshot_frames_then_final_batch(self, client, mini_policy):
        n_steps = len(mini_policy.schedule.inference_steps)
        with client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("r1", method="ss", seed=5))
            msgs = read_until_batch(ws, "r1")
        snaps = [m for m in msgs if m["type"] == "snapshot"]
        assert len(snaps) == n_steps
        assert all(m["id"] == "r1" for m in msgs)
        batch = msgs[-1]
        assert len(batch["trajectories"]) == BATCH
        assert len(batch["costs"]) == BATCH
        assert len(batch["collisions"]) == BATCH
        assert sorted(batch["ranking"]) == list(range(BATCH))

    def test_nudge_requires_op(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("r2", kind="nudge", method="ss"))
            msg = ws.receive_json()
        assert msg == {
            "id": "r2",
            "type": "error",
            "code": "bad_config",
            "detail": "nudge requires op",
        }

    def test_out_of_bounds_interaction(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(
                {
                    "id": "r3",
                    "type": "steer",
                    "interaction": {"kind": "point", "z": [99.0, 99.0]},
                    "config": {"method": "gd", "beta": 10.0},
                }
            )
            msg = ws.receive_json()
        assert msg["type"] == "error" and msg["code"] == "out_of_bounds"

    def test_rapid_requests_cancel_first(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("old", method="ss", seed=6))
            ws.send_json(steer_msg("new", method="ss", seed=7))
            # the first request may stream a frame or two before the flag is
            # seen at the next step boundary, then must report cancellation
            while True:
                msg = ws.receive_json()
                if msg["id"] == "old" and msg["type"] == "error":
                    assert msg["code"] == "cancelled"
                    break
                assert msg["id"] == "old" and msg["type"] == "snapshot"
            msgs = read_until_batch(ws, "new")
        assert msgs[-1]["id"] == "new"
        assert all(m["id"] == "new" for m in msgs)

    def test_op_steer_round_trip(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(
                {
                    "id": "r4",
                    "type": "steer",
                    "interaction": {"kind": "nudge", "prefix": [[1.5, 1.5], [1.8, 1.8]]},
                    "config": {"method": "op", "batch": BATCH},
                }
            )
            msgs = read_until_batch(ws, "r4")
        batch = msgs[-1]
        for traj in batch["trajectories"]:
            assert traj[0] == [1.5, 1.5]
            assert traj[1] == [1.8, 1.8]


class TestExecute:
    def test_execute_before_steer_errors(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json({"id": "e0", "type": "execute", "index": 0})
            msg = ws.receive_json()
        assert msg["code"] == "no_batch"

    def test_execute_streams_all_ticks(self, client, mini_policy):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("e1", method="pr", seed=8))
            batch = read_until_batch(ws, "e1")[-1]
            ws.send_json({"id": "e2", "type": "execute", "index": batch["executed_index"]})
            ticks = [ws.receive_json() for _ in range(mini_policy.horizon)]
        assert all(t["type"] == "tick" and t["id"] == "e2" for t in ticks)
        assert [t["t"] for t in ticks] == list(range(mini_policy.horizon))
        exe = batch["trajectories"][batch["executed_index"]]
        assert np.allclose([t["state"] for t in ticks], exe)

    def test_bad_index(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("e3", method="pr", seed=9))
            read_until_batch(ws, "e3")
            ws.send_json({"id": "e4", "type": "execute", "index": 99})
            msg = ws.receive_json()
        assert msg["code"] == "bad_index"

    def test_nudge_live_truncates_and_resamples(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("n1", method="pr", seed=10))
            read_until_batch(ws, "n1")
            ws.send_json({"id": "n2", "type": "execute", "index": 0})
            for _ in range(3):
                assert ws.receive_json()["type"] == "tick"
            prefix = [[5.5, 4.5], [5.5, 4.2], [5.5, 3.9]]
            ws.send_json({"id": "n3", "type": "nudge_live", "prefix": prefix})
            # remaining ticks from the old plan may still arrive, then the batch
            while True:
                msg = ws.receive_json()
                if msg["id"] == "n3" and msg["type"] == "batch":
                    break
                assert msg["type"] == "tick"
            for traj in msg["trajectories"]:
                assert np.allclose(traj[:3], prefix)
            after = ws.receive_json()
            assert after["type"] == "tick" and after["id"] == "n3"
            assert after["t"] == 3  # execution resumes after the corrected prefix


class TestDeterminism:
    def script(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json({"id": "s0", "type": "reset", "state": [5.5, 4.5], "seed": 42})
            ws.send_json(steer_msg("s1", kind="sketch", method="gd"))
            batch = read_until_batch(ws, "s1")[-1]
        return batch

    def test_scripted_sessions_identical(self, client):
        a = self.script(client)
        b = self.script(client)
        assert a == b

    def test_response_ids_echo_requests(self, client):
        sent_ids = {"q1", "q2"}
        with client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("q1", method="rs", seed=11))
            msgs = read_until_batch(ws, "q1")
            ws.send_json({"id": "q2", "type": "execute", "index": 0})
            msgs += [ws.receive_json() for _ in range(4)]
        assert {m["id"] for m in msgs} <= sent_ids


class TestCadence:
    def test_tick_rate_within_ten_percent(self, mini_policy, corridors_maze):
        app = sv.create_app(mini_policy, corridors_maze, tick_hz=25.0, default_batch=4)
        with TestClient(app) as client, client.websocket_connect("/ws") as ws:
            ws.send_json(steer_msg("c1", method="rs", seed=12, batch=4))
            read_until_batch(ws, "c1")
            ws.send_json({"id": "c2", "type": "execute", "index": 0})
            stamps = []
            for _ in range(mini_policy.horizon):
                msg = ws.receive_json()
                assert msg["type"] == "tick"
                stamps.append(time.monotonic())
        gaps = np.diff(stamps)
        assert abs(np.median(gaps) - 1 / 25.0) < 0.1 / 25.0
