"""Service tests over a live threaded server."""

import json
import threading
import urllib.request

import numpy as np
import pytest

from bldc import datapipe, env, service, worldgen
from bldc.blindfold import BlindfoldSpec
from bldc.experts import demonstrate


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("service-data")
    split = worldgen.generate_split("maze", 9, 9, m_train=3, m_test=2,
                                    split_seed=11)
    split.save(data_dir / "demo.split")
    srv = service.make_server("127.0.0.1", 0, data_dir)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base, data_dir, split
    srv.shutdown()


def call(base, path, body=None, method=None):
    if body is not None:
        req = urllib.request.Request(base + path,
                                     data=json.dumps(body).encode(),
                                     headers={"Content-Type": "application/json"},
                                     method=method or "POST")
    else:
        req = urllib.request.Request(base + path, method=method or "GET")
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def obs_array(payload):
    o = payload["observation"]
    return np.array(o["data"]).reshape(o["channels"], o["height"], o["width"])


def test_healthz(server):
    base, _, _ = server
    status, body = call(base, "/healthz")
    assert status == 200 and body["status"] == "ok"


def test_create_session_initial_state(server):
    base, _, split = server
    status, body = call(base, "/sessions", {
        "split": "demo.split", "participant": "p1",
        "blindfold": {"kind": "none"}})
    assert status == 200
    assert body["level_index"] == 0
    assert body["level_count"] == 3
    assert body["step"] == 0
    assert body["action_count"] == 4
    # blindfold none: observation equals the unmasked render
    state, obs = env.reset(split.train[0])
    assert np.allclose(obs_array(body), obs)


def test_two_sessions_distinct_ids(server):
    base, _, _ = server
    _, a = call(base, "/sessions", {"split": "demo.split",
                                    "blindfold": {"kind": "none"}})
    _, b = call(base, "/sessions", {"split": "demo.split",
                                    "blindfold": {"kind": "none"}})
    assert a["session_id"] != b["session_id"]


def test_unknown_split_404(server):
    base, _, _ = server
    status, body = call(base, "/sessions", {"split": "missing",
                                            "blindfold": {"kind": "none"}})
    assert status == 404


def test_unknown_session_404(server):
    base, _, _ = server
    status, _ = call(base, "/sessions/deadbeef/state")
    assert status == 404
    status, _ = call(base, "/sessions/deadbeef/action", {"action": 0})
    assert status == 404


def test_invalid_action_rejected(server):
    base, _, _ = server
    _, created = call(base, "/sessions", {"split": "demo.split",
                                          "blindfold": {"kind": "none"}})
    sid = created["session_id"]
    status, _ = call(base, f"/sessions/{sid}/action", {"action": 11})
    assert status == 400
    status, _ = call(base, f"/sessions/{sid}/action", {"action": "up"})
    assert status == 400


def test_wall_bump_view_and_counter(server):
    base, _, split = server
    _, created = call(base, "/sessions", {"split": "demo.split",
                                          "blindfold": {"kind": "none"}})
    sid = created["session_id"]
    before = obs_array(created)
    status, after = call(base, f"/sessions/{sid}/action", {"action": 0})  # up: wall
    assert status == 200
    assert after["step"] == 1 and after["reward"] == 0.0
    assert np.allclose(obs_array(after), before)  # same view, step moved


def test_fov_sessions_never_leak_beyond_radius(server):
    base, _, split = server
    radius = 1
    _, created = call(base, "/sessions", {
        "split": "demo.split", "blindfold": {"kind": "fov", "radius": radius}})
    sid = created["session_id"]
    task = split.train[0]
    informed = demonstrate(task, "informed")
    payload = created
    agent = task.start
    for action in informed.actions:
        obs = obs_array(payload)
        sentinel = obs[-1]
        rows = np.abs(np.arange(task.height) - agent[0])
        cols = np.abs(np.arange(task.width) - agent[1])
        far = np.maximum(rows[:, None], cols[None, :]) > radius
        assert np.array_equal(sentinel.astype(bool), far)
        assert obs[:-1][:, far].sum() == 0.0
        status, payload = call(base, f"/sessions/{sid}/action",
                               {"action": int(action)})
        assert status == 200
        if payload["level_advanced"]:
            break
        flat = int(np.argmax(obs_array(payload)[2]))
        agent = (flat // task.width, flat % task.width)


def test_full_session_persists_replayable_trajectories(server):
    base, data_dir, split = server
    _, created = call(base, "/sessions", {
        "split": "demo.split", "participant": "replayer",
        "blindfold": {"kind": "fov", "radius": 2}})
    sid = created["session_id"]
    for level, task in enumerate(split.train):
        informed = demonstrate(task, "informed")
        for action in informed.actions:
            status, payload = call(base, f"/sessions/{sid}/action",
                                   {"action": int(action)})
            assert status == 200
        assert payload["level_advanced"]
        assert payload["success"]
    assert payload["session_complete"]
    # session rejects further actions
    status, _ = call(base, f"/sessions/{sid}/action", {"action": 0})
    assert status == 409
    # persisted file replays bit-exactly
    ds = datapipe.load(data_dir / f"session_{sid}.bldc")
    assert len(ds.trajectories) == 3
    for task, traj in zip(split.train, ds.trajectories):
        assert traj.expert_kind == "human"
        assert traj.success
        assert datapipe.replay_matches(traj, task)
        # stored observations are unmasked full renders
        assert traj.observations.shape[1] == env.observation_channels("maze")


def test_progress_endpoint(server):
    base, _, split = server
    _, created = call(base, "/sessions", {"split": "demo.split",
                                          "blindfold": {"kind": "none"}})
    sid = created["session_id"]
    status, prog = call(base, f"/sessions/{sid}/state")
    assert status == 200
    assert prog["levels_done"] == 0 and not prog["complete"]
    task = split.train[0]
    for action in demonstrate(task, "informed").actions:
        call(base, f"/sessions/{sid}/action", {"action": int(action)})
    status, prog = call(base, f"/sessions/{sid}/state")
    assert prog["levels_done"] == 1
    assert prog["per_level_steps"] == [demonstrate(task, "informed").steps]
