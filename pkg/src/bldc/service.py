"""Session service for live human demonstrations over HTTP.

Plain request/response JSON endpoints (episodes are turn-based):

    GET  /healthz                    liveness probe
    POST /sessions                   {split, side?, blindfold, participant}
                                     -> {session_id, level_index, level_count,
                                         observation, step, action_count,
                                         family, participant}
    POST /sessions/{id}/action       {action} -> {observation, reward, done,
                                         success, level_advanced, level_index,
                                         step, session_complete}
    GET  /sessions/{id}/state        progress summary

Served observations are masked by the session's blindfold; persisted
trajectories carry the unmasked observations. Each finished episode is
flushed to a dataset file in the data directory (write-ahead: a crash loses
at most the unfinished episode). Observation payloads are row-major channel
arrays: {"channels": C, "height": H, "width": W, "data": [flat floats]}.
"""

from __future__ import annotations

import json
import re
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import datapipe, env
from .blindfold import BlindfoldSpec
from .rng import SplitMix64
from .worldgen import TaskSplit

DATA_DIR_ENV = "BLDC_DATA_DIR"


def encode_observation(obs: np.ndarray) -> dict:
    c, h, w = obs.shape
    return {"channels": c, "height": h, "width": w,
            "data": [round(float(v), 9) for v in obs.reshape(-1)]}


@dataclass
class Session:
    session_id: str
    participant: str
    tasks: list
    blindfold: BlindfoldSpec
    data_path: Path
    rng: SplitMix64
    level_index: int = 0
    state: "env.EnvState" = None
    last_unmasked: np.ndarray = None
    records: list = field(default_factory=list)
    finished: list = field(default_factory=list)  # completed Trajectory objects
    per_level_steps: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def complete(self) -> bool:
        return self.level_index >= len(self.tasks)

    def current_task(self):
        return self.tasks[self.level_index]

    def masked_observation(self) -> np.ndarray:
        return env.render_masked_for_expert(self.state, self.blindfold, self.rng)

    def begin_level(self) -> None:
        self.state, self.last_unmasked = env.reset(self.current_task())
        self.records = []

    def apply_action(self, action: int) -> dict:
        task = self.current_task()
        state, result = env.step(self.state, action)
        self.records.append((self.last_unmasked, action, result.reward,
                             result.done))
        self.state = state
        self.last_unmasked = result.obs
        payload = {
            "reward": result.reward,
            "done": result.done,
            "success": result.success,
            "level_advanced": False,
            "level_index": self.level_index,
            "step": state.step,
            "session_complete": False,
        }
        if result.done:
            final_masked = self.masked_observation()
            self._finish_level(result.success)
            payload["level_advanced"] = True
            payload["level_index"] = self.level_index
            payload["session_complete"] = self.complete
            if not self.complete:
                self.begin_level()
            payload["observation"] = encode_observation(
                self.masked_observation() if not self.complete else final_masked)
        else:
            payload["observation"] = encode_observation(self.masked_observation())
        return payload

    def _finish_level(self, success: bool) -> None:
        task = self.current_task()
        obs = np.stack([r[0] for r in self.records])
        traj = datapipe.Trajectory(
            family=task.family, task_seed=task.seed, width=task.width,
            height=task.height, color_count=task.color_count,
            expert_kind="human", blindfold=self.blindfold,
            observations=obs,
            actions=np.array([r[1] for r in self.records], dtype=np.int64),
            rewards=np.array([r[2] for r in self.records]),
            dones=np.array([r[3] for r in self.records], dtype=bool),
            success=success)
        self.finished.append(traj)
        self.per_level_steps.append(traj.steps)
        self.level_index += 1
        dataset = datapipe.Dataset(
            trajectories=self.finished, split_id="",
            extra={"participant": self.participant,
                   "session_id": self.session_id})
        datapipe.save(dataset, self.data_path)

    def progress(self) -> dict:
        summary = {
            "session_id": self.session_id,
            "participant": self.participant,
            "levels_done": len(self.per_level_steps),
            "level_index": min(self.level_index, len(self.tasks)),
            "level_count": len(self.tasks),
            "steps_current": 0 if self.complete else self.state.step,
            "per_level_steps": list(self.per_level_steps),
            "complete": self.complete,
        }
        if not self.complete:
            # masked view included so a refreshed client can resume mid-episode
            summary["observation"] = encode_observation(self.masked_observation())
        return summary


class ServiceState:
    """Shared registry; sessions are mutated under their own locks."""

    def __init__(self, data_dir: Path, splits_dir: Path | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.splits_dir = Path(splits_dir) if splits_dir else self.data_dir
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()

    def resolve_split(self, name: str) -> TaskSplit:
        path = Path(name)
        if not path.exists():
            path = self.splits_dir / name
        if not path.exists():
            path = self.splits_dir / f"{name}.split"
        if not path.exists():
            raise FileNotFoundError(f"unknown split {name!r}")
        return TaskSplit.load(path)

    def create_session(self, body: dict) -> Session:
        split = self.resolve_split(str(body["split"]))
        side = body.get("side", "train")
        if side not in ("train", "test"):
            raise ValueError("side must be train or test")
        tasks = list(split.train if side == "train" else split.test)
        count = body.get("levels")
        if count is not None:
            tasks = tasks[:int(count)]
        if not tasks:
            raise ValueError("split side has no tasks")
        blindfold = BlindfoldSpec.from_json(body.get("blindfold", {}))
        participant = str(body.get("participant", "anonymous"))
        session_id = uuid.uuid4().hex
        session = Session(
            session_id=session_id, participant=participant, tasks=tasks,
            blindfold=blindfold,
            data_path=self.data_dir / f"session_{session_id}.bldc",
            rng=SplitMix64(int.from_bytes(session_id[:8].encode(), "little")))
        session.begin_level()
        with self.registry_lock:
            self.sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self.registry_lock:
            return self.sessions.get(session_id)


class _Handler(BaseHTTPRequestHandler):
    service: ServiceState = None  # injected by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length))

    def do_OPTIONS(self):  # CORS preflight for the browser client
        self._send(200, {})

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, {"status": "ok"})
            return
        match = re.fullmatch(r"/sessions/([0-9a-f]+)/state", self.path)
        if match:
            session = self.service.get(match.group(1))
            if session is None:
                self._send(404, {"error": "unknown session"})
                return
            with session.lock:
                self._send(200, session.progress())
            return
        self._send(404, {"error": "unknown path"})

    def do_POST(self):
        try:
            body = self._body()
        except (ValueError, json.JSONDecodeError):
            self._send(400, {"error": "malformed JSON body"})
            return
        if self.path == "/sessions":
            try:
                session = self.service.create_session(body)
            except FileNotFoundError as e:
                self._send(404, {"error": str(e)})
                return
            except (KeyError, ValueError) as e:
                self._send(400, {"error": f"bad request: {e}"})
                return
            with session.lock:
                self._send(200, {
                    "session_id": session.session_id,
                    "level_index": 0,
                    "level_count": len(session.tasks),
                    "step": 0,
                    "family": session.tasks[0].family,
                    "action_count": env.action_count(session.tasks[0].family),
                    "participant": session.participant,
                    "observation": encode_observation(session.masked_observation()),
                })
            return
        match = re.fullmatch(r"/sessions/([0-9a-f]+)/action", self.path)
        if match:
            session = self.service.get(match.group(1))
            if session is None:
                self._send(404, {"error": "unknown session"})
                return
            with session.lock:
                if session.complete:
                    self._send(409, {"error": "session complete"})
                    return
                action = body.get("action")
                limit = env.action_count(session.current_task().family)
                if not isinstance(action, int) or not 0 <= action < limit:
                    self._send(400, {"error": f"action must be an integer in [0, {limit})"})
                    return
                self._send(200, session.apply_action(action))
            return
        self._send(404, {"error": "unknown path"})


def make_server(bind: str, port: int, data_dir, splits_dir=None) -> ThreadingHTTPServer:
    state = ServiceState(data_dir, splits_dir)
    handler = type("BoundHandler", (_Handler,), {"service": state})
    server = ThreadingHTTPServer((bind, port), handler)
    server.service_state = state
    return server


def serve(bind: str, port: int, data_dir, splits_dir=None) -> None:
    server = make_server(bind, port, data_dir, splits_dir)
    host, actual_port = server.server_address[:2]
    print(f"serving on http://{host}:{actual_port} (data dir: {data_dir})",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
