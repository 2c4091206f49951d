"""WebSocket back-end for demonstration logging and closed-loop inference.

One JSON text frame per message (schema in ``schemas/wire.schema.json``).
A session opens with ``hello`` and is either:

* ``log`` — every ``obs`` is appended to a clip file on disk;
  ``record_mark`` flags the frame it names (``--strict-marks`` persists
  only flagged frames, mirroring a trigger-to-send capture trigger);
* ``infer`` — each ``obs`` feeds the closed-loop controller of a loaded
  model and emitted actions stream back as ``act``; ``set_emotion``
  steers the next replan.

Malformed messages get an ``error`` (BAD_SCHEMA) and close the session;
a sequence-number regression gets an ``error`` (SEQ_ORDER) and the
offending message is dropped, but the session stays usable. Every
outbound message carries the server's own monotonic ``seq`` and receive
timestamp ``t_ms``. A plain HTTP ``GET /status`` on the same port returns
the server status document.
"""

from __future__ import annotations

import json
import threading
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from websockets.sync.server import serve

from .dataset import CLIP_SCHEMA, EMOTIONS, OBS_DIM, EmotionLabel
from .flowgen import FlowMatchingPolicy
from .runtime import Controller

BAD_SCHEMA = "BAD_SCHEMA"
SEQ_ORDER = "SEQ_ORDER"
NO_MODEL = "NO_MODEL"

_VEC_FIELDS = (("head", 6), ("hand_l", 6), ("hand_r", 6), ("face", 7), ("target", 3))


class ProtocolError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def _now_ms() -> int:
    return int(time.time() * 1000)


def _require(cond: bool, detail: str, code: str = BAD_SCHEMA):
    if not cond:
        raise ProtocolError(code, detail)


def _check_base(msg) -> None:
    _require(isinstance(msg, dict), "message must be a JSON object")
    _require(isinstance(msg.get("seq"), int) and msg["seq"] >= 0,
             "message needs an integer 'seq' >= 0")
    _require(isinstance(msg.get("t_ms"), (int, float)) and msg["t_ms"] >= 0,
             "message needs a numeric 't_ms' >= 0")


def _check_vec(msg, key: str, n: int) -> list:
    v = msg.get(key)
    _require(isinstance(v, list) and len(v) == n, f"'{key}' must be a list of {n} numbers")
    _require(all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v),
             f"'{key}' must contain numbers only")
    _require(all(np.isfinite(x) for x in v), f"'{key}' must be finite")
    return v


def validate_message(msg, allowed: dict[str, set]) -> str:
    """Validate one inbound message against the wire contract.

    ``allowed`` maps message type to its full key set; extra or missing
    keys are schema violations (the protocol is schema-closed).
    """
    _check_base(msg)
    mtype = msg.get("type")
    _require(mtype in allowed, f"unknown or unexpected message type {mtype!r}")
    keys = set(msg)
    extra = keys - allowed[mtype]
    _require(not extra, f"unexpected fields for {mtype!r}: {sorted(extra)}")
    if mtype == "hello":
        _require(msg.get("mode") in ("log", "infer"), "hello.mode must be 'log' or 'infer'")
        _require(msg.get("emotion") in EMOTIONS, f"hello.emotion must be one of {EMOTIONS}")
        if "H" in msg:
            _require(isinstance(msg["H"], int) and msg["H"] >= 1, "hello.H must be an integer >= 1")
        if "seed" in msg:
            _require(isinstance(msg["seed"], int), "hello.seed must be an integer")
        if "clip" in msg:
            _require(isinstance(msg["clip"], str) and msg["clip"], "hello.clip must be a string")
        if "model" in msg:
            _require(isinstance(msg["model"], str) and msg["model"], "hello.model must be a string")
    elif mtype == "obs":
        for key, n in _VEC_FIELDS:
            _check_vec(msg, key, n)
    elif mtype == "set_emotion":
        _require(msg.get("emotion") in EMOTIONS, f"emotion must be one of {EMOTIONS}")
    # record_mark has base fields only
    return mtype


_HELLO_KEYS = {"type", "seq", "t_ms", "mode", "emotion", "model", "H", "clip", "seed"}
_LOG_KEYS = {
    "hello": _HELLO_KEYS,
    "obs": {"type", "seq", "t_ms", "head", "hand_l", "hand_r", "face", "target"},
    "record_mark": {"type", "seq", "t_ms"},
}
_INFER_KEYS = {
    "hello": _HELLO_KEYS,
    "obs": _LOG_KEYS["obs"],
    "set_emotion": {"type", "seq", "t_ms", "emotion"},
}


class _Session:
    _counter = 0
    _counter_lock = threading.Lock()

    def __init__(self, server: "StudioServer", conn):
        with _Session._counter_lock:
            _Session._counter += 1
            self.id = f"s{_Session._counter}"
        self.server = server
        self.conn = conn
        self.mode = None
        self.emotion = None
        self.out_seq = -1
        self.last_in_seq = -1
        self.frames_received = 0
        self.frames_logged = 0
        self.marked = 0
        self.recv_intervals_ms: list[float] = []
        self.act_latency_ms: list[float] = []
        self._last_recv = None
        # log mode
        self.clip_path: Path | None = None
        self._file = None
        self._pending_frame = None
        self._pending_seq = None
        # infer mode
        self.controller: Controller | None = None
        self.model_id = None

    def send(self, payload: dict) -> None:
        self.out_seq += 1
        payload = {"type": payload["type"], "seq": self.out_seq, "t_ms": _now_ms(), **{
            k: v for k, v in payload.items() if k != "type"}}
        self.conn.send(json.dumps(payload))

    def send_error(self, code: str, detail: str) -> None:
        self.send({"type": "error", "code": code, "detail": detail})

    def check_seq(self, msg) -> None:
        seq = msg["seq"]
        if seq <= self.last_in_seq:
            raise ProtocolError(SEQ_ORDER, f"seq {seq} does not increase past {self.last_in_seq}")
        self.last_in_seq = seq

    def track_interval(self) -> None:
        now = time.perf_counter()
        if self._last_recv is not None:
            self.recv_intervals_ms.append((now - self._last_recv) * 1000.0)
        self._last_recv = now

    # -- log mode ----------------------------------------------------------

    def open_clip(self, hello: dict) -> None:
        name = Path(hello.get("clip", f"{hello['emotion']}_{self.id}.jsonl")).name
        if not name.endswith(".jsonl"):
            name += ".jsonl"
        self.clip_path = self.server.data_dir / name
        header = {
            "schema": CLIP_SCHEMA,
            "emotion": hello["emotion"],
            "source": "human",
            "seed": hello.get("seed"),
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        self._file = open(self.clip_path, "w")
        self._file.write(json.dumps(header) + "\n")

    def log_obs(self, msg: dict) -> None:
        self._flush_pending()
        frame = {"t_ms": int(msg["t_ms"]), "head": msg["head"], "hand_l": msg["hand_l"],
                 "hand_r": msg["hand_r"], "face": msg["face"], "target": msg["target"]}
        self.frames_received += 1
        self._pending_frame = frame
        self._pending_seq = msg["seq"]

    def mark(self, msg: dict) -> None:
        if self._pending_frame is not None and msg["seq"] >= self._pending_seq:
            if not self._pending_frame.get("mark"):
                self._pending_frame["mark"] = True
                self.marked += 1
        self.send({"type": "status", "frames": self.frames_logged + self._pending_count(),
                   "marked": self.marked})

    def _pending_count(self) -> int:
        if self._pending_frame is None:
            return 0
        return 1 if (self._pending_frame.get("mark") or not self.server.strict_marks) else 0

    def _flush_pending(self) -> None:
        if self._pending_frame is None:
            return
        if self._pending_frame.get("mark") or not self.server.strict_marks:
            self._file.write(json.dumps(self._pending_frame) + "\n")
            self.frames_logged += 1
        self._pending_frame = None
        self._pending_seq = None

    # -- infer mode --------------------------------------------------------

    def open_controller(self, hello: dict) -> None:
        model_id = hello.get("model")
        if not model_id:
            raise ProtocolError(NO_MODEL, "infer mode needs hello.model")
        policy = self.server.load_model(model_id)
        cfg = policy.params_.config
        if "H" in hello and hello["H"] != cfg.history:
            raise ProtocolError(
                BAD_SCHEMA, f"hello.H={hello['H']} but model {model_id!r} uses H={cfg.history}")
        self.model_id = model_id
        self.controller = Controller(
            policy.make_sampler(seed=hello.get("seed", 0)),
            emotion=EmotionLabel(hello["emotion"]),
            horizon=cfg.horizon,
            history=cfg.history,
            obs_dim=cfg.obs_dim,
            tick_budget_ms=self.server.tick_budget_ms,
        )

    def infer_obs(self, msg: dict) -> None:
        start = time.perf_counter()
        obs = np.concatenate([
            np.asarray(msg["head"], dtype=float),
            np.asarray(msg["hand_l"], dtype=float),
            np.asarray(msg["hand_r"], dtype=float),
            np.asarray(msg["target"], dtype=float),
            np.zeros(OBS_DIM - 21),
        ])
        action = self.controller.push_observation(obs)
        if action is None:
            return  # warm-up
        self.send({
            "type": "act",
            "head": list(action[0:6]),
            "hand_l": list(action[6:12]),
            "hand_r": list(action[12:18]),
            "face": list(action[18:25]),
        })
        self.act_latency_ms.append((time.perf_counter() - start) * 1000.0)

    # -- lifecycle -----------------------------------------------------------

    def close(self) -> None:
        if self._file is not None:
            self._flush_pending()
            self._file.flush()
            self._file.close()
            self._file = None

    def snapshot(self) -> dict:
        doc = {
            "id": self.id,
            "mode": self.mode,
            "emotion": self.emotion,
            "frames_received": self.frames_received,
            "frames_logged": self.frames_logged,
            "marked": self.marked,
            "clip": str(self.clip_path) if self.clip_path else None,
            "model": self.model_id,
            "replans": 0,
            "overruns": 0,
            "mean_sample_ms": 0.0,
            "p95_act_latency_ms": _p95(self.act_latency_ms),
            "mean_recv_interval_ms": (
                float(np.mean(self.recv_intervals_ms)) if self.recv_intervals_ms else 0.0),
        }
        if self.controller is not None:
            m = self.controller.metrics()
            doc.update(replans=m["replans"], overruns=m["overruns"],
                       mean_sample_ms=m["mean_sample_ms"], frames_received=self.frames_received)
        return doc


def _p95(values) -> float:
    return float(np.percentile(values, 95)) if values else 0.0


class StudioServer:
    """Thread-per-session WebSocket server plus an HTTP status endpoint."""

    def __init__(self, models_dir, data_dir, host: str = "127.0.0.1", port: int = 8765,
                 strict_marks: bool = False, tick_budget_ms: float = 100.0):
        self.models_dir = Path(models_dir)
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.host = host
        self.strict_marks = strict_marks
        self.tick_budget_ms = tick_budget_ms
        self._requested_port = port
        self._server = None
        self._thread = None
        self._models: dict[str, FlowMatchingPolicy] = {}
        self._models_lock = threading.Lock()
        self._sessions: dict[str, _Session] = {}
        self._closed_sessions: list[dict] = []
        self._sessions_lock = threading.Lock()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "StudioServer":
        self._server = serve(self._handle, self.host, self._requested_port,
                             process_request=self._process_request)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    @property
    def port(self) -> int:
        socks = self._server.socket
        sock = socks[0] if isinstance(socks, list) else socks
        return sock.getsockname()[1]

    def close(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._thread.join(timeout=5)
            self._server = None

    def __enter__(self) -> "StudioServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    # -- models / status -------------------------------------------------------

    def list_models(self) -> list[str]:
        if not self.models_dir.is_dir():
            return []
        return sorted(p.stem for p in self.models_dir.glob("*.npz"))

    def load_model(self, model_id: str) -> FlowMatchingPolicy:
        with self._models_lock:
            if model_id not in self._models:
                path = self.models_dir / f"{model_id}.npz"
                if not path.is_file():
                    raise ProtocolError(NO_MODEL, f"unknown model id {model_id!r}")
                self._models[model_id] = FlowMatchingPolicy.from_artifact(path)
            return self._models[model_id]

    def status(self) -> dict:
        """Status document: active sessions, runtime metrics, loaded models."""
        with self._sessions_lock:
            active = [s.snapshot() for s in self._sessions.values()]
            finished = list(self._closed_sessions)
        return {
            "schema": "expressive-flow/status/v1",
            "sessions": active,
            "finished_sessions": finished,
            "models": self.list_models(),
            "metrics": {
                "active_sessions": len(active),
                "total_sessions": len(active) + len(finished),
            },
        }

    def _process_request(self, conn, request):
        if request.path == "/status":
            body = json.dumps(self.status()).encode()
            return conn.respond(200, body.decode() + "\n")
        return None

    # -- session loop ---------------------------------------------------------

    def _handle(self, conn) -> None:
        session = _Session(self, conn)
        try:
            self._run_session(session, conn)
        finally:
            session.close()
            with self._sessions_lock:
                self._sessions.pop(session.id, None)
                if session.mode is not None:
                    self._closed_sessions.append(session.snapshot())

    def _run_session(self, session: _Session, conn) -> None:
        for raw in conn:
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError as e:
                session.send_error(BAD_SCHEMA, f"invalid JSON: {e.msg}")
                return
            try:
                session.track_interval()
                if session.mode is None:
                    self._handle_hello(session, msg)
                    continue
                allowed = _LOG_KEYS if session.mode == "log" else _INFER_KEYS
                mtype = validate_message(msg, allowed)
                _require(mtype != "hello", "session already opened")
                session.check_seq(msg)
                if session.mode == "log":
                    if mtype == "obs":
                        session.log_obs(msg)
                    else:
                        session.mark(msg)
                else:
                    if mtype == "obs":
                        session.infer_obs(msg)
                    else:
                        session.controller.set_emotion(EmotionLabel(msg["emotion"]))
            except ProtocolError as e:
                session.send_error(e.code, e.detail)
                if e.code != SEQ_ORDER:
                    return  # SEQ_ORDER drops the message but keeps the session

    def _handle_hello(self, session: _Session, msg: dict) -> None:
        mtype = validate_message(msg, {"hello": _HELLO_KEYS})
        _require(mtype == "hello", "first message must be 'hello'")
        session.check_seq(msg)
        session.mode = msg["mode"]
        session.emotion = msg["emotion"]
        if session.mode == "log":
            session.open_clip(msg)
        else:
            session.open_controller(msg)
        with self._sessions_lock:
            self._sessions[session.id] = session
