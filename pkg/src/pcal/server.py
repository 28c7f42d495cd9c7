"""HTTP service exposing annotation sessions to the browser UI.

JSON command endpoints map 1:1 onto session operations; snapshots use a hybrid
JSON + binary framing (u32-LE length-prefixed JSON header, then raw payload
blocks); progress is streamed as server-sent events.
"""

from __future__ import annotations

import base64
import json
import queue
import struct
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse

from . import session as sess
from .datasets import ShapeSpec, generate_shape
from .errors import InvalidParameterError, PhaseError, PlyParseError
from .geom import load_ply
from .labels import UNLABELED, LabelMap
from .oracle import evaluate
from .region_grow import GrowConfig
from .trainer import TrainConfig

_UNLABELED_BYTE = 255


def encode_snapshot(state: sess.SessionState, metrics: dict | None = None) -> bytes:
    """u32-LE JSON header length, JSON envelope, then positions as little-endian
    float32 triples, labels as bytes (255 = unlabeled), provenance as bytes."""
    n = len(state.cloud)
    positions = state.cloud.positions.astype("<f4").tobytes()
    labels = np.where(state.labels.labels == UNLABELED, _UNLABELED_BYTE,
                      state.labels.labels).astype(np.uint8).tobytes()
    provenance = state.labels.provenance.astype(np.uint8).tobytes()
    header = {
        "session_id": state.session_id,
        "phase": state.phase.value,
        "round": state.round,
        "num_classes": state.labels.num_classes,
        "n_points": n,
        "clicks_total": state.clicks_total,
        "blocks": {"positions": len(positions), "labels": len(labels),
                   "provenance": len(provenance)},
    }
    if metrics is not None:
        header["metrics"] = metrics
    hj = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(hj)) + hj + positions + labels + provenance


def decode_snapshot(data: bytes) -> dict:
    (hlen,) = struct.unpack_from("<I", data, 0)
    header = json.loads(data[4:4 + hlen].decode("utf-8"))
    off = 4 + hlen
    blocks = header["blocks"]
    positions = np.frombuffer(data[off:off + blocks["positions"]],
                              dtype="<f4").reshape(-1, 3)
    off += blocks["positions"]
    labels = np.frombuffer(data[off:off + blocks["labels"]], dtype=np.uint8)
    off += blocks["labels"]
    provenance = np.frombuffer(data[off:off + blocks["provenance"]], dtype=np.uint8)
    out = dict(header)
    out["positions"] = positions
    out["labels"] = np.where(labels == _UNLABELED_BYTE, UNLABELED,
                             labels.astype(np.int32))
    out["provenance"] = provenance
    return out


class _SessionHandle:
    def __init__(self, state):
        self.state = state
        self.lock = threading.Lock()
        self.busy = False
        self.subscribers: list[queue.Queue] = []

    def emit(self, event: str, payload: dict):
        for q in list(self.subscribers):
            q.put((event, payload))


def create_app() -> FastAPI:
    app = FastAPI(title="pcal annotation server")
    clouds: dict = {}            # cloud_id -> (PointCloud, LabelMap | None)
    sessions: dict = {}          # session_id -> _SessionHandle
    base_model_holder = {"model": None}
    store_lock = threading.Lock()

    def _handle(session_id: str) -> _SessionHandle:
        handle = sessions.get(session_id)
        if handle is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return handle

    @app.exception_handler(InvalidParameterError)
    async def _invalid(request: Request, exc: InvalidParameterError):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(PhaseError)
    async def _phase(request: Request, exc: PhaseError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.get("/clouds")
    def list_clouds():
        return [{"cloud_id": cid, "n_points": len(cloud),
                 "has_ground_truth": gt is not None}
                for cid, (cloud, gt) in clouds.items()]

    @app.post("/clouds")
    async def add_cloud(request: Request):
        body = await request.json()
        cid = body.get("cloud_id") or uuid.uuid4().hex[:12]
        if "generate" in body:
            spec = ShapeSpec(**body["generate"])
            cloud, gt = generate_shape(spec)
        elif "ply_base64" in body:
            try:
                cloud = load_ply(base64.b64decode(body["ply_base64"]))
            except PlyParseError as e:
                raise HTTPException(422, f"bad PLY: {e}")
            gt = None
        else:
            raise HTTPException(422, "body must contain 'generate' or 'ply_base64'")
        with store_lock:
            clouds[cid] = (cloud, gt)
        return {"cloud_id": cid, "n_points": len(cloud),
                "has_ground_truth": gt is not None}

    @app.post("/sessions")
    def create_session_ep(body: dict):
        cloud_id = body.get("cloud_id")
        if cloud_id not in clouds:
            raise HTTPException(404, f"unknown cloud {cloud_id}")
        cloud, _ = clouds[cloud_id]
        grow = GrowConfig.from_dict(body["grow_config"]) if "grow_config" in body else None
        train = TrainConfig.from_dict(body["train_config"]) if "train_config" in body else None
        state = sess.create_session(cloud, int(body.get("num_classes", 2)),
                                    base_model_holder["model"], grow, train)
        state.cloud_id = cloud_id
        handle = _SessionHandle(state)
        with store_lock:
            sessions[state.session_id] = handle
        return {"session_id": state.session_id, "phase": state.phase.value,
                "num_classes": state.labels.num_classes}

    @app.get("/sessions/{session_id}")
    def snapshot(session_id: str):
        handle = _handle(session_id)
        with handle.lock:
            metrics = _metrics_or_none(handle)
            payload = encode_snapshot(handle.state, metrics)
        return Response(content=payload, media_type="application/octet-stream")

    def _metrics_or_none(handle):
        gt = clouds.get(getattr(handle.state, "cloud_id", None), (None, None))[1]
        if gt is None or not handle.state.labels.is_full:
            return None
        acc, miou = evaluate(handle.state.labels, gt)
        return {"accuracy": acc, "miou": miou}

    def _mutate(handle, fn):
        with handle.lock:
            if handle.busy:
                raise HTTPException(409, "session is training")
            return fn()

    @app.post("/sessions/{session_id}/seeds")
    def seeds_ep(session_id: str, body: dict):
        handle = _handle(session_id)

        def run():
            sess.submit_seeds(handle.state, [tuple(s) for s in body["seeds"]])
            return {"phase": handle.state.phase.value,
                    "clicks_total": handle.state.clicks_total}
        return _mutate(handle, run)

    @app.post("/sessions/{session_id}/train")
    def train_ep(session_id: str):
        handle = _handle(session_id)
        with handle.lock:
            if handle.busy:
                raise HTTPException(409, "session is already training")
            if handle.state.phase not in (sess.Phase.TRAINING, sess.Phase.REVIEWING):
                raise PhaseError(f"cannot train in phase {handle.state.phase.value}")
            handle.busy = True

        def job():
            try:
                round_ = handle.state.round

                def on_epoch(epoch, loss):
                    handle.emit("progress", {"round": round_, "epoch": epoch,
                                             "loss": loss})
                sess.train_and_predict(handle.state, on_epoch=on_epoch)
                handle.emit("trained", {"round": handle.state.round,
                                        "phase": handle.state.phase.value})
            except Exception as e:  # surfaced on the stream; session unchanged
                handle.emit("error", {"error": str(e)})
            finally:
                handle.busy = False

        threading.Thread(target=job, daemon=True).start()
        return {"status": "training", "round": handle.state.round}

    @app.post("/sessions/{session_id}/corrections")
    def corrections_ep(session_id: str, body: dict):
        handle = _handle(session_id)

        def run():
            items = [sess.Correction(int(c["point_id"]), int(c["class_id"]),
                                     bool(c.get("grow", False)))
                     for c in body["corrections"]]
            sess.submit_corrections(handle.state, items)
            return {"phase": handle.state.phase.value,
                    "clicks_total": handle.state.clicks_total}
        return _mutate(handle, run)

    @app.post("/sessions/{session_id}/finalize")
    def finalize_ep(session_id: str):
        handle = _handle(session_id)

        def run():
            sess.finalize(handle.state)
            base_model_holder["model"] = handle.state.model  # last writer wins
            handle.emit("finalized", {"round": handle.state.round})
            return {"phase": handle.state.phase.value}
        return _mutate(handle, run)

    @app.get("/sessions/{session_id}/events")
    def events_ep(session_id: str):
        handle = _handle(session_id)
        q: queue.Queue = queue.Queue()
        handle.subscribers.append(q)

        def stream():
            try:
                while True:
                    try:
                        event, payload = q.get(timeout=2.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"event: {event}\ndata: {json.dumps(payload)}\n\n"
                    if event == "finalized":
                        return
            finally:
                handle.subscribers.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/metrics/{session_id}")
    def metrics_ep(session_id: str):
        handle = _handle(session_id)
        gt = clouds.get(getattr(handle.state, "cloud_id", None), (None, None))[1]
        if gt is None:
            raise HTTPException(404, "no ground truth attached to this cloud")
        with handle.lock:
            state = handle.state
            if not state.labels.is_full:
                raise HTTPException(409, "labels not yet full; train first")
            acc, miou = evaluate(state.labels, gt)
            return {"session_id": session_id, "round": state.round,
                    "clicks_total": state.clicks_total,
                    "accuracy": acc, "miou": miou}

    return app
