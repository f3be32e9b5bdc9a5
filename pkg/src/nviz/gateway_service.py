"""HTTP + WebSocket gateway: live ingest, state queries, replay sessions.

One ingest pipeline (the single writer) drains a packet source and, for
each packet, decodes, applies, records, then broadcasts -- in that
order, so any state a client fetches is reproducible from checkpoints
plus the pending journal.  Request handlers only ever read snapshots.

Surface:

* ``GET  /api/spec/network`` and ``/api/spec/packet`` -- raw spec XML
* ``GET  /api/state`` -- raw + converted snapshot
* ``GET  /api/checkpoints?from=&to=`` -- checkpoint metadata
* ``GET  /api/checkpoints/{t}`` -- checkpoint XML
* ``POST /api/simulate`` -- inject one packet (pipe-hex body)
* ``POST /api/replay/sessions`` and ``/api/replay/{id}/...`` -- replay
* ``WS   /ws/live`` and ``/ws/replay/{id}`` -- event streams

Events are JSON objects with a ``type`` of ``packet``, ``diff``,
``discard``, ``checkpoint``, ``full_state`` or ``end``.  Slow websocket
consumers are disconnected once their buffer overflows rather than ever
blocking the pipeline.
"""

from __future__ import annotations

import asyncio
import logging
import queue
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Query, Request, Response, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .checkpoint_store import CheckpointNotFound, Store, StoreError, init_store
from .ingest_sources import parse_source_descriptor
from .network_model import (
    ApplyError,
    NetworkState,
    StateDiff,
    apply_packet,
    convert_field_value,
    converted_view,
)
from .packet_codec import (
    DecodeError,
    HexLogError,
    ParsedPacket,
    RawPacket,
    decode_packet,
    parse_hex_log,
)
from .replay_engine import EmptyStoreError, ReplaySession, state_at
from .spec_manager import NetworkSpec, PropertyKind

logger = logging.getLogger(__name__)

EVENT_BUFFER = 256


@dataclass
class ServerConfig:
    store_dir: Path
    net_path: Path
    pkt_path: Path
    source: str
    listen: str = "127.0.0.1:8800"
    ui_dir: Path | None = None

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host or "127.0.0.1", int(port)


def _now_ms() -> int:
    return int(time.time() * 1000)


class _WsSubscriber:
    """Bridges pipeline-thread events into a websocket's asyncio queue."""

    def __init__(self, loop: asyncio.AbstractEventLoop, maxsize: int = EVENT_BUFFER):
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=maxsize)
        self.loop = loop
        self.overflowed = False

    def push(self, event: dict) -> None:
        if self.overflowed:
            return
        try:
            self.loop.call_soon_threadsafe(self._put, event)
        except RuntimeError:
            self.overflowed = True  # loop shut down

    def _put(self, event: dict) -> None:
        try:
            self.queue.put_nowait(event)
        except asyncio.QueueFull:
            self.overflowed = True
            # poison the stream so the handler drops the connection
            while not self.queue.empty():
                self.queue.get_nowait()
            self.queue.put_nowait({"type": "overflow"})


class Pipeline:
    """The single-writer ingest loop plus live state and broadcasting."""

    def __init__(self, cfg: ServerConfig):
        net_xml = Path(cfg.net_path).read_text(encoding="utf-8")
        pkt_xml = Path(cfg.pkt_path).read_text(encoding="utf-8")
        self.net_xml = net_xml
        self.pkt_xml = pkt_xml
        self.store: Store = init_store(cfg.store_dir, net_xml, pkt_xml)
        self.net = self.store.net
        self.pkts = self.store.pkts
        self.source_desc = cfg.source
        self.lock = threading.RLock()
        if self.store.checkpoints or self.store.pending:
            _, last = self.store.time_range()
            self.state = state_at(self.store, last)
        else:
            self.state = NetworkState.empty()
        self._queue: queue.Queue = queue.Queue()
        self._subscribers: list = []
        self._sub_lock = threading.Lock()
        self._source = None
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self.source_drained = threading.Event()

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        self._source = parse_source_descriptor(self.source_desc, self.net, self.pkts)
        feeder = threading.Thread(target=self._feed, daemon=True, name="nviz-source")
        worker = threading.Thread(target=self._work, daemon=True, name="nviz-ingest")
        self._threads = [feeder, worker]
        feeder.start()
        worker.start()

    def stop(self) -> None:
        if self._stopping.is_set():
            return
        self._stopping.set()
        close = getattr(self._source, "close", None)
        if callable(close):
            close()
        self._queue.put(None)
        for t in self._threads:
            t.join(timeout=5)
        with self.lock:
            cp = self.store.seal_partial(self.state)
        if cp is not None:
            logger.info("sealed final checkpoint t=%d with %d logs", cp.t, len(cp.logs))

    def _feed(self) -> None:
        try:
            for t, data in self._source:
                if self._stopping.is_set():
                    break
                self._queue.put((t, data))
        except Exception:
            logger.exception("packet source failed")
        finally:
            self.source_drained.set()

    def _work(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            t, data = item
            self.ingest_one(RawPacket(data, t))

    # -- ingest ------------------------------------------------------------

    def inject(self, data: bytes) -> None:
        """Feed one packet as if it had just arrived (epoch-ms stamped)."""
        self._queue.put((_now_ms(), data))

    def ingest_one(self, raw: RawPacket) -> None:
        events: list[dict] = []
        with self.lock:
            try:
                parsed = decode_packet(raw, self.net, self.pkts)
            except DecodeError as err:
                self.state.discard_count += 1
                events.append({"type": "discard", "t": raw.received_at,
                               "reason": str(err),
                               "error": type(err).__name__})
                self._broadcast(events)
                return
            try:
                diff = apply_packet(self.state, parsed)
            except ApplyError as err:
                events.append({"type": "discard", "t": raw.received_at,
                               "reason": str(err), "error": "ApplyError"})
                self._broadcast(events)
                return
            events.append(self._packet_event(parsed))
            events.append({"type": "diff",
                           "diff": diff_to_json(diff, self.state, self.net)})
            try:
                cp = self.store.record(raw, self.state)
            except StoreError as err:
                logger.error("checkpoint persistence failed: %s", err)
                cp = None
            if cp is not None:
                events.append({"type": "checkpoint", "t": cp.t,
                               "logs": len(cp.logs),
                               "nodes": len(cp.state.nodes)})
        self._broadcast(events)

    def _packet_event(self, p: ParsedPacket) -> dict:
        addr_idx = p.format.address_indices
        src = p.values[addr_idx[0]][1] if addr_idx else None
        dst = p.values[addr_idx[1]][1] if len(addr_idx) > 1 else None
        fields = []
        for fld, value in p.values:
            converted, error = convert_field_value(
                self.state, self.net, fld.property_kind, fld.property_id,
                value, src, dst)
            fields.append({
                "name": fld.name,
                "kind": fld.property_kind.value,
                "property_id": fld.property_id,
                "raw": value,
                "value": converted,
                "error": error,
            })
        return {"type": "packet", "t": p.received_at,
                "packet_id": p.packet_id,
                "description": p.format.description,
                "fields": fields}

    # -- fan-out -----------------------------------------------------------

    def subscribe(self, sub) -> None:
        with self._sub_lock:
            self._subscribers.append(sub)

    def unsubscribe(self, sub) -> None:
        with self._sub_lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def _broadcast(self, events: list[dict]) -> None:
        with self._sub_lock:
            subs = list(self._subscribers)
        for event in events:
            for sub in subs:
                sub.push(event)

    # -- reads ---------------------------------------------------------------

    def snapshot(self) -> NetworkState:
        with self.lock:
            return self.state.snapshot()


def subject_to_json(subject: tuple):
    if subject[0] == "node":
        return {"node": subject[1]}
    if subject[0] == "link":
        return {"link": [subject[1], subject[2]]}
    return "env"


_SUBJECT_KINDS = {"node": PropertyKind.NODE, "link": PropertyKind.LINK,
                  "env": PropertyKind.ENVR}


def diff_to_json(diff: StateDiff, state: NetworkState | None = None,
                 net: NetworkSpec | None = None) -> dict:
    """JSON shape of a diff.

    When the post-apply state and spec are given, property entries are
    enriched with the property name and the converted value, so a
    renderer never needs its own expression engine.
    """
    entries = []
    for e in diff.entries:
        entry: dict = {
            "subject": subject_to_json(e.subject),
            "property_id": e.prop_id,
            "old": e.old,
            "new": e.new,
        }
        if state is not None and net is not None and e.prop_id is not None:
            kind = _SUBJECT_KINDS[e.subject[0]]
            src = e.subject[1] if len(e.subject) > 1 else None
            dst = e.subject[2] if len(e.subject) > 2 else None
            prop = net.lookup(kind, e.prop_id)
            entry["name"] = prop.name if prop else f"property {e.prop_id}"
            if e.new is not None:
                value, err = convert_field_value(state, net, kind, e.prop_id,
                                                 e.new, src, dst)
                entry["value"] = value
                entry["error"] = err
        entries.append(entry)
    return {
        "t": diff.t,
        "packet_count": diff.packet_count,
        "discard_count": diff.discard_count,
        "entries": entries,
    }


def state_to_json(state: NetworkState, net: NetworkSpec) -> dict:
    view = converted_view(state, net)

    def props_json(raw_props: dict[int, int], conv_props, kind: PropertyKind) -> dict:
        out = {}
        for pid, raw in raw_props.items():
            prop = net.lookup(kind, pid)
            cv = conv_props.get(pid)
            out[str(pid)] = {
                "name": prop.name if prop else f"property {pid}",
                "raw": raw,
                "value": cv.value if cv else None,
                "error": cv.error if cv else None,
            }
        return out

    nodes = {}
    for addr, node in state.nodes.items():
        cnode = view.nodes[addr]
        links = {}
        for dst, link in node.links.items():
            links[str(dst)] = {
                "dest": dst,
                "last_seen": link.last_seen,
                "props": props_json(link.raw_props, cnode.links[dst].props,
                                    PropertyKind.LINK),
            }
        nodes[str(addr)] = {
            "address": addr,
            "last_seen": node.last_seen,
            "props": props_json(node.raw_props, cnode.props, PropertyKind.NODE),
            "links": links,
        }
    return {
        "packet_count": state.packet_count,
        "discard_count": state.discard_count,
        "nodes": nodes,
        "env": props_json(state.env.raw_props, view.env, PropertyKind.ENVR),
    }


def build_app(cfg: ServerConfig) -> FastAPI:
    """Construct the service; specs and source are validated right here."""
    pipeline = Pipeline(cfg)
    sessions: dict[str, ReplaySession] = {}
    sessions_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        pipeline.start()
        yield
        with sessions_lock:
            for session in sessions.values():
                session.close()
            sessions.clear()
        pipeline.stop()

    app = FastAPI(title="nviz gateway", version="0.1.0", lifespan=lifespan)
    app.state.pipeline = pipeline

    def error(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status,
                            content={"code": code, "message": message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return error(422, "bad_request", str(exc.errors()))

    @app.exception_handler(Exception)
    async def _internal_error(request: Request, exc: Exception):
        logger.exception("request failed: %s %s", request.method, request.url)
        return error(500, "internal", str(exc))

    # -- specs and state ------------------------------------------------

    @app.get("/api/spec/network")
    def spec_network() -> Response:
        return Response(pipeline.net_xml, media_type="application/xml")

    @app.get("/api/spec/packet")
    def spec_packet() -> Response:
        return Response(pipeline.pkt_xml, media_type="application/xml")

    @app.get("/api/state")
    def api_state() -> JSONResponse:
        state = pipeline.snapshot()
        body = {"t": _now_ms(), **state_to_json(state, pipeline.net)}
        return JSONResponse(body)

    @app.get("/api/checkpoints")
    def api_checkpoints(from_t: int | None = Query(default=None, alias="from"),
                        to_t: int | None = Query(default=None, alias="to")):
        entries = pipeline.store.list_checkpoints(from_t, to_t)
        try:
            lo, hi = pipeline.store.time_range()
            time_range = {"from": lo, "to": hi}
        except StoreError:
            time_range = None
        return {"checkpoints": [
            {"t": t, "nodes": nodes, "logs": logs} for t, nodes, logs in entries
        ], "pending_logs": len(pipeline.store.pending), "range": time_range}

    @app.get("/api/checkpoints/{t}")
    def api_checkpoint_xml(t: int):
        try:
            text = pipeline.store.checkpoint_xml(t)
        except CheckpointNotFound as err:
            return error(404, "not_found", str(err))
        return Response(text, media_type="application/xml")

    @app.post("/api/simulate")
    async def api_simulate(request: Request):
        body = (await request.body()).decode("utf-8", "replace").strip()
        try:
            data = parse_hex_log(body)
        except HexLogError as err:
            return error(400, "bad_packet", str(err))
        if not data:
            return error(400, "bad_packet", "empty packet")
        pipeline.inject(data)
        return JSONResponse(status_code=202, content={"accepted": True})

    # -- replay sessions --------------------------------------------------

    def get_session(session_id: str) -> ReplaySession | None:
        with sessions_lock:
            return sessions.get(session_id)

    def session_json(session: ReplaySession) -> dict:
        return {
            "id": session.id,
            "cursor_t": session.cursor_t,
            "mode": session.mode,
            "speed": session.speed,
            "state": state_to_json(session.state, pipeline.net),
        }

    @app.post("/api/replay/sessions")
    def create_session(body: dict):
        if "at" not in body:
            return error(400, "bad_request", "body must carry 'at' (epoch ms)")
        try:
            session = ReplaySession(pipeline.store, at=int(body["at"]))
        except (EmptyStoreError, StoreError) as err:
            return error(409, "empty_store", str(err))
        with sessions_lock:
            sessions[session.id] = session
        return JSONResponse(status_code=201, content={
            **session_json(session), "clamped": session.clamped_on_create,
        })

    @app.get("/api/replay/{session_id}")
    def get_session_state(session_id: str):
        session = get_session(session_id)
        if session is None:
            return error(404, "not_found", f"no session {session_id}")
        return session_json(session)

    @app.post("/api/replay/{session_id}/play")
    def session_play(session_id: str, body: dict | None = None):
        session = get_session(session_id)
        if session is None:
            return error(404, "not_found", f"no session {session_id}")
        speed = float((body or {}).get("speed", 1.0))
        if speed <= 0:
            return error(400, "bad_request", "speed must be positive")
        session.play(speed)
        return {"id": session.id, "mode": session.mode, "speed": session.speed}

    @app.post("/api/replay/{session_id}/pause")
    def session_pause(session_id: str):
        session = get_session(session_id)
        if session is None:
            return error(404, "not_found", f"no session {session_id}")
        session.pause()
        return {"id": session.id, "mode": session.mode, "cursor_t": session.cursor_t}

    @app.post("/api/replay/{session_id}/seek")
    def session_seek(session_id: str, body: dict):
        session = get_session(session_id)
        if session is None:
            return error(404, "not_found", f"no session {session_id}")
        if "at" not in body:
            return error(400, "bad_request", "body must carry 'at' (epoch ms)")
        state, clamped = session.seek(int(body["at"]))
        return {"id": session.id, "cursor_t": session.cursor_t,
                "clamped": clamped,
                "state": state_to_json(state, pipeline.net)}

    @app.post("/api/replay/{session_id}/step")
    def session_step(session_id: str, body: dict | None = None):
        session = get_session(session_id)
        if session is None:
            return error(404, "not_found", f"no session {session_id}")
        direction = (body or {}).get("dir", "forward")
        if direction not in ("forward", "backward"):
            return error(400, "bad_request", "dir must be forward or backward")
        diff = session.step(direction)
        return {"id": session.id, "cursor_t": session.cursor_t,
                "diff": diff_to_json(diff, session.state, pipeline.net)}

    @app.delete("/api/replay/{session_id}", status_code=204)
    def session_delete(session_id: str):
        with sessions_lock:
            session = sessions.pop(session_id, None)
        if session is None:
            return error(404, "not_found", f"no session {session_id}")
        session.close()
        return Response(status_code=204)

    # -- websockets -------------------------------------------------------

    async def _pump(ws: WebSocket, sub: _WsSubscriber) -> None:
        while True:
            event = await sub.queue.get()
            if event.get("type") == "overflow" or sub.overflowed:
                await ws.close(code=1013)  # try again later
                return
            await ws.send_json(event)

    @app.websocket("/ws/live")
    async def ws_live(ws: WebSocket):
        await ws.accept()
        sub = _WsSubscriber(asyncio.get_running_loop())
        pipeline.subscribe(sub)
        try:
            await _pump(ws, sub)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            pipeline.unsubscribe(sub)

    @app.websocket("/ws/replay/{session_id}")
    async def ws_replay(ws: WebSocket, session_id: str):
        session = get_session(session_id)
        if session is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        sub = _WsSubscriber(asyncio.get_running_loop())

        def forward(event: dict) -> None:
            payload = {k: v for k, v in event.items()}
            if "diff" in payload:
                # emitted post-apply under the session lock, so the session
                # state is the right context for converted values
                payload["diff"] = diff_to_json(payload["diff"], session.state,
                                               pipeline.net)
            if "state" in payload:
                payload["state"] = state_to_json(payload["state"], pipeline.net)
            sub.push(payload)

        session.subscribe(forward)
        try:
            await _pump(ws, sub)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            session.unsubscribe(forward)

    if cfg.ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=cfg.ui_dir, html=True), name="console")

    return app


def serve(cfg: ServerConfig) -> None:
    """Run the gateway until interrupted; seals a final partial checkpoint."""
    import uvicorn

    app = build_app(cfg)
    host, port = cfg.host_port
    uvicorn.run(app, host=host, port=port, log_level="info")
