"""Network gateway: conversations hosted over HTTP and WebSocket.

Each conversation is a single-writer unit: every submitted envelope is routed
under the host lock, appended to the persisted transcript, fanned out to
connected participants, and handed to the in-process convener whose reaction
envelopes are routed in the same step. Different conversations are fully
independent.

Wire frames are exactly one serialized envelope each: inbound frames carry a
participant's envelope, outbound frames carry the view that participant is
entitled to. Attach rejections travel as WebSocket close reasons, not frames.
"""

from __future__ import annotations

import asyncio
import dataclasses
import json
import uuid
from collections import deque
from enum import Enum
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .convener import ConvenerAgent, ConvenerPolicy
from .envelope import (
    EnvelopeDoc,
    EventType,
    envelope_to_obj,
    invite_event,
    make_envelope,
    parse_envelope,
    tick_timestamp,
    whisper_event,
)
from .errors import (
    DuplicateConnection,
    InvalidEnvelope,
    MalformedDocument,
    NotInvited,
    ParleyError,
    UnknownConversation,
    UnknownSender,
)
from .floor import Floor, Role, create_floor, transcript_entry_from_obj, transcript_entry_to_obj
from .routing import route, tick_expiry

DEFAULT_CONVENER_URI = "https://convener.invalid/parley"
OFFLINE_BUFFER_LIMIT = 256
REJECT_NOT_INVITED = "not_authorized_to_participate"

CLOSE_NOT_INVITED = 4403
CLOSE_UNKNOWN_CONVERSATION = 4404
CLOSE_DUPLICATE = 4409
CLOSE_BAD_ENVELOPE = 4422


class ConnectionState(str, Enum):
    CONNECTED = "connected"
    DRAINING = "draining"
    CLOSED = "closed"


class Connection:
    def __init__(self, uri: str):
        self.uri = uri
        self.state = ConnectionState.CONNECTED
        self.outbound: asyncio.Queue = asyncio.Queue()

    def push(self, view_obj: dict) -> None:
        self.outbound.put_nowait(view_obj)


class ConversationHost:
    """Single writer for one conversation: floor, convener, log, fan-out."""

    def __init__(
        self,
        conversation_id: str,
        policy: Optional[ConvenerPolicy] = None,
        *,
        data_dir: Optional[Path] = None,
        human_uri: Optional[str] = None,
        topic: str = "",
        convener_uri: str = DEFAULT_CONVENER_URI,
        members: tuple = (),
    ):
        self.conversation_id = conversation_id
        self.human_uri = human_uri
        self.members = tuple((uri, Role(role)) for uri, role in members)
        self.convener = ConvenerAgent(convener_uri, policy=policy or ConvenerPolicy(),
                                      topic=topic)
        self.floor: Floor = create_floor(conversation_id, convener_uri)
        if human_uri:
            self.floor = self.floor.join(human_uri, Role.HUMAN_CONVERSANT)
        for uri, role in self.members:
            if not self.floor.is_participant(uri):
                self.floor = self.floor.join(uri, role)
        self.ticks = 0
        self.lock = asyncio.Lock()
        self.connections: dict[str, Connection] = {}
        self.offline: dict[str, deque] = {}
        self.deliveries: list[dict[str, dict]] = []  # seq -> recipient -> view obj
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._replaying = False
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._write_meta()

    # -- persistence --

    @property
    def log_path(self) -> Optional[Path]:
        if self.data_dir is None:
            return None
        return self.data_dir / f"{self.conversation_id}.transcript.jsonl"

    @property
    def meta_path(self) -> Optional[Path]:
        if self.data_dir is None:
            return None
        return self.data_dir / f"{self.conversation_id}.meta.json"

    def _write_meta(self) -> None:
        meta = {
            "conversation_id": self.conversation_id,
            "convener_uri": self.convener.uri,
            "human_uri": self.human_uri,
            "topic": self.convener.state.topic,
            "policy": self.convener.policy.to_obj(),
            "members": [[uri, role.value] for uri, role in self.members],
        }
        self.meta_path.write_text(json.dumps(meta, indent=2) + "\n")

    def _append_line(self, obj: dict) -> None:
        if self.log_path is None or self._replaying:
            return
        with self.log_path.open("a") as fh:
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

    @classmethod
    def recover(cls, conversation_id: str, data_dir: Path) -> "ConversationHost":
        """Rebuild a host by folding the router over the persisted transcript."""
        data_dir = Path(data_dir)
        meta_path = data_dir / f"{conversation_id}.meta.json"
        log_path = data_dir / f"{conversation_id}.transcript.jsonl"
        try:
            meta = json.loads(meta_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UnknownConversation(f"{conversation_id}: {exc}") from exc
        host = cls(
            conversation_id,
            ConvenerPolicy.from_obj(meta.get("policy", {})),
            data_dir=data_dir,
            human_uri=meta.get("human_uri"),
            topic=meta.get("topic", ""),
            convener_uri=meta.get("convener_uri", DEFAULT_CONVENER_URI),
            members=tuple((m[0], m[1]) for m in meta.get("members", [])),
        )
        if not log_path.exists():
            return host
        host._replaying = True
        try:
            for line in log_path.read_text().splitlines():
                if not line.strip():
                    continue
                obj = json.loads(line)
                if "annotation" in obj:
                    continue
                entry = transcript_entry_from_obj(obj)
                host._route_one(entry.envelope, entry.tick)
        finally:
            host._replaying = False
        return host

    # -- the single-writer pipeline --

    def _route_one(self, envelope: EnvelopeDoc, tick: int) -> int:
        """Route one envelope at a fixed tick; returns its transcript seq."""
        self.ticks = max(self.ticks, tick)
        plan, self.floor = route(self.floor, envelope, tick, self._config())
        entry = self.floor.transcript[-1]
        self._append_line(transcript_entry_to_obj(entry))

        views = {uri: envelope_to_obj(view) for uri, view in plan.entries}
        self.deliveries.append(views)
        if not self._replaying:
            for uri, view_obj in views.items():
                self._deliver(uri, view_obj, entry.seq)

        if self._replaying:
            # decisions were envelopes too; they are already in the log
            self._restore_convener_state(envelope)
            return entry.seq

        emitted = []
        decision = self.convener.on_signal_or_copy(plan.convener_copy, self.floor, tick)
        emitted.extend(decision.emitted_envelopes)
        for signal in plan.signals:
            decision = self.convener.on_signal_or_copy(signal, self.floor, tick)
            emitted.extend(decision.emitted_envelopes)
        for reaction in emitted:
            self.ticks += 1
            self._route_one(reaction, self.ticks)
        return entry.seq

    def _restore_convener_state(self, envelope: EnvelopeDoc) -> None:
        if envelope.sender_uri != self.convener.uri:
            return
        for event in envelope.events:
            if event.event_type is EventType.FLOOR_GRANT and event.to:
                self.convener.state = dataclasses.replace(
                    self.convener.state, last_holder_uri=event.to[0])

    def _config(self):
        return self.convener.policy.routing_config()

    def _deliver(self, uri: str, view_obj: dict, seq: int) -> None:
        conn = self.connections.get(uri)
        if conn is not None and conn.state is ConnectionState.CONNECTED:
            conn.push(view_obj)
            return
        buffer = self.offline.setdefault(uri, deque())
        if len(buffer) >= OFFLINE_BUFFER_LIMIT:
            self._append_line({"annotation": "dropped_delivery", "uri": uri, "seq": seq})
            return
        buffer.append(view_obj)

    async def submit(self, envelope: EnvelopeDoc) -> int:
        """Route a participant envelope; returns the assigned transcript seq."""
        async with self.lock:
            for signal in tick_expiry(self.floor, self.ticks):
                decision = self.convener.on_signal_or_copy(signal, self.floor, self.ticks)
                for reaction in decision.emitted_envelopes:
                    self.ticks += 1
                    self._route_one(reaction, self.ticks)
            self.ticks += 1
            return self._route_one(envelope, self.ticks)

    # -- connections --

    async def attach(self, uri: str) -> Connection:
        async with self.lock:
            joined = self.floor.is_participant(uri)
            if uri != self.human_uri and not joined:
                raise NotInvited(REJECT_NOT_INVITED)
            existing = self.connections.get(uri)
            if existing is not None and existing.state is ConnectionState.CONNECTED:
                raise DuplicateConnection(uri)
            conn = Connection(uri)
            self.connections[uri] = conn
            for view_obj in self.offline.pop(uri, ()):
                conn.push(view_obj)
            catchup = self._catchup_envelope(uri) if joined else None
        if not joined:
            # the designated human re-enters through an ordinary invite so the
            # join survives event-sourced recovery
            invite = make_envelope(self.conversation_id, self.convener.uri,
                                   [invite_event((uri,))])
            await self.submit(invite)
        elif catchup is not None:
            await self.submit(catchup)
        return conn

    def _catchup_envelope(self, uri: str) -> Optional[EnvelopeDoc]:
        """Recap whisper for a rejoining participant, from their own window."""
        if not self.floor.is_participant(uri):
            return None
        window = self.floor.context_window(uri, self.convener.context_window_size)
        if not window:
            return None
        digest = "; ".join(f"{de.speaker_id}: {de.text}" for de in window)
        event = whisper_event(
            "Catching you up on the conversation so far.",
            self.convener.uri,
            tick_timestamp(self.ticks),
            to=(uri,),
            context=digest,
        )
        return make_envelope(self.conversation_id, self.convener.uri, [event])

    async def detach(self, uri: str) -> None:
        async with self.lock:
            conn = self.connections.pop(uri, None)
            if conn is not None:
                conn.state = ConnectionState.CLOSED
            self.offline.setdefault(uri, deque())

    # -- read endpoints --

    def participants_obj(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "participants": [
                {"uri": p.uri, "role": p.role.value, "joined_at_tick": p.joined_at_tick}
                for p in sorted(self.floor.participants.values(), key=lambda p: p.uri)
            ],
            "holder": self.floor.holder.holder_uri if self.floor.holder else None,
            "queue": [r.requester_uri for r in self.floor.request_queue],
        }

    def transcript_obj(self, for_uri: Optional[str] = None,
                       since_seq: Optional[int] = None) -> dict:
        entries = []
        for entry in self.floor.transcript:
            if since_seq is not None and entry.seq <= since_seq:
                continue
            if for_uri is None or for_uri == self.convener.uri:
                entries.append(transcript_entry_to_obj(entry))
                continue
            view_obj = self.deliveries[entry.seq].get(for_uri)
            if view_obj is None:
                continue
            entries.append({"seq": entry.seq, "tick": entry.tick, "view": view_obj})
        return {"conversation_id": self.conversation_id, "entries": entries}


class ConversationService:
    """All hosted conversations; recovers persisted ones from the data dir."""

    def __init__(self, data_dir: Optional[Path] = None,
                 default_policy: Optional[ConvenerPolicy] = None):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.default_policy = default_policy or ConvenerPolicy()
        self.hosts: dict[str, ConversationHost] = {}
        if self.data_dir is not None and self.data_dir.exists():
            for meta_path in sorted(self.data_dir.glob("*.meta.json")):
                conversation_id = meta_path.name[: -len(".meta.json")]
                self.hosts[conversation_id] = ConversationHost.recover(
                    conversation_id, self.data_dir
                )

    def create(
        self,
        policy: Optional[ConvenerPolicy] = None,
        *,
        human_uri: Optional[str] = None,
        topic: str = "",
        conversation_id: Optional[str] = None,
        convener_uri: str = DEFAULT_CONVENER_URI,
        members: tuple = (),
    ) -> ConversationHost:
        conversation_id = conversation_id or uuid.uuid4().hex
        if conversation_id in self.hosts:
            raise ParleyError(f"conversation exists: {conversation_id}")
        host = ConversationHost(
            conversation_id,
            policy or self.default_policy,
            data_dir=self.data_dir,
            human_uri=human_uri,
            topic=topic,
            convener_uri=convener_uri,
            members=members,
        )
        self.hosts[conversation_id] = host
        return host

    def host(self, conversation_id: str) -> ConversationHost:
        try:
            return self.hosts[conversation_id]
        except KeyError:
            raise UnknownConversation(conversation_id) from None


def _error_response(status: int, code: str, detail=None) -> JSONResponse:
    body = {"error": code}
    if detail is not None:
        body["detail"] = detail
    return JSONResponse(body, status_code=status)


def create_app(service: Optional[ConversationService] = None,
               data_dir: Optional[Path] = None,
               default_policy: Optional[ConvenerPolicy] = None) -> FastAPI:
    svc = service or ConversationService(data_dir=data_dir, default_policy=default_policy)
    app = FastAPI(title="parley", docs_url=None, redoc_url=None)
    app.state.service = svc

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "conversations": len(svc.hosts)}

    @app.post("/conversations", status_code=201)
    async def create_conversation(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error_response(400, "malformed_body")
        if not isinstance(body, dict):
            return _error_response(400, "malformed_body")
        config_keys = {"policy", "human", "topic", "conversation_id", "convener"}
        if set(body) <= config_keys:
            policy_obj = body.get("policy", {})
            human = body.get("human")
            topic = body.get("topic", "")
            conversation_id = body.get("conversation_id")
            convener_uri = body.get("convener", DEFAULT_CONVENER_URI)
        else:
            # bare policy document
            policy_obj, human, topic, conversation_id = body, None, "", None
            convener_uri = DEFAULT_CONVENER_URI
        try:
            policy = ConvenerPolicy.from_obj(policy_obj)
            host = svc.create(policy, human_uri=human, topic=topic,
                              conversation_id=conversation_id, convener_uri=convener_uri)
        except ParleyError as exc:
            return _error_response(422, "invalid_policy", str(exc))
        return {"conversation_id": host.conversation_id,
                "convener": host.convener.uri}

    @app.get("/conversations/{conversation_id}/participants")
    async def participants(conversation_id: str):
        try:
            host = svc.host(conversation_id)
        except UnknownConversation:
            return _error_response(404, "unknown_conversation")
        return host.participants_obj()

    @app.get("/conversations/{conversation_id}/transcript")
    async def transcript(conversation_id: str,
                         for_uri: Optional[str] = Query(default=None, alias="for"),
                         since: Optional[int] = Query(default=None)):
        try:
            host = svc.host(conversation_id)
        except UnknownConversation:
            return _error_response(404, "unknown_conversation")
        return host.transcript_obj(for_uri=for_uri, since_seq=since)

    @app.post("/conversations/{conversation_id}/submit")
    async def submit(conversation_id: str, request: Request):
        try:
            host = svc.host(conversation_id)
        except UnknownConversation:
            return _error_response(404, "unknown_conversation")
        raw = await request.body()
        try:
            envelope = parse_envelope(raw.decode("utf-8", errors="replace"))
        except ParleyError as exc:
            return _error_response(422, "malformed_envelope", str(exc))
        try:
            seq = await host.submit(envelope)
        except UnknownSender as exc:
            return _error_response(403, "unknown_sender", str(exc))
        except InvalidEnvelope as exc:
            return _error_response(
                422, "invalid_envelope",
                [dataclasses.asdict(v) for v in exc.violations],
            )
        return {"seq": seq}

    @app.websocket("/conversations/{conversation_id}/ws")
    async def websocket_endpoint(websocket: WebSocket, conversation_id: str,
                                 uri: str = Query(...)):
        await websocket.accept()
        try:
            host = svc.host(conversation_id)
        except UnknownConversation:
            await websocket.close(code=CLOSE_UNKNOWN_CONVERSATION,
                                  reason="unknown_conversation")
            return
        try:
            conn = await host.attach(uri)
        except NotInvited:
            await websocket.close(code=CLOSE_NOT_INVITED, reason=REJECT_NOT_INVITED)
            return
        except DuplicateConnection:
            await websocket.close(code=CLOSE_DUPLICATE, reason="duplicate_connection")
            return

        async def pump_outbound():
            while True:
                view_obj = await conn.outbound.get()
                await websocket.send_text(json.dumps(view_obj, separators=(",", ":")))

        sender_task = asyncio.ensure_future(pump_outbound())
        try:
            while True:
                frame = await websocket.receive_text()
                try:
                    envelope = parse_envelope(frame)
                    await host.submit(envelope)
                except (ParleyError, MalformedDocument) as exc:
                    await websocket.close(code=CLOSE_BAD_ENVELOPE, reason=type(exc).__name__)
                    break
        except WebSocketDisconnect:
            pass
        finally:
            sender_task.cancel()
            await host.detach(uri)

    return app


def serve(bind: str, data_dir: Optional[Path], policy: Optional[ConvenerPolicy],
          seed_scenario: Optional[Path] = None, human: Optional[str] = None) -> None:
    """Blocking entry point used by the command line."""
    import uvicorn

    service = ConversationService(data_dir=data_dir, default_policy=policy)
    if seed_scenario is not None:
        seed_from_scenario(service, seed_scenario, human_uri=human)
    app = create_app(service)
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


def seed_from_scenario(service: ConversationService, scenario_path: Path,
                       human_uri: Optional[str] = None) -> ConversationHost:
    """Create a conversation pre-populated by running a scenario in-process.

    The scenario's own transcript is replayed into the host so consoles can
    join a conversation that already has history; the designated human
    defaults to the scenario's human conversant.
    """
    from .agents import run_scenario, scenario_from_file

    scenario = scenario_from_file(scenario_path)
    if human_uri is None:
        for member in scenario.members:
            if member.get("role") == Role.HUMAN_CONVERSANT.value:
                human_uri = member["uri"]
                break
    result = run_scenario(scenario)
    members = tuple(
        (member["uri"], member.get("role", Role.CONVERSANT.value))
        for member in scenario.members
        if member.get("present", True) and member["uri"] != human_uri
    )
    host = service.create(
        scenario.policy,
        human_uri=human_uri,
        topic=scenario.topic,
        conversation_id=scenario.conversation_id,
        convener_uri=scenario.convener_uri,
        members=members,
    )
    host._replaying = True
    try:
        for entry in result.transcript:
            host._route_one(entry.envelope, entry.tick)
    finally:
        host._replaying = False
    if host.log_path is not None:
        with host.log_path.open("w") as fh:
            for entry in result.transcript:
                fh.write(json.dumps(transcript_entry_to_obj(entry),
                                    separators=(",", ":")) + "\n")
    return host
