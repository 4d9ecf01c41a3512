"""Conversation envelope: typed model, parsing, validation, canonical serialization.

Wire format is UTF-8 JSON under a single top-level ``ovon`` object::

    {"ovon": {"schema": {"version": "0.9.2"},
              "conversation": {"id": "..."},
              "sender": {"from": "https://..."},
              "events": [{"to": ..., "eventType": ..., "parameters": {...}}]}}

``to`` may be a single URI string, an array of URIs, or absent (floor-wide).
Event-type strings are matched case-insensitively on input; canonical
spellings are emitted on output. Unknown top-level fields and unknown event
types are preserved so that documents from older or newer peers survive a
parse/serialize round trip.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Mapping, Optional, Union
from urllib.parse import urlparse

from .errors import EmptyEvents, InvalidDocument, MalformedDocument, MissingField

ENVELOPE_ROOT_KEY = "ovon"
SCHEMA_VERSION = "0.9.2"
SUPPORTED_VERSION_PREFIX = "0.9."


class EventType(str, Enum):
    """Catalog of event types. Enum values are the canonical wire spellings."""

    INVITE = "invite"
    UNINVITE = "uninvite"
    UTTERANCE = "utterance"
    WHISPER = "whisper"
    BYE = "bye"
    FLOOR_REQUEST = "Floor_request"
    FLOOR_GRANT = "Floor_grant"
    FLOOR_REVOKE = "Floor_revoke"
    MUTE = "mute"
    UNMUTE = "unmute"
    UTTERANCE_NOTICE = "utterance_notice"
    INVITE_REQUEST = "invite_request"


_EVENT_TYPE_BY_LOWER = {member.value.lower(): member for member in EventType}


def parse_event_type(raw: str) -> Optional[EventType]:
    """Case-insensitive event-type lookup; None if not in the catalog."""
    return _EVENT_TYPE_BY_LOWER.get(raw.strip().lower())


@dataclass(frozen=True)
class DialogEvent:
    """One dialog contribution: who spoke, when, and the text tokens."""

    speaker_id: str
    span_start: str
    tokens: tuple[str, ...]
    text_mime: str = "text/plain"

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


# -- per-type event parameters -------------------------------------------------

@dataclass(frozen=True)
class UtteranceParams:
    dialog_event: DialogEvent
    private: bool = False


@dataclass(frozen=True)
class WhisperParams:
    dialog_event: DialogEvent
    context: Union[str, DialogEvent, None] = None


@dataclass(frozen=True)
class FloorRequestParams:
    request_reason: str
    urgency: Optional[str] = None


@dataclass(frozen=True)
class GrantContext:
    topic: str
    previous_speaker_id: Optional[str] = None


@dataclass(frozen=True)
class FloorGrantParams:
    duration_ms: int
    context: Optional[GrantContext] = None


@dataclass(frozen=True)
class FloorRevokeParams:
    reason: str


@dataclass(frozen=True)
class UninviteParams:
    reason: str


@dataclass(frozen=True)
class InviteParams:
    context: Union[str, DialogEvent, None] = None


@dataclass(frozen=True)
class MuteParams:
    reason: Optional[str] = None


@dataclass(frozen=True)
class UnmuteParams:
    reason: Optional[str] = None


@dataclass(frozen=True)
class ByeParams:
    pass


@dataclass(frozen=True)
class UtteranceNoticeParams:
    """Content-free record that an utterance happened: speaker and time only."""

    speaker_id: str
    span_start: str


@dataclass(frozen=True)
class InviteRequestParams:
    invitee_uri: str
    context: Optional[str] = None


@dataclass(frozen=True)
class UnknownParams:
    """Raw parameters of an event type outside the catalog, kept verbatim."""

    event_type_raw: str
    raw: Mapping[str, Any] = field(default_factory=dict)


EventParameters = Union[
    UtteranceParams,
    WhisperParams,
    FloorRequestParams,
    FloorGrantParams,
    FloorRevokeParams,
    UninviteParams,
    InviteParams,
    MuteParams,
    UnmuteParams,
    ByeParams,
    UtteranceNoticeParams,
    InviteRequestParams,
    UnknownParams,
]

EVENT_PARAM_TYPES: dict[EventType, type] = {
    EventType.UTTERANCE: UtteranceParams,
    EventType.WHISPER: WhisperParams,
    EventType.FLOOR_REQUEST: FloorRequestParams,
    EventType.FLOOR_GRANT: FloorGrantParams,
    EventType.FLOOR_REVOKE: FloorRevokeParams,
    EventType.UNINVITE: UninviteParams,
    EventType.INVITE: InviteParams,
    EventType.MUTE: MuteParams,
    EventType.UNMUTE: UnmuteParams,
    EventType.BYE: ByeParams,
    EventType.UTTERANCE_NOTICE: UtteranceNoticeParams,
    EventType.INVITE_REQUEST: InviteRequestParams,
}


@dataclass(frozen=True)
class Event:
    """A typed action inside an envelope.

    ``event_type`` is None exactly when ``parameters`` is an UnknownParams
    carrying a type string outside the catalog. Empty ``to`` means floor-wide.
    """

    event_type: Optional[EventType]
    parameters: EventParameters
    to: tuple[str, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class EnvelopeDoc:
    """One protocol message: schema version, conversation, sender, events.

    ``extra`` holds unknown keys found inside the root object and ``extra_top``
    unknown siblings of the root key; both re-emit on serialization.
    """

    schema_version: str
    conversation_id: str
    sender_uri: str
    events: tuple[Event, ...]
    extra: Mapping[str, Any] = field(default_factory=dict)
    extra_top: Mapping[str, Any] = field(default_factory=dict)

    def events_of_type(self, event_type: EventType) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.event_type is event_type)


# -- violations ----------------------------------------------------------------

SEVERITY_ERROR = "error"
SEVERITY_WARNING = "warning"


@dataclass(frozen=True)
class Violation:
    rule: str
    path: str
    message: str
    severity: str = SEVERITY_ERROR


_VERSION_RE = re.compile(r"^\d+\.\d+\.\d+$")


def _is_uri(value: str) -> bool:
    parsed = urlparse(value)
    return bool(parsed.scheme) and bool(parsed.netloc or parsed.path)


def _is_timestamp(value: str) -> bool:
    candidate = value.strip()
    if candidate.endswith(("Z", "z")):
        candidate = candidate[:-1] + "+00:00"
    try:
        datetime.fromisoformat(candidate)
    except ValueError:
        return False
    return True


# -- parsing -------------------------------------------------------------------

def _parse_dialog_event(raw: Any) -> DialogEvent:
    """Lenient dialog-event extraction; gaps surface later as violations."""
    if not isinstance(raw, dict):
        return DialogEvent(speaker_id="", span_start="", tokens=())
    span = raw.get("span") or {}
    span_start = ""
    if isinstance(span, dict):
        span_start = str(span.get("startTime") or span.get("start-time") or "")
    features = raw.get("features") or {}
    text_feature = features.get("text") if isinstance(features, dict) else None
    mime = "text/plain"
    tokens: list[str] = []
    if isinstance(text_feature, dict):
        mime = str(text_feature.get("mimeType", "text/plain"))
        raw_tokens = text_feature.get("tokens")
        if isinstance(raw_tokens, list):
            for tok in raw_tokens:
                if isinstance(tok, dict) and "value" in tok:
                    tokens.append(str(tok["value"]))
    return DialogEvent(
        speaker_id=str(raw.get("speakerId", "")),
        span_start=span_start,
        tokens=tuple(tokens),
        text_mime=mime,
    )


def _parse_text_or_dialog(raw: Any) -> Union[str, DialogEvent, None]:
    if raw is None:
        return None
    if isinstance(raw, dict):
        return _parse_dialog_event(raw)
    return str(raw)


def _parse_int(raw: Any, default: int = 0) -> int:
    if isinstance(raw, bool):
        return default
    if isinstance(raw, int):
        return raw
    try:
        return int(raw)
    except (TypeError, ValueError):
        return default


def _parse_optional_str(raw: Any) -> Optional[str]:
    return None if raw is None else str(raw)


def _parse_parameters(event_type: Optional[EventType], raw_type: str, params: dict) -> EventParameters:
    if event_type is None:
        return UnknownParams(event_type_raw=raw_type, raw=params)
    if event_type is EventType.UTTERANCE:
        return UtteranceParams(
            dialog_event=_parse_dialog_event(params.get("dialogEvent")),
            private=bool(params.get("private", False)),
        )
    if event_type is EventType.WHISPER:
        return WhisperParams(
            dialog_event=_parse_dialog_event(params.get("dialogEvent")),
            context=_parse_text_or_dialog(params.get("context")),
        )
    if event_type is EventType.FLOOR_REQUEST:
        return FloorRequestParams(
            request_reason=str(params.get("request_reason", "")),
            urgency=_parse_optional_str(params.get("urgency")),
        )
    if event_type is EventType.FLOOR_GRANT:
        raw_context = params.get("context")
        context = None
        if isinstance(raw_context, dict):
            context = GrantContext(
                topic=str(raw_context.get("topic", "")),
                previous_speaker_id=_parse_optional_str(raw_context.get("previous_speaker_id")),
            )
        return FloorGrantParams(
            duration_ms=_parse_int(params.get("duration_ms"), default=-1),
            context=context,
        )
    if event_type is EventType.FLOOR_REVOKE:
        return FloorRevokeParams(reason=str(params.get("reason", "")))
    if event_type is EventType.UNINVITE:
        return UninviteParams(reason=str(params.get("reason", "")))
    if event_type is EventType.INVITE:
        return InviteParams(context=_parse_text_or_dialog(params.get("context")))
    if event_type is EventType.MUTE:
        return MuteParams(reason=_parse_optional_str(params.get("reason")))
    if event_type is EventType.UNMUTE:
        return UnmuteParams(reason=_parse_optional_str(params.get("reason")))
    if event_type is EventType.BYE:
        return ByeParams()
    if event_type is EventType.UTTERANCE_NOTICE:
        span = params.get("span") or {}
        span_start = ""
        if isinstance(span, dict):
            span_start = str(span.get("startTime") or span.get("start-time") or "")
        return UtteranceNoticeParams(
            speaker_id=str(params.get("speakerId", "")),
            span_start=span_start,
        )
    if event_type is EventType.INVITE_REQUEST:
        return InviteRequestParams(
            invitee_uri=str(params.get("invitee_uri", "")),
            context=_parse_optional_str(params.get("context")),
        )
    raise AssertionError(f"unhandled event type {event_type}")


def _parse_to(raw: Any) -> tuple[str, ...]:
    if raw is None:
        return ()
    if isinstance(raw, str):
        return (raw,)
    if isinstance(raw, list):
        return tuple(str(item) for item in raw)
    return (str(raw),)


def _parse_event(raw: Any, index: int) -> Event:
    if not isinstance(raw, dict):
        raise MalformedDocument(f"events[{index}] is not an object")
    if "eventType" not in raw:
        raise MissingField(f"events[{index}].eventType")
    raw_type = str(raw["eventType"])
    event_type = parse_event_type(raw_type)
    raw_params = raw.get("parameters")
    params = raw_params if isinstance(raw_params, dict) else {}
    extra = {k: v for k, v in raw.items() if k not in ("to", "eventType", "parameters")}
    return Event(
        event_type=event_type,
        parameters=_parse_parameters(event_type, raw_type, params),
        to=_parse_to(raw.get("to")),
        extra=extra,
    )


def parse_envelope(text: str) -> EnvelopeDoc:
    """Parse serialized envelope text into a typed EnvelopeDoc.

    Raises MalformedDocument, MissingField, or EmptyEvents. Parameter-level
    defects do not raise; validate_envelope reports them as violations.
    """
    try:
        root = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(root, dict) or not isinstance(root.get(ENVELOPE_ROOT_KEY), dict):
        raise MalformedDocument(f"no '{ENVELOPE_ROOT_KEY}' root object")
    body = root[ENVELOPE_ROOT_KEY]

    schema = body.get("schema")
    if not isinstance(schema, dict) or "version" not in schema:
        raise MissingField("schema.version")
    conversation = body.get("conversation")
    if not isinstance(conversation, dict) or "id" not in conversation:
        raise MissingField("conversation.id")
    sender = body.get("sender")
    if not isinstance(sender, dict) or "from" not in sender:
        raise MissingField("sender.from")
    raw_events = body.get("events")
    if raw_events is None:
        raise MissingField("events")
    if not isinstance(raw_events, list):
        raise MalformedDocument("events is not an array")
    if not raw_events:
        raise EmptyEvents("envelope carries no events")

    return EnvelopeDoc(
        schema_version=str(schema["version"]),
        conversation_id=str(conversation["id"]),
        sender_uri=str(sender["from"]),
        events=tuple(_parse_event(raw, i) for i, raw in enumerate(raw_events)),
        extra={k: v for k, v in body.items() if k not in ("schema", "conversation", "sender", "events")},
        extra_top={k: v for k, v in root.items() if k != ENVELOPE_ROOT_KEY},
    )


# -- validation ----------------------------------------------------------------

def _check_dialog_event(de: DialogEvent, path: str, out: list[Violation], *, require_tokens: bool) -> None:
    if not de.speaker_id:
        out.append(Violation("MISSING_PARAM", f"{path}.speakerId", "speakerId is required"))
    if require_tokens and not de.tokens:
        out.append(Violation("EMPTY_TOKENS", f"{path}.features.text.tokens", "tokens must be non-empty"))
    if not de.span_start or not _is_timestamp(de.span_start):
        out.append(Violation("BAD_TIMESTAMP", f"{path}.span.startTime", f"not an ISO-8601 timestamp: {de.span_start!r}"))


def _check_event(event: Event, path: str, out: list[Violation]) -> None:
    for j, uri in enumerate(event.to):
        if not uri:
            out.append(Violation("BAD_URI", f"{path}.to[{j}]", "recipient URI is empty"))

    if event.event_type is None:
        assert isinstance(event.parameters, UnknownParams)
        out.append(
            Violation(
                "UNKNOWN_EVENT_TYPE",
                f"{path}.eventType",
                f"event type {event.parameters.event_type_raw!r} is not in the catalog",
                severity=SEVERITY_WARNING,
            )
        )
        return

    expected = EVENT_PARAM_TYPES[event.event_type]
    if type(event.parameters) is not expected:
        out.append(
            Violation(
                "PARAM_SHAPE_MISMATCH",
                f"{path}.parameters",
                f"{event.event_type.value} requires {expected.__name__}, "
                f"got {type(event.parameters).__name__}",
            )
        )
        return

    params = event.parameters
    ppath = f"{path}.parameters"
    if isinstance(params, UtteranceParams):
        _check_dialog_event(params.dialog_event, f"{ppath}.dialogEvent", out, require_tokens=True)
    elif isinstance(params, WhisperParams):
        _check_dialog_event(params.dialog_event, f"{ppath}.dialogEvent", out, require_tokens=True)
        if isinstance(params.context, DialogEvent):
            _check_dialog_event(params.context, f"{ppath}.context", out, require_tokens=True)
    elif isinstance(params, FloorRequestParams):
        if not params.request_reason:
            out.append(Violation("MISSING_PARAM", f"{ppath}.request_reason", "request_reason is required"))
    elif isinstance(params, FloorGrantParams):
        if params.duration_ms < 0:
            out.append(
                Violation("NEGATIVE_DURATION", f"{ppath}.duration_ms", "duration_ms must be a non-negative integer")
            )
    elif isinstance(params, (FloorRevokeParams, UninviteParams)):
        if not params.reason:
            out.append(Violation("MISSING_PARAM", f"{ppath}.reason", "reason is required"))
    elif isinstance(params, InviteParams):
        if isinstance(params.context, DialogEvent):
            _check_dialog_event(params.context, f"{ppath}.context", out, require_tokens=True)
    elif isinstance(params, UtteranceNoticeParams):
        if not params.speaker_id:
            out.append(Violation("MISSING_PARAM", f"{ppath}.speakerId", "speakerId is required"))
        if not params.span_start or not _is_timestamp(params.span_start):
            out.append(Violation("BAD_TIMESTAMP", f"{ppath}.span.startTime", "not an ISO-8601 timestamp"))
    elif isinstance(params, InviteRequestParams):
        if not params.invitee_uri:
            out.append(Violation("MISSING_PARAM", f"{ppath}.invitee_uri", "invitee_uri is required"))
        elif not _is_uri(params.invitee_uri):
            out.append(Violation("BAD_URI", f"{ppath}.invitee_uri", f"not a URI: {params.invitee_uri!r}"))


def validate_envelope(doc: EnvelopeDoc) -> list[Violation]:
    """Check every envelope invariant; returns violations (empty when clean)."""
    out: list[Violation] = []
    if not _VERSION_RE.match(doc.schema_version):
        out.append(
            Violation("MALFORMED_SCHEMA_VERSION", "schema.version", f"not MAJOR.MINOR.PATCH: {doc.schema_version!r}")
        )
    elif not doc.schema_version.startswith(SUPPORTED_VERSION_PREFIX):
        out.append(
            Violation(
                "UNSUPPORTED_SCHEMA_VERSION",
                "schema.version",
                f"expected {SUPPORTED_VERSION_PREFIX}x, got {doc.schema_version}",
                severity=SEVERITY_WARNING,
            )
        )
    if not doc.conversation_id:
        out.append(Violation("EMPTY_CONVERSATION_ID", "conversation.id", "conversation id is empty"))
    if not doc.sender_uri:
        out.append(Violation("EMPTY_SENDER", "sender.from", "sender is empty"))
    elif not _is_uri(doc.sender_uri):
        out.append(Violation("SENDER_NOT_URI", "sender.from", f"not a URI: {doc.sender_uri!r}"))
    if not doc.events:
        out.append(Violation("EMPTY_EVENTS", "events", "events must be non-empty"))
    for i, event in enumerate(doc.events):
        _check_event(event, f"events[{i}]", out)
    return out


def has_errors(violations: list[Violation]) -> bool:
    return any(v.severity == SEVERITY_ERROR for v in violations)


# -- serialization ---------------------------------------------------------------

def _dialog_event_obj(de: DialogEvent) -> dict:
    return {
        "speakerId": de.speaker_id,
        "span": {"startTime": de.span_start},
        "features": {
            "text": {
                "mimeType": de.text_mime,
                "tokens": [{"value": v} for v in de.tokens],
            }
        },
    }


def _context_obj(context: Union[str, DialogEvent, None]) -> Any:
    if isinstance(context, DialogEvent):
        return _dialog_event_obj(context)
    return context


def _parameters_obj(params: EventParameters) -> dict:
    if isinstance(params, UtteranceParams):
        obj: dict[str, Any] = {"dialogEvent": _dialog_event_obj(params.dialog_event)}
        if params.private:
            obj["private"] = True
        return obj
    if isinstance(params, WhisperParams):
        obj = {"dialogEvent": _dialog_event_obj(params.dialog_event)}
        if params.context is not None:
            obj["context"] = _context_obj(params.context)
        return obj
    if isinstance(params, FloorRequestParams):
        obj = {"request_reason": params.request_reason}
        if params.urgency is not None:
            obj["urgency"] = params.urgency
        return obj
    if isinstance(params, FloorGrantParams):
        obj = {"duration_ms": params.duration_ms}
        if params.context is not None:
            ctx: dict[str, Any] = {}
            if params.context.previous_speaker_id is not None:
                ctx["previous_speaker_id"] = params.context.previous_speaker_id
            ctx["topic"] = params.context.topic
            obj["context"] = ctx
        return obj
    if isinstance(params, (FloorRevokeParams, UninviteParams)):
        return {"reason": params.reason}
    if isinstance(params, InviteParams):
        return {} if params.context is None else {"context": _context_obj(params.context)}
    if isinstance(params, (MuteParams, UnmuteParams)):
        return {} if params.reason is None else {"reason": params.reason}
    if isinstance(params, ByeParams):
        return {}
    if isinstance(params, UtteranceNoticeParams):
        return {"speakerId": params.speaker_id, "span": {"startTime": params.span_start}}
    if isinstance(params, InviteRequestParams):
        obj = {"invitee_uri": params.invitee_uri}
        if params.context is not None:
            obj["context"] = params.context
        return obj
    if isinstance(params, UnknownParams):
        return dict(params.raw)
    raise AssertionError(f"unhandled parameters {type(params)}")


def _event_obj(event: Event) -> dict:
    obj: dict[str, Any] = {}
    if len(event.to) == 1:
        obj["to"] = event.to[0]
    elif event.to:
        obj["to"] = list(event.to)
    if event.event_type is not None:
        obj["eventType"] = event.event_type.value
    else:
        assert isinstance(event.parameters, UnknownParams)
        obj["eventType"] = event.parameters.event_type_raw
    obj["parameters"] = _parameters_obj(event.parameters)
    for key in sorted(event.extra):
        obj[key] = event.extra[key]
    return obj


def envelope_to_obj(doc: EnvelopeDoc) -> dict:
    """The envelope as a plain JSON-ready object in canonical field order."""
    body: dict[str, Any] = {
        "schema": {"version": doc.schema_version},
        "conversation": {"id": doc.conversation_id},
        "sender": {"from": doc.sender_uri},
        "events": [_event_obj(e) for e in doc.events],
    }
    for key in sorted(doc.extra):
        body[key] = doc.extra[key]
    root: dict[str, Any] = {ENVELOPE_ROOT_KEY: body}
    for key in sorted(doc.extra_top):
        root[key] = doc.extra_top[key]
    return root


def serialize_envelope(doc: EnvelopeDoc) -> str:
    """Canonical serialization; raises InvalidDocument on error-level violations.

    Output is deterministic: fixed field order, canonical event-type casing,
    single-recipient ``to`` emitted as a string, ``startTime`` span key.
    """
    violations = [v for v in validate_envelope(doc) if v.severity == SEVERITY_ERROR]
    if violations:
        raise InvalidDocument(violations)
    return json.dumps(envelope_to_obj(doc), ensure_ascii=False, separators=(",", ":"))


# -- builders --------------------------------------------------------------------

_TICK_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def tick_timestamp(tick: int) -> str:
    """Deterministic span timestamp for synthesized events: fixed epoch + tick ms."""
    return (_TICK_EPOCH + timedelta(milliseconds=tick)).isoformat().replace("+00:00", "Z")


def make_envelope(conversation_id: str, sender_uri: str, events: list[Event]) -> EnvelopeDoc:
    return EnvelopeDoc(
        schema_version=SCHEMA_VERSION,
        conversation_id=conversation_id,
        sender_uri=sender_uri,
        events=tuple(events),
    )


def utterance_event(text: str, speaker_id: str, span_start: str, to: tuple[str, ...] = (),
                    private: bool = False) -> Event:
    return Event(
        event_type=EventType.UTTERANCE,
        parameters=UtteranceParams(
            dialog_event=DialogEvent(speaker_id=speaker_id, span_start=span_start, tokens=(text,)),
            private=private,
        ),
        to=to,
    )


def whisper_event(text: str, speaker_id: str, span_start: str, to: tuple[str, ...],
                  context: Union[str, DialogEvent, None] = None) -> Event:
    return Event(
        event_type=EventType.WHISPER,
        parameters=WhisperParams(
            dialog_event=DialogEvent(speaker_id=speaker_id, span_start=span_start, tokens=(text,)),
            context=context,
        ),
        to=to,
    )


def floor_request_event(reason: str, to: tuple[str, ...], urgency: Optional[str] = None) -> Event:
    return Event(
        event_type=EventType.FLOOR_REQUEST,
        parameters=FloorRequestParams(request_reason=reason, urgency=urgency),
        to=to,
    )


def floor_grant_event(to: tuple[str, ...], duration_ms: int,
                      context: Optional[GrantContext] = None) -> Event:
    return Event(
        event_type=EventType.FLOOR_GRANT,
        parameters=FloorGrantParams(duration_ms=duration_ms, context=context),
        to=to,
    )


def floor_revoke_event(to: tuple[str, ...], reason: str) -> Event:
    return Event(event_type=EventType.FLOOR_REVOKE, parameters=FloorRevokeParams(reason=reason), to=to)


def invite_event(to: tuple[str, ...], context: Union[str, DialogEvent, None] = None) -> Event:
    return Event(event_type=EventType.INVITE, parameters=InviteParams(context=context), to=to)


def uninvite_event(to: tuple[str, ...], reason: str) -> Event:
    return Event(event_type=EventType.UNINVITE, parameters=UninviteParams(reason=reason), to=to)


def mute_event(to: tuple[str, ...], reason: Optional[str] = None) -> Event:
    return Event(event_type=EventType.MUTE, parameters=MuteParams(reason=reason), to=to)


def unmute_event(to: tuple[str, ...], reason: Optional[str] = None) -> Event:
    return Event(event_type=EventType.UNMUTE, parameters=UnmuteParams(reason=reason), to=to)


def bye_event(to: tuple[str, ...] = ()) -> Event:
    return Event(event_type=EventType.BYE, parameters=ByeParams(), to=to)


def invite_request_event(invitee_uri: str, to: tuple[str, ...],
                         context: Optional[str] = None) -> Event:
    return Event(
        event_type=EventType.INVITE_REQUEST,
        parameters=InviteRequestParams(invitee_uri=invitee_uri, context=context),
        to=to,
    )


def notice_event(source: Event) -> Event:
    """Content-free view of an utterance event: speaker and start time survive."""
    assert isinstance(source.parameters, UtteranceParams)
    de = source.parameters.dialog_event
    return Event(
        event_type=EventType.UTTERANCE_NOTICE,
        parameters=UtteranceNoticeParams(speaker_id=de.speaker_id, span_start=de.span_start),
        to=source.to,
    )
