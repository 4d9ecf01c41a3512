"""Neutral routing layer: who receives what, with mute and privacy enforced.

route() is a pure function from (Floor, envelope) to (DeliveryPlan, Floor).
It owns every mechanical state change an envelope implies - membership on
invite/uninvite/bye, lease on grant/revoke, mute set, request queue - so a
recorded envelope log replays to an identical Floor with no policy involved.
The convener never appears in plan entries; it always receives the unredacted
convener_copy instead.

Visibility rules, per event:
  public utterance      -> every participant except the sender ("to" only marks
                           addressees); non-holder senders are flagged, and in
                           strict mode their utterances reach the convener only
  private utterance     -> full content to the "to" list; everyone else gets a
                           content-free utterance_notice
  utterance, muted      -> nobody; convener copy retained; drop flagged
  whisper               -> the "to" list only, floor state irrelevant
  Floor_request, bye,
  invite_request        -> convener only
  convener control      -> named recipients, plus the floor-state side effect
  non-convener control  -> nobody; unauthorized flag raised
  unknown event type    -> convener only
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .envelope import (
    EnvelopeDoc,
    Event,
    EventType,
    FloorGrantParams,
    FloorRequestParams,
    UtteranceParams,
    WhisperParams,
    notice_event,
    validate_envelope,
)
from .errors import InvalidEnvelope, NothingToRedact, UnknownSender
from .floor import Floor, PendingRequest, Role


class SignalKind(str, Enum):
    LEASE_EXPIRED = "lease_expired"
    LEASE_VACATED = "lease_vacated"
    UNAUTHORIZED_INVITE = "unauthorized_invite"
    NON_HOLDER_UTTERANCE = "non_holder_utterance"
    MUTED_UTTERANCE_DROPPED = "muted_utterance_dropped"


@dataclass(frozen=True)
class ControlSignal:
    kind: SignalKind
    subject_uri: str
    tick: int


@dataclass(frozen=True)
class RoutingConfig:
    strict_floor: bool = False
    max_queue_len: int = 16
    default_grant_ms: int = 60000


@dataclass(frozen=True)
class DeliveryPlan:
    entries: tuple[tuple[str, EnvelopeDoc], ...]
    convener_copy: EnvelopeDoc
    signals: tuple[ControlSignal, ...] = ()
    dropped: bool = False

    def recipients(self) -> tuple[str, ...]:
        return tuple(r for r, _ in self.entries)

    def view_for(self, uri: str) -> Optional[EnvelopeDoc]:
        for recipient, view in self.entries:
            if recipient == uri:
                return view
        return None


_CONTROL_EVENTS = frozenset(
    {
        EventType.FLOOR_GRANT,
        EventType.FLOOR_REVOKE,
        EventType.MUTE,
        EventType.UNMUTE,
        EventType.INVITE,
        EventType.UNINVITE,
    }
)

_CONVENER_ONLY_EVENTS = frozenset(
    {EventType.FLOOR_REQUEST, EventType.INVITE_REQUEST, EventType.BYE}
)


def redact(envelope: EnvelopeDoc) -> EnvelopeDoc:
    """Content-free view: utterances become notices, everything else is cut."""
    notices = [
        notice_event(e)
        for e in envelope.events
        if e.event_type is EventType.UTTERANCE and isinstance(e.parameters, UtteranceParams)
    ]
    if not notices:
        raise NothingToRedact(envelope.conversation_id)
    return replace(envelope, events=tuple(notices))


def tick_expiry(floor: Floor, now_tick: int) -> list[ControlSignal]:
    """Expiry probe: reports, never revokes; revocation is policy's call."""
    holder = floor.holder
    if holder is not None and now_tick >= holder.expires_at_tick:
        return [ControlSignal(SignalKind.LEASE_EXPIRED, holder.holder_uri, now_tick)]
    return []


def _attached_whisper(envelope: EnvelopeDoc, convener_uri: str):
    """A whisper to the convener riding along a Floor_request carries context."""
    for event in envelope.events:
        if event.event_type is EventType.WHISPER and convener_uri in event.to:
            assert isinstance(event.parameters, WhisperParams)
            return event.parameters.dialog_event
    return None


class _PlanBuilder:
    def __init__(self, sender: str, convener: str):
        self.sender = sender
        self.convener = convener
        self.full: dict[str, list[Event]] = {}
        self.notice: dict[str, list[Event]] = {}

    def deliver_full(self, recipients, event: Event) -> None:
        for uri in recipients:
            if uri in (self.sender, self.convener):
                continue
            self.full.setdefault(uri, []).append(event)

    def deliver_notice(self, recipients, event: Event) -> None:
        stand_in = notice_event(event)
        for uri in recipients:
            if uri in (self.sender, self.convener):
                continue
            self.notice.setdefault(uri, []).append(stand_in)

    def views(self, template: EnvelopeDoc) -> tuple[tuple[str, EnvelopeDoc], ...]:
        entries = []
        for uri in sorted(set(self.full) | set(self.notice)):
            ordered: list[tuple[int, Event]] = []
            # preserve original event order across full and notice pieces
            for ev in self.full.get(uri, ()):
                ordered.append((self._index(template, ev, full=True), ev))
            for ev in self.notice.get(uri, ()):
                ordered.append((self._index(template, ev, full=False), ev))
            ordered.sort(key=lambda pair: pair[0])
            view = replace(template, events=tuple(ev for _, ev in ordered))
            entries.append((uri, view))
        return tuple(entries)

    def _index(self, template: EnvelopeDoc, event: Event, full: bool) -> int:
        if full:
            return template.events.index(event)
        # notice stand-ins match their source by speaker and span
        for i, source in enumerate(template.events):
            if source.event_type is EventType.UTTERANCE and isinstance(
                source.parameters, UtteranceParams
            ):
                de = source.parameters.dialog_event
                if (de.speaker_id, de.span_start) == (
                    event.parameters.speaker_id,
                    event.parameters.span_start,
                ):
                    return i
        return len(template.events)


def route(
    floor: Floor,
    envelope: EnvelopeDoc,
    now_tick: int,
    config: RoutingConfig = RoutingConfig(),
) -> tuple[DeliveryPlan, Floor]:
    """Apply the visibility table to one envelope; returns (plan, new floor).

    The returned floor has the envelope recorded on its transcript with the
    plan's delivered_to/redacted_for/dropped sets, and every mechanical state
    change already applied.
    """
    sender = envelope.sender_uri
    if not floor.is_participant(sender):
        raise UnknownSender(sender)
    errors = [v for v in validate_envelope(envelope) if v.severity == "error"]
    if errors:
        raise InvalidEnvelope(errors)

    state = floor.advance(now_tick)
    convener = state.convener_uri
    from_convener = sender == convener
    builder = _PlanBuilder(sender, convener)
    signals: list[ControlSignal] = []
    any_drop = False

    for event in envelope.events:
        kind = event.event_type

        if kind is EventType.UTTERANCE:
            if sender in state.mute_set:
                any_drop = True
                signals.append(ControlSignal(SignalKind.MUTED_UTTERANCE_DROPPED, sender, now_tick))
                continue
            holder = state.holder
            is_holder = holder is not None and holder.holder_uri == sender
            if not is_holder:
                signals.append(ControlSignal(SignalKind.NON_HOLDER_UTTERANCE, sender, now_tick))
                if config.strict_floor:
                    continue
            assert isinstance(event.parameters, UtteranceParams)
            others = [u for u in state.participants if u != sender]
            if event.parameters.private:
                named = [u for u in event.to if state.is_participant(u)]
                builder.deliver_full(named, event)
                builder.deliver_notice([u for u in others if u not in event.to], event)
            else:
                builder.deliver_full(others, event)

        elif kind is EventType.WHISPER:
            builder.deliver_full([u for u in event.to if state.is_participant(u)], event)

        elif kind in _CONVENER_ONLY_EVENTS or kind is None or kind is EventType.UTTERANCE_NOTICE:
            if kind is EventType.FLOOR_REQUEST and not from_convener:
                assert isinstance(event.parameters, FloorRequestParams)
                already_queued = state.queued_request(sender) is not None
                if already_queued or len(state.request_queue) < config.max_queue_len:
                    state = state.enqueue_request(
                        PendingRequest(
                            requester_uri=sender,
                            request_reason=event.parameters.request_reason,
                            urgency=event.parameters.urgency,
                            enqueued_at_tick=now_tick,
                            attached_whisper=_attached_whisper(envelope, convener),
                        )
                    )
            elif kind is EventType.BYE and not from_convener:
                held = state.holder is not None and state.holder.holder_uri == sender
                state = state.leave(sender)
                if held:
                    signals.append(ControlSignal(SignalKind.LEASE_VACATED, sender, now_tick))
            # convener-only audience: the copy suffices, no entries

        elif kind in _CONTROL_EVENTS:
            if not from_convener:
                signals.append(ControlSignal(SignalKind.UNAUTHORIZED_INVITE, sender, now_tick))
                continue
            state, delivered = _apply_control(state, event, now_tick, config, signals)
            builder.deliver_full(delivered, event)

        else:  # pragma: no cover - catalog is closed above
            raise AssertionError(f"unrouted event type {kind}")

    entries = builder.views(envelope)
    delivered_to = {uri for uri, _ in entries if builder.full.get(uri)} | {convener}
    redacted_for = {uri for uri, _ in entries if not builder.full.get(uri)}
    dropped = any_drop and not entries

    state = state.record(
        envelope,
        delivered_to=delivered_to,
        redacted_for=redacted_for,
        dropped=dropped,
    )
    plan = DeliveryPlan(
        entries=entries,
        convener_copy=envelope,
        signals=tuple(signals),
        dropped=dropped,
    )
    return plan, state


def _apply_control(
    state: Floor,
    event: Event,
    now_tick: int,
    config: RoutingConfig,
    signals: list[ControlSignal],
) -> tuple[Floor, list[str]]:
    """State effects of a convener control event; returns deliverable URIs."""
    kind = event.event_type
    delivered: list[str] = []

    if kind is EventType.INVITE:
        for uri in event.to:
            if not state.is_participant(uri):
                state = state.join(uri, Role.CONVERSANT)
            delivered.append(uri)
        return state, delivered

    if kind is EventType.UNINVITE:
        for uri in event.to:
            if state.is_participant(uri) and uri != state.convener_uri:
                held = state.holder is not None and state.holder.holder_uri == uri
                state = state.leave(uri)
                if held:
                    signals.append(ControlSignal(SignalKind.LEASE_VACATED, uri, now_tick))
                delivered.append(uri)
        return state, delivered

    if kind is EventType.FLOOR_GRANT:
        assert isinstance(event.parameters, FloorGrantParams)
        for uri in event.to:
            if state.is_participant(uri):
                delivered.append(uri)
        grantee = next(iter(delivered), None)
        if grantee is not None and state.holder is None:
            duration = event.parameters.duration_ms
            if duration <= 0:
                duration = config.default_grant_ms
            state = state.set_lease(grantee, duration)
            state = state.remove_request(grantee)
        return state, delivered

    if kind is EventType.FLOOR_REVOKE:
        for uri in event.to:
            if state.is_participant(uri):
                delivered.append(uri)
            if state.holder is not None and state.holder.holder_uri == uri:
                state = state.clear_lease()
        return state, delivered

    if kind is EventType.MUTE:
        for uri in event.to:
            if state.is_participant(uri):
                delivered.append(uri)
                if uri not in state.mute_set:
                    state = state.mute(uri)
        return state, delivered

    if kind is EventType.UNMUTE:
        for uri in event.to:
            if state.is_participant(uri):
                delivered.append(uri)
                if uri in state.mute_set:
                    state = state.unmute(uri)
        return state, delivered

    raise AssertionError(f"not a control event: {kind}")  # pragma: no cover
