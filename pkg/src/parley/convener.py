"""Convener: the policy side of floor control.

The routing layer owns mechanism (queueing, lease state, membership); the
convener owns choices: who gets the floor next, for how long, who gets
invited, ejected, or muted. It consumes the copies and signals the router
produces and answers with decisions carrying ready-to-route envelopes. Its
behavior is a deterministic function of (state, policy, input, tick).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .envelope import (
    DialogEvent,
    EnvelopeDoc,
    EventType,
    FloorRequestParams,
    GrantContext,
    InviteRequestParams,
    floor_grant_event,
    floor_revoke_event,
    invite_event,
    make_envelope,
    mute_event,
    tick_timestamp,
    uninvite_event,
    unmute_event,
    whisper_event,
)
from .errors import (
    AlreadyMuted,
    AlreadyParticipant,
    CannotRemoveConvener,
    HolderOccupied,
    InvalidPolicy,
    NoHolder,
    NotMuted,
    UnknownParticipant,
)
from .floor import Floor, PendingRequest
from .routing import ControlSignal, RoutingConfig, SignalKind

REASON_EXCEEDED_TIME_LIMIT = "exceeded_time_limit"
REASON_QUEUE_FULL = "queue_full"

DEFAULT_PRIORITIES = {"emergency": 3, "question": 2, "interjection": 1}


@dataclass(frozen=True)
class ConvenerPolicy:
    """Arbitration knobs. Priority values here are this package's defaults;
    deployments override them in the policy file."""

    default_grant_ms: int = 60000
    priority_table: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_PRIORITIES))
    default_priority: int = 0
    queue_discipline: str = "fifo_within_priority"
    max_queue_len: int = 16
    strict_floor: bool = False
    auto_grant_when_idle: bool = True

    def priority_of(self, request_reason: str) -> int:
        return self.priority_table.get(request_reason, self.default_priority)

    def routing_config(self) -> RoutingConfig:
        return RoutingConfig(
            strict_floor=self.strict_floor,
            max_queue_len=self.max_queue_len,
            default_grant_ms=self.default_grant_ms,
        )

    @staticmethod
    def from_obj(obj: dict) -> "ConvenerPolicy":
        if not isinstance(obj, dict):
            raise InvalidPolicy("policy document must be an object")
        known = {"default_grant_ms", "priorities", "default_priority",
                 "queue_discipline", "max_queue_len", "strict_floor",
                 "auto_grant_when_idle"}
        unknown = set(obj) - known
        if unknown:
            raise InvalidPolicy(f"unknown policy keys: {sorted(unknown)}")
        policy = ConvenerPolicy(
            default_grant_ms=int(obj.get("default_grant_ms", 60000)),
            priority_table=dict(obj.get("priorities", DEFAULT_PRIORITIES)),
            default_priority=int(obj.get("default_priority", 0)),
            queue_discipline=str(obj.get("queue_discipline", "fifo_within_priority")),
            max_queue_len=int(obj.get("max_queue_len", 16)),
            strict_floor=bool(obj.get("strict_floor", False)),
            auto_grant_when_idle=bool(obj.get("auto_grant_when_idle", True)),
        )
        policy.check()
        return policy

    @staticmethod
    def from_file(path: Union[str, Path]) -> "ConvenerPolicy":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidPolicy(f"cannot read policy file {path}: {exc}") from exc
        return ConvenerPolicy.from_obj(obj)

    def to_obj(self) -> dict:
        return {
            "default_grant_ms": self.default_grant_ms,
            "priorities": dict(self.priority_table),
            "default_priority": self.default_priority,
            "queue_discipline": self.queue_discipline,
            "max_queue_len": self.max_queue_len,
            "strict_floor": self.strict_floor,
            "auto_grant_when_idle": self.auto_grant_when_idle,
        }

    def check(self) -> None:
        if self.default_grant_ms <= 0:
            raise InvalidPolicy("default_grant_ms must be positive")
        if self.max_queue_len < 1:
            raise InvalidPolicy("max_queue_len must be at least 1")
        if self.queue_discipline != "fifo_within_priority":
            raise InvalidPolicy(f"unsupported queue_discipline: {self.queue_discipline}")
        for reason, value in self.priority_table.items():
            if not isinstance(value, int):
                raise InvalidPolicy(f"priority for {reason!r} must be an integer")


def request_order_key(policy: ConvenerPolicy, request: PendingRequest):
    """Total arbitration order: priority desc, then enqueue tick, then URI."""
    return (-policy.priority_of(request.request_reason),
            request.enqueued_at_tick,
            request.requester_uri)


def next_in_queue(policy: ConvenerPolicy, floor: Floor) -> Optional[PendingRequest]:
    if not floor.request_queue:
        return None
    return min(floor.request_queue, key=lambda r: request_order_key(policy, r))


@dataclass(frozen=True)
class ConvenerState:
    topic: str = ""
    last_holder_uri: Optional[str] = None


class DecisionKind(str, Enum):
    GRANT = "grant"
    ENQUEUE = "enqueue"
    DENY = "deny"
    REVOKE = "revoke"
    INVITE = "invite"
    UNINVITE = "uninvite"
    MUTE = "mute"
    UNMUTE = "unmute"
    IGNORE = "ignore"


@dataclass(frozen=True)
class ConvenerDecision:
    kind: DecisionKind
    subject_uri: str
    emitted_envelopes: tuple[EnvelopeDoc, ...] = ()


_IGNORE = ConvenerDecision(DecisionKind.IGNORE, "")


class ConvenerAgent:
    """Stateful policy agent for one conversation."""

    def __init__(self, uri: str, policy: ConvenerPolicy = ConvenerPolicy(),
                 topic: str = "", context_window_size: int = 5):
        self.uri = uri
        self.policy = policy
        self.state = ConvenerState(topic=topic)
        self.context_window_size = context_window_size

    # -- emission helpers -------------------------------------------------------

    def grant_floor(self, requester: str, floor: Floor,
                    duration_ms: Optional[int] = None) -> EnvelopeDoc:
        """Floor_grant envelope; also advances the previous-speaker memory."""
        if floor.holder is not None:
            raise HolderOccupied(floor.holder.holder_uri)
        if not floor.is_participant(requester):
            raise UnknownParticipant(requester)
        context = GrantContext(
            topic=self.state.topic,
            previous_speaker_id=self.state.last_holder_uri,
        )
        self.state = replace(self.state, last_holder_uri=requester)
        return make_envelope(floor.conversation_id, self.uri, [
            floor_grant_event(
                (requester,),
                duration_ms=duration_ms or self.policy.default_grant_ms,
                context=context,
            )
        ])

    def revoke_floor(self, floor: Floor, reason: str) -> EnvelopeDoc:
        if floor.holder is None:
            raise NoHolder(floor.conversation_id)
        return make_envelope(floor.conversation_id, self.uri, [
            floor_revoke_event((floor.holder.holder_uri,), reason=reason)
        ])

    def invite(self, invitees: Union[str, Sequence[str]], floor: Floor,
               context: Optional[str] = None,
               variant: str = "convener_initiated") -> list[EnvelopeDoc]:
        """One envelope per invitee; a conference is N individual invites."""
        targets = [invitees] if isinstance(invitees, str) else list(invitees)
        for target in targets:
            if floor.is_participant(target):
                raise AlreadyParticipant(target)
        text = context if context is not None else self._digest(floor)
        return [
            make_envelope(floor.conversation_id, self.uri,
                          [invite_event((target,), context=text or None)])
            for target in targets
        ]

    def uninvite(self, target: str, floor: Floor, reason: str) -> EnvelopeDoc:
        if not floor.is_participant(target):
            raise UnknownParticipant(target)
        if target == floor.convener_uri:
            raise CannotRemoveConvener(target)
        return make_envelope(floor.conversation_id, self.uri,
                             [uninvite_event((target,), reason=reason)])

    def mute_agent(self, target: str, floor: Floor,
                   reason: Optional[str] = None) -> EnvelopeDoc:
        if not floor.is_participant(target):
            raise UnknownParticipant(target)
        if target in floor.mute_set:
            raise AlreadyMuted(target)
        return make_envelope(floor.conversation_id, self.uri,
                             [mute_event((target,), reason=reason)])

    def unmute_agent(self, target: str, floor: Floor) -> EnvelopeDoc:
        if not floor.is_participant(target):
            raise UnknownParticipant(target)
        if target not in floor.mute_set:
            raise NotMuted(target)
        return make_envelope(floor.conversation_id, self.uri,
                             [unmute_event((target,))])

    def _digest(self, floor: Floor) -> str:
        window = floor.context_window(self.uri, self.context_window_size)
        return "; ".join(f"{de.speaker_id}: {de.text}" for de in window)

    def _deny(self, requester: str, floor: Floor, reason: str, tick: int) -> EnvelopeDoc:
        return make_envelope(floor.conversation_id, self.uri, [
            whisper_event(
                f"Floor request denied: {reason}",
                speaker_id=self.uri,
                span_start=tick_timestamp(tick),
                to=(requester,),
            )
        ])

    # -- decision dispatch ----------------------------------------------------------

    def on_signal_or_copy(self, inbound: Union[EnvelopeDoc, ControlSignal],
                          floor: Floor, now_tick: int) -> ConvenerDecision:
        if isinstance(inbound, ControlSignal):
            return self._on_signal(inbound, floor, now_tick)
        return self._on_copy(inbound, floor, now_tick)

    def _on_copy(self, envelope: EnvelopeDoc, floor: Floor, now_tick: int) -> ConvenerDecision:
        if envelope.sender_uri == self.uri:
            return _IGNORE
        for event in envelope.events:
            if event.event_type is EventType.FLOOR_REQUEST:
                assert isinstance(event.parameters, FloorRequestParams)
                return self.handle_floor_request(envelope.sender_uri, floor, now_tick)
            if event.event_type is EventType.INVITE_REQUEST:
                assert isinstance(event.parameters, InviteRequestParams)
                return self._handle_invite_request(event.parameters, floor)
        return _IGNORE

    def handle_floor_request(self, requester: str, floor: Floor,
                             now_tick: int) -> ConvenerDecision:
        """The floor snapshot is post-routing: the request is already queued
        unless the queue was full, or the requester already holds the lease."""
        if floor.holder is not None and floor.holder.holder_uri == requester:
            return ConvenerDecision(DecisionKind.IGNORE, requester)
        queued = floor.queued_request(requester)
        if queued is None:
            return ConvenerDecision(
                DecisionKind.DENY, requester,
                (self._deny(requester, floor, REASON_QUEUE_FULL, now_tick),),
            )
        if floor.holder is None and self.policy.auto_grant_when_idle:
            best = next_in_queue(self.policy, floor)
            return ConvenerDecision(
                DecisionKind.GRANT, best.requester_uri,
                (self.grant_floor(best.requester_uri, floor),),
            )
        return ConvenerDecision(DecisionKind.ENQUEUE, requester)

    def _handle_invite_request(self, params: InviteRequestParams,
                               floor: Floor) -> ConvenerDecision:
        if floor.is_participant(params.invitee_uri):
            return ConvenerDecision(DecisionKind.IGNORE, params.invitee_uri)
        envelopes = self.invite(params.invitee_uri, floor, context=params.context,
                                variant="agent_initiated")
        return ConvenerDecision(DecisionKind.INVITE, params.invitee_uri, tuple(envelopes))

    def _on_signal(self, signal: ControlSignal, floor: Floor,
                   now_tick: int) -> ConvenerDecision:
        if signal.kind is SignalKind.LEASE_EXPIRED:
            if floor.holder is None:
                return _IGNORE
            holder = floor.holder.holder_uri
            emitted = [self.revoke_floor(floor, REASON_EXCEEDED_TIME_LIMIT)]
            follow_up = next_in_queue(self.policy, floor)
            if follow_up is not None:
                emitted.append(self._grant_after_vacancy(follow_up.requester_uri, floor))
            return ConvenerDecision(DecisionKind.REVOKE, holder, tuple(emitted))

        if signal.kind is SignalKind.LEASE_VACATED:
            follow_up = next_in_queue(self.policy, floor)
            if follow_up is not None:
                return ConvenerDecision(
                    DecisionKind.GRANT, follow_up.requester_uri,
                    (self._grant_after_vacancy(follow_up.requester_uri, floor),),
                )
            if self.policy.auto_grant_when_idle and floor.holder is None:
                # nobody waiting: the floor returns to the convener itself
                return ConvenerDecision(
                    DecisionKind.GRANT, self.uri,
                    (self._grant_after_vacancy(self.uri, floor),),
                )
            return _IGNORE

        return _IGNORE

    def _grant_after_vacancy(self, requester: str, floor: Floor) -> EnvelopeDoc:
        """Like grant_floor, but legal while the revoke that frees the lease is
        still in flight; routing applies revoke before this grant."""
        context = GrantContext(
            topic=self.state.topic,
            previous_speaker_id=self.state.last_holder_uri,
        )
        self.state = replace(self.state, last_holder_uri=requester)
        return make_envelope(floor.conversation_id, self.uri, [
            floor_grant_event((requester,),
                              duration_ms=self.policy.default_grant_ms,
                              context=context)
        ])
