"""Per-conversation floor state: participants, lease, queue, mute set, transcript.

Floor is an immutable value; every operation returns a new Floor. One logical
owner applies mutations for a conversation in a total order, so the value is
safe to snapshot from anywhere. Time is a logical tick counter, 1 tick = 1 ms,
which keeps lease expiry deterministic under test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from .envelope import (
    DialogEvent,
    EnvelopeDoc,
    EventType,
    UtteranceParams,
    envelope_to_obj,
    parse_envelope,
)
from .errors import (
    AlreadyMuted,
    CannotRemoveConvener,
    DuplicateParticipant,
    HolderOccupied,
    NotMuted,
    UnknownParticipant,
)

TICKS_PER_MS = 1


def ticks(duration_ms: int) -> int:
    return duration_ms * TICKS_PER_MS


class Role(str, Enum):
    CONVENER = "convener"
    CONVERSANT = "conversant"
    HUMAN_CONVERSANT = "human_conversant"


@dataclass(frozen=True)
class Participant:
    uri: str
    joined_at_tick: int
    role: Role = Role.CONVERSANT


@dataclass(frozen=True)
class GrantLease:
    holder_uri: str
    granted_at_tick: int
    duration_ms: int
    expires_at_tick: int


@dataclass(frozen=True)
class PendingRequest:
    requester_uri: str
    request_reason: str
    enqueued_at_tick: int
    urgency: Optional[str] = None
    attached_whisper: Optional[DialogEvent] = None


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    tick: int
    envelope: EnvelopeDoc
    delivered_to: frozenset[str]
    redacted_for: frozenset[str]
    dropped: bool = False


@dataclass(frozen=True)
class Floor:
    """Authoritative conversation state. All mutators are functional."""

    conversation_id: str
    convener_uri: str
    participants: dict[str, Participant]
    holder: Optional[GrantLease] = None
    request_queue: tuple[PendingRequest, ...] = ()
    mute_set: frozenset[str] = frozenset()
    transcript: tuple[TranscriptEntry, ...] = ()
    clock: int = 0

    # -- time ---------------------------------------------------------------

    def advance(self, tick: int) -> "Floor":
        """Move the logical clock forward; never backwards."""
        return replace(self, clock=max(self.clock, tick))

    # -- membership -----------------------------------------------------------

    def is_participant(self, uri: str) -> bool:
        return uri in self.participants

    def participant_uris(self) -> tuple[str, ...]:
        return tuple(sorted(self.participants))

    def join(self, uri: str, role: Role = Role.CONVERSANT) -> "Floor":
        if uri in self.participants:
            raise DuplicateParticipant(uri)
        updated = dict(self.participants)
        updated[uri] = Participant(uri=uri, joined_at_tick=self.clock, role=role)
        return replace(self, participants=updated)

    def leave(self, uri: str) -> "Floor":
        """Remove a participant, releasing everything that referenced them."""
        if uri not in self.participants:
            raise UnknownParticipant(uri)
        if uri == self.convener_uri:
            raise CannotRemoveConvener(uri)
        updated = dict(self.participants)
        del updated[uri]
        holder = self.holder
        if holder is not None and holder.holder_uri == uri:
            holder = None
        return replace(
            self,
            participants=updated,
            holder=holder,
            mute_set=self.mute_set - {uri},
            request_queue=tuple(r for r in self.request_queue if r.requester_uri != uri),
        )

    # -- lease ------------------------------------------------------------------

    def set_lease(self, uri: str, duration_ms: int) -> "Floor":
        if uri not in self.participants:
            raise UnknownParticipant(uri)
        if self.holder is not None:
            raise HolderOccupied(self.holder.holder_uri)
        if duration_ms <= 0:
            raise ValueError("duration_ms must be positive; default substitution is policy's job")
        return replace(
            self,
            holder=GrantLease(
                holder_uri=uri,
                granted_at_tick=self.clock,
                duration_ms=duration_ms,
                expires_at_tick=self.clock + ticks(duration_ms),
            ),
        )

    def clear_lease(self) -> "Floor":
        return replace(self, holder=None)

    # -- mute ---------------------------------------------------------------------

    def mute(self, uri: str) -> "Floor":
        if uri not in self.participants:
            raise UnknownParticipant(uri)
        if uri in self.mute_set:
            raise AlreadyMuted(uri)
        return replace(self, mute_set=self.mute_set | {uri})

    def unmute(self, uri: str) -> "Floor":
        if uri not in self.participants:
            raise UnknownParticipant(uri)
        if uri not in self.mute_set:
            raise NotMuted(uri)
        return replace(self, mute_set=self.mute_set - {uri})

    # -- request queue ----------------------------------------------------------------

    def queued_request(self, uri: str) -> Optional[PendingRequest]:
        for req in self.request_queue:
            if req.requester_uri == uri:
                return req
        return None

    def enqueue_request(self, request: PendingRequest) -> "Floor":
        """Append; a repeat request from a queued agent updates it in place,
        keeping its original queue position and enqueue tick."""
        if request.requester_uri not in self.participants:
            raise UnknownParticipant(request.requester_uri)
        queue = list(self.request_queue)
        for i, existing in enumerate(queue):
            if existing.requester_uri == request.requester_uri:
                queue[i] = replace(request, enqueued_at_tick=existing.enqueued_at_tick)
                return replace(self, request_queue=tuple(queue))
        queue.append(request)
        return replace(self, request_queue=tuple(queue))

    def remove_request(self, uri: str) -> "Floor":
        return replace(
            self,
            request_queue=tuple(r for r in self.request_queue if r.requester_uri != uri),
        )

    # -- transcript ------------------------------------------------------------------

    def record(
        self,
        envelope: EnvelopeDoc,
        delivered_to: Iterable[str],
        redacted_for: Iterable[str] = (),
        dropped: bool = False,
    ) -> "Floor":
        entry = TranscriptEntry(
            seq=len(self.transcript),
            tick=self.clock,
            envelope=envelope,
            delivered_to=frozenset(delivered_to),
            redacted_for=frozenset(redacted_for),
            dropped=dropped,
        )
        return replace(self, transcript=self.transcript + (entry,))

    def context_window(self, recipient: str, max_entries: int) -> list[DialogEvent]:
        """Most recent utterances the recipient actually received, oldest first.

        Private utterances inside a mixed envelope stay hidden unless the
        recipient was named on them.
        """
        if recipient not in self.participants:
            raise UnknownParticipant(recipient)
        if max_entries <= 0:
            return []
        collected: list[DialogEvent] = []
        for entry in reversed(self.transcript):
            if entry.dropped or recipient not in entry.delivered_to:
                continue
            events = []
            for event in entry.envelope.events:
                if event.event_type is not EventType.UTTERANCE:
                    continue
                params = event.parameters
                if not isinstance(params, UtteranceParams):
                    continue
                if params.private and recipient not in event.to and recipient != self.convener_uri:
                    continue
                events.append(params.dialog_event)
            for de in reversed(events):
                collected.append(de)
                if len(collected) == max_entries:
                    break
            if len(collected) == max_entries:
                break
        collected.reverse()
        return collected


def create_floor(conversation_id: str, convener_uri: str,
                 convener_role: Role = Role.CONVENER) -> Floor:
    convener = Participant(uri=convener_uri, joined_at_tick=0, role=convener_role)
    return Floor(
        conversation_id=conversation_id,
        convener_uri=convener_uri,
        participants={convener_uri: convener},
    )


# -- transcript persistence shape ---------------------------------------------------

def transcript_entry_to_obj(entry: TranscriptEntry) -> dict:
    return {
        "seq": entry.seq,
        "tick": entry.tick,
        "envelope": envelope_to_obj(entry.envelope),
        "delivered_to": sorted(entry.delivered_to),
        "redacted_for": sorted(entry.redacted_for),
        "dropped": entry.dropped,
    }


def transcript_entry_from_obj(obj: dict) -> TranscriptEntry:
    return TranscriptEntry(
        seq=int(obj["seq"]),
        tick=int(obj["tick"]),
        envelope=parse_envelope(json.dumps(obj["envelope"])),
        delivered_to=frozenset(obj.get("delivered_to", ())),
        redacted_for=frozenset(obj.get("redacted_for", ())),
        dropped=bool(obj.get("dropped", False)),
    )
