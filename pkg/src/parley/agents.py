"""Conversants: the participant interface, scripted agents, and the simulator.

Scripted agents are deterministic stand-ins for model-driven assistants: a
script is an ordered list of steps, each with a trigger matched against
delivered views and a list of envelope templates to emit. The simulator
drives the route/decide/deliver loop over a global FIFO of outbound
envelopes, so two runs from the same inputs produce identical transcripts.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

from .convener import ConvenerAgent, ConvenerDecision, ConvenerPolicy, DecisionKind
from .envelope import (
    DialogEvent,
    EnvelopeDoc,
    Event,
    EventType,
    InviteParams,
    UtteranceParams,
    WhisperParams,
    bye_event,
    floor_request_event,
    invite_event,
    invite_request_event,
    make_envelope,
    mute_event,
    parse_event_type,
    tick_timestamp,
    uninvite_event,
    unmute_event,
    utterance_event,
    whisper_event,
)
from .errors import InvalidScript, UnknownSender
from .floor import Floor, Role, create_floor
from .routing import ControlSignal, DeliveryPlan, route, tick_expiry


class Conversant(Protocol):
    uri: str

    def on_deliver(self, view: EnvelopeDoc, tick: int) -> list[EnvelopeDoc]:
        ...


@dataclass(frozen=True)
class Trigger:
    """All present conditions must hold; an event in the view must satisfy
    event_type/contains/to_includes while the envelope satisfies sender."""

    event_type: Optional[EventType] = None
    contains: Optional[str] = None
    sender: Optional[str] = None
    to_includes: Optional[str] = None

    def matches(self, envelope: EnvelopeDoc) -> bool:
        if self.sender is not None and envelope.sender_uri != self.sender:
            return False
        return any(self._event_matches(e) for e in envelope.events)

    def _event_matches(self, event: Event) -> bool:
        if self.event_type is not None and event.event_type is not self.event_type:
            return False
        if self.to_includes is not None and self.to_includes not in event.to:
            return False
        if self.contains is not None and self.contains not in _event_texts(event):
            return False
        return True


def _event_texts(event: Event) -> str:
    """Searchable text of an event: spoken tokens plus string contexts."""
    params = event.parameters
    parts: list[str] = []
    if isinstance(params, (UtteranceParams, WhisperParams)):
        parts.append(params.dialog_event.text)
    if isinstance(params, (WhisperParams, InviteParams)) and isinstance(params.context, str):
        parts.append(params.context)
    return "\n".join(parts)


@dataclass(frozen=True)
class ScriptStep:
    trigger: Trigger
    actions: tuple[dict, ...]
    at_most: int = 1


@dataclass(frozen=True)
class Script:
    steps: tuple[ScriptStep, ...] = ()


_ACTION_KEYS = {"say", "whisper", "request_floor", "request_invite", "bye",
                "invite", "uninvite", "mute", "unmute"}
_ACTION_OPTION_KEYS = {"to", "private", "context", "urgency", "note", "reason"}


def _check_action(action: dict) -> None:
    if not isinstance(action, dict):
        raise InvalidScript(f"action must be an object, got {type(action).__name__}")
    heads = _ACTION_KEYS & set(action)
    if len(heads) != 1:
        raise InvalidScript(f"action needs exactly one of {sorted(_ACTION_KEYS)}: {action}")
    stray = set(action) - _ACTION_KEYS - _ACTION_OPTION_KEYS
    if stray:
        raise InvalidScript(f"unknown action keys {sorted(stray)} in {action}")


def script_from_obj(obj: dict) -> Script:
    if not isinstance(obj, dict) or not isinstance(obj.get("steps", []), list):
        raise InvalidScript("script must be an object with a steps array")
    steps = []
    for i, raw in enumerate(obj.get("steps", [])):
        if not isinstance(raw, dict):
            raise InvalidScript(f"steps[{i}] is not an object")
        on = raw.get("on", {})
        if not isinstance(on, dict):
            raise InvalidScript(f"steps[{i}].on is not an object")
        event_type = None
        if "event" in on:
            event_type = parse_event_type(str(on["event"]))
            if event_type is None:
                raise InvalidScript(f"steps[{i}].on.event: unknown event type {on['event']!r}")
        actions = raw.get("emit", [])
        if not isinstance(actions, list) or not actions:
            raise InvalidScript(f"steps[{i}].emit must be a non-empty array")
        for action in actions:
            _check_action(action)
        at_most = raw.get("at_most", 1)
        if not isinstance(at_most, int) or at_most < 1:
            raise InvalidScript(f"steps[{i}].at_most must be a positive integer")
        steps.append(
            ScriptStep(
                trigger=Trigger(
                    event_type=event_type,
                    contains=on.get("contains"),
                    sender=on.get("from"),
                    to_includes=on.get("to_includes"),
                ),
                actions=tuple(actions),
                at_most=at_most,
            )
        )
    return Script(steps=tuple(steps))


class ScriptedAgent:
    """Conversant that replays a script: first matching un-exhausted step fires."""

    def __init__(self, uri: str, script: Script, convener_uri: str,
                 display: Optional[str] = None):
        self.uri = uri
        self.script = script
        self.convener_uri = convener_uri
        self.display = display or uri
        self._fired = [0] * len(script.steps)

    def reset(self) -> None:
        self._fired = [0] * len(self.script.steps)

    def on_deliver(self, view: EnvelopeDoc, tick: int) -> list[EnvelopeDoc]:
        for i, step in enumerate(self.script.steps):
            if self._fired[i] >= step.at_most:
                continue
            if step.trigger.matches(view):
                self._fired[i] += 1
                return [self._expand(action, view.conversation_id, tick)
                        for action in step.actions]
        return []

    def _expand(self, action: dict, conversation_id: str, tick: int) -> EnvelopeDoc:
        to = tuple(action.get("to", ()))
        span = tick_timestamp(tick)
        if "say" in action:
            events = [utterance_event(action["say"], self.display, span, to=to,
                                      private=bool(action.get("private", False)))]
        elif "whisper" in action:
            events = [whisper_event(action["whisper"], self.display, span,
                                    to=to or (self.convener_uri,),
                                    context=action.get("context"))]
        elif "request_floor" in action:
            events = [floor_request_event(action["request_floor"],
                                          to=(self.convener_uri,),
                                          urgency=action.get("urgency"))]
            if action.get("note"):
                events.append(whisper_event(action["note"], self.display, span,
                                            to=(self.convener_uri,)))
        elif "request_invite" in action:
            events = [invite_request_event(action["request_invite"],
                                           to=(self.convener_uri,),
                                           context=action.get("context"))]
        elif "bye" in action:
            events = [bye_event(to=(self.convener_uri,))]
        elif "invite" in action:
            events = [invite_event((action["invite"],), context=action.get("context"))]
        elif "uninvite" in action:
            events = [uninvite_event((action["uninvite"],), reason=action.get("reason", ""))]
        elif "mute" in action:
            events = [mute_event((action["mute"],), reason=action.get("reason"))]
        elif "unmute" in action:
            events = [unmute_event((action["unmute"],))]
        else:  # unreachable after _check_action
            raise InvalidScript(f"unknown action: {action}")
        return make_envelope(conversation_id, self.uri, events)


def scripted_agent(uri: str, script: Union[Script, dict], convener_uri: str,
                   display: Optional[str] = None) -> ScriptedAgent:
    if isinstance(script, dict):
        script = script_from_obj(script)
    return ScriptedAgent(uri, script, convener_uri, display)


# -- simulator --------------------------------------------------------------------

@dataclass
class RunResult:
    floor: Floor
    plans: list[DeliveryPlan] = field(default_factory=list)
    signals: list[ControlSignal] = field(default_factory=list)
    decisions: list[ConvenerDecision] = field(default_factory=list)
    rejected: list[tuple[EnvelopeDoc, str]] = field(default_factory=list)
    ticks: int = 0
    quiescent: bool = True

    @property
    def transcript(self):
        return self.floor.transcript


def run_conversation(
    floor: Floor,
    conversants: Sequence[Conversant],
    convener: ConvenerAgent,
    opening: Sequence[EnvelopeDoc] = (),
    max_ticks: int = 10000,
) -> RunResult:
    """Drive envelopes through route/decide/deliver until quiescent.

    Scheduling: one global FIFO of outbound envelopes. Script emissions are
    appended in delivery order (plan entries are URI-sorted); convener
    decision envelopes are routed immediately within the same pump step.
    """
    agents: dict[str, Conversant] = {}
    for agent in conversants:
        if agent.uri in agents:
            raise InvalidScript(f"duplicate conversant uri {agent.uri}")
        agents[agent.uri] = agent

    result = RunResult(floor=floor)
    pending: deque[EnvelopeDoc] = deque(opening)
    config = convener.policy.routing_config()

    def pump(envelope: EnvelopeDoc) -> None:
        result.ticks += 1
        tick = result.ticks
        try:
            plan, result.floor = route(result.floor, envelope, tick, config)
        except UnknownSender:
            result.rejected.append((envelope, "unknown_sender"))
            return
        result.plans.append(plan)
        result.signals.extend(plan.signals)

        emitted: list[EnvelopeDoc] = []
        decision = convener.on_signal_or_copy(plan.convener_copy, result.floor, tick)
        if decision.emitted_envelopes or decision.kind is not DecisionKind.IGNORE:
            result.decisions.append(decision)
        emitted.extend(decision.emitted_envelopes)

        convener_script = agents.get(convener.uri)
        if convener_script is not None and envelope.sender_uri != convener.uri:
            pending.extend(convener_script.on_deliver(plan.convener_copy, tick))

        for signal in plan.signals:
            decision = convener.on_signal_or_copy(signal, result.floor, tick)
            if decision.emitted_envelopes or decision.kind is not DecisionKind.IGNORE:
                result.decisions.append(decision)
            emitted.extend(decision.emitted_envelopes)

        for recipient, view in plan.entries:
            agent = agents.get(recipient)
            if agent is not None:
                pending.extend(agent.on_deliver(view, tick))

        for issued in emitted:
            pump(issued)

    def probe_expiry() -> None:
        for signal in tick_expiry(result.floor, result.ticks):
            result.signals.append(signal)
            decision = convener.on_signal_or_copy(signal, result.floor, result.ticks)
            if decision.emitted_envelopes:
                result.decisions.append(decision)
                for envelope in decision.emitted_envelopes:
                    pump(envelope)

    while pending:
        if result.ticks >= max_ticks:
            result.quiescent = False
            break
        probe_expiry()
        pump(pending.popleft())

    if result.quiescent:
        probe_expiry()
    return result


# -- scenario files ------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    conversation_id: str
    topic: str
    convener_uri: str
    convener_script: Optional[Script]
    members: tuple[dict, ...]
    opening: tuple[dict, ...]
    policy: ConvenerPolicy
    convener_display: Optional[str] = None
    notes: tuple[str, ...] = ()

    def build(self) -> tuple[Floor, list[Conversant], ConvenerAgent, list[EnvelopeDoc]]:
        floor = create_floor(self.conversation_id, self.convener_uri)
        conversants: list[Conversant] = []
        if self.convener_script is not None:
            conversants.append(ScriptedAgent(self.convener_uri, self.convener_script,
                                             self.convener_uri,
                                             display=self.convener_display))
        for member in self.members:
            if member.get("present", True):
                floor = floor.join(member["uri"], Role(member.get("role", "conversant")))
            conversants.append(
                ScriptedAgent(member["uri"],
                              script_from_obj(member.get("script", {"steps": []})),
                              self.convener_uri,
                              display=member.get("display"))
            )
        opening = []
        for entry in self.opening:
            sender = entry["from"]
            agent = next((a for a in conversants if a.uri == sender), None)
            display = agent.display if isinstance(agent, ScriptedAgent) else sender
            opening.append(
                make_envelope(self.conversation_id, sender, [
                    utterance_event(entry["say"], display, tick_timestamp(0),
                                    to=tuple(entry.get("to", ())),
                                    private=bool(entry.get("private", False)))
                ])
            )
        convener = ConvenerAgent(self.convener_uri, policy=self.policy, topic=self.topic)
        return floor, conversants, convener, opening


def scenario_from_obj(obj: dict) -> Scenario:
    if not isinstance(obj, dict):
        raise InvalidScript("scenario must be an object")
    try:
        convener = obj["convener"]
        conversation_id = obj["conversation_id"]
    except KeyError as exc:
        raise InvalidScript(f"scenario missing key: {exc}") from exc
    if not isinstance(convener, dict) or "uri" not in convener:
        raise InvalidScript("scenario.convener must be an object with a uri")
    members = obj.get("conversants", [])
    for i, member in enumerate(members):
        if not isinstance(member, dict) or "uri" not in member:
            raise InvalidScript(f"conversants[{i}] must be an object with a uri")
    script = None
    if "script" in convener:
        script = script_from_obj(convener["script"])
    return Scenario(
        conversation_id=str(conversation_id),
        topic=str(obj.get("topic", "")),
        convener_uri=convener["uri"],
        convener_script=script,
        members=tuple(members),
        opening=tuple(obj.get("opening", [])),
        policy=ConvenerPolicy.from_obj(obj.get("policy", {})),
        convener_display=convener.get("display"),
        notes=tuple(obj.get("notes", [])),
    )


def scenario_from_file(path: Union[str, Path]) -> Scenario:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidScript(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_obj(obj)


def run_scenario(scenario: Scenario, max_ticks: int = 10000) -> RunResult:
    floor, conversants, convener, opening = scenario.build()
    return run_conversation(floor, conversants, convener, opening, max_ticks=max_ticks)


# -- transcript skeletons ----------------------------------------------------------

def _event_skeleton(event: Event) -> dict:
    out: dict = {"type": event.parameters.event_type_raw if event.event_type is None
                 else event.event_type.value}
    if event.to:
        out["to"] = list(event.to)
    params = event.parameters
    if isinstance(params, UtteranceParams):
        out["text"] = params.dialog_event.text
        if params.private:
            out["private"] = True
    elif isinstance(params, WhisperParams):
        out["text"] = params.dialog_event.text
        if isinstance(params.context, str):
            out["context"] = params.context
    elif isinstance(params, InviteParams):
        if isinstance(params.context, str):
            out["context"] = params.context
    else:
        for key in ("request_reason", "duration_ms", "reason", "invitee_uri", "context"):
            value = getattr(params, key, None)
            if isinstance(value, (str, int)):
                out[key] = value
    return out


def transcript_skeleton(floor: Floor) -> list[dict]:
    """Ordered structural digest of a transcript, used for golden comparisons."""
    skeleton = []
    for entry in floor.transcript:
        skeleton.append({
            "sender": entry.envelope.sender_uri,
            "events": [_event_skeleton(e) for e in entry.envelope.events],
            "delivered_to": sorted(entry.delivered_to),
            "redacted_for": sorted(entry.redacted_for),
            "dropped": entry.dropped,
        })
    return skeleton
