"""Envelope model: parse, validate, canonical serialization.

The round-trip oracle builds wire documents with a generator that is
independent of the package's builders, so serializer and parser cannot share
a bug invisibly.
"""

import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parley.envelope import (
    ByeParams,
    DialogEvent,
    EnvelopeDoc,
    Event,
    EventType,
    FloorGrantParams,
    FloorRequestParams,
    FloorRevokeParams,
    GrantContext,
    InviteParams,
    InviteRequestParams,
    MuteParams,
    UninviteParams,
    UnknownParams,
    UnmuteParams,
    UtteranceNoticeParams,
    UtteranceParams,
    WhisperParams,
    bye_event,
    floor_grant_event,
    floor_request_event,
    floor_revoke_event,
    invite_event,
    invite_request_event,
    make_envelope,
    mute_event,
    notice_event,
    parse_envelope,
    parse_event_type,
    serialize_envelope,
    unmute_event,
    utterance_event,
    validate_envelope,
    whisper_event,
)
from parley.errors import EmptyEvents, InvalidDocument, MalformedDocument, MissingField

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

TS = "2024-08-31T10:05:00Z"
TS_ALT = "2023-06-19 03:09:07+00:00"


def read_fixture(name):
    return (FIXTURES / name).read_text()


# -- independent wire-document generator ----------------------------------------

def _wire_dialog_event(rng, use_dash_key=False):
    span_key = "start-time" if use_dash_key else "startTime"
    words = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
    tokens = [{"value": rng.choice(words)} for _ in range(rng.randint(1, 3))]
    return {
        "speakerId": f"speaker{rng.randint(1, 9)}",
        "span": {span_key: rng.choice([TS, TS_ALT])},
        "features": {"text": {"mimeType": "text/plain", "tokens": tokens}},
    }


def _wire_event(rng):
    uris = [f"https://agent{i}.example.com" for i in range(5)]
    kind = rng.choice(
        ["utterance", "whisper", "Floor_request", "Floor_grant", "Floor_revoke",
         "invite", "uninvite", "mute", "unmute", "bye", "invite_request", "unknown"]
    )
    event = {}
    to_mode = rng.choice(["none", "one", "many"])
    if to_mode == "one":
        event["to"] = rng.choice(uris)
    elif to_mode == "many":
        event["to"] = rng.sample(uris, 2)
    if kind == "utterance":
        params = {"dialogEvent": _wire_dialog_event(rng, rng.random() < 0.3)}
        if rng.random() < 0.5:
            params["private"] = True
        event["eventType"] = rng.choice(["utterance", "Utterance", "UTTERANCE"])
    elif kind == "whisper":
        params = {"dialogEvent": _wire_dialog_event(rng)}
        if rng.random() < 0.5:
            params["context"] = rng.choice(["prior summary", _wire_dialog_event(rng)])
        event["eventType"] = "whisper"
        event.setdefault("to", rng.choice(uris))
    elif kind == "Floor_request":
        params = {"request_reason": rng.choice(["interjection", "question", "emergency"])}
        if rng.random() < 0.5:
            params["urgency"] = "high"
        event["eventType"] = rng.choice(["Floor_request", "floor_request", "FLOOR_REQUEST"])
    elif kind == "Floor_grant":
        params = {"duration_ms": rng.randint(0, 120000)}
        if rng.random() < 0.5:
            params["context"] = {"previous_speaker_id": rng.choice(uris), "topic": "testing"}
        event["eventType"] = "Floor_grant"
    elif kind == "Floor_revoke":
        params = {"reason": "exceeded_time_limit"}
        event["eventType"] = rng.choice(["Floor_revoke", "floor_revoke"])
    elif kind == "invite":
        params = {} if rng.random() < 0.5 else {"context": "you are needed"}
        event["eventType"] = "invite"
    elif kind == "uninvite":
        params = {"reason": "not_authorized_to_participate"}
        event["eventType"] = "uninvite"
    elif kind in ("mute", "unmute"):
        params = {} if rng.random() < 0.5 else {"reason": "off_topic"}
        event["eventType"] = kind
    elif kind == "bye":
        params = {}
        event["eventType"] = "bye"
    elif kind == "invite_request":
        params = {"invitee_uri": rng.choice(uris)}
        if rng.random() < 0.5:
            params["context"] = "needs the payment agent"
        event["eventType"] = "invite_request"
    else:
        params = {"payload": {"n": rng.randint(0, 99)}}
        event["eventType"] = rng.choice(["emotion", "speech_hint", "x_custom"])
    event["parameters"] = params
    if rng.random() < 0.2:
        event["traceId"] = f"t-{rng.randint(0, 999)}"
    return event


def _wire_document(rng):
    body = {
        "schema": {"version": "0.9.2"},
        "conversation": {"id": f"conv-{rng.randint(0, 9999)}"},
        "sender": {"from": f"https://sender{rng.randint(0, 9)}.example.com"},
        "events": [_wire_event(rng) for _ in range(rng.randint(1, 4))],
    }
    if rng.random() < 0.2:
        body["annotations"] = {"lang": "en"}
    root = {"ovon": body}
    if rng.random() < 0.2:
        root["trace"] = {"hop": rng.randint(0, 5)}
    return root


def test_round_trip_oracle_over_generated_wire_documents():
    rng = random.Random(1234)
    for _ in range(1000):
        text = json.dumps(_wire_document(rng))
        doc = parse_envelope(text)
        assert not any(v.severity == "error" for v in validate_envelope(doc)), validate_envelope(doc)
        out = serialize_envelope(doc)
        doc2 = parse_envelope(out)
        assert doc2 == doc
        assert serialize_envelope(doc2) == out


def test_serialization_is_deterministic():
    rng = random.Random(77)
    for _ in range(50):
        doc = parse_envelope(json.dumps(_wire_document(rng)))
        assert serialize_envelope(doc) == serialize_envelope(doc)


# -- fixtures --------------------------------------------------------------------

@pytest.mark.parametrize(
    "name",
    ["floor_request.json", "floor_grant.json", "floor_revoke.json", "uninvite.json"],
)
def test_fixture_parses_with_zero_violations(name):
    doc = parse_envelope(read_fixture(name))
    assert validate_envelope(doc) == []


@pytest.mark.parametrize(
    "name",
    ["floor_request.json", "floor_grant.json", "floor_revoke.json", "uninvite.json"],
)
def test_fixture_round_trips_semantically(name):
    doc = parse_envelope(read_fixture(name))
    assert parse_envelope(serialize_envelope(doc)) == doc


def test_floor_request_fixture_content():
    doc = parse_envelope(read_fixture("floor_request.json"))
    assert doc.schema_version == "0.9.2"
    assert doc.conversation_id == "someUniqueIdForTheConversation"
    assert doc.sender_uri == "https://agentRequestingFloor.com"
    assert [e.event_type for e in doc.events] == [EventType.FLOOR_REQUEST, EventType.WHISPER]
    request, whisper = doc.events
    assert request.to == ("https://some_Convener.com",)
    assert request.parameters == FloorRequestParams(request_reason="interjection")
    assert whisper.parameters.dialog_event.speaker_id == "agentRequestingFloorID"
    assert whisper.parameters.dialog_event.tokens == ("I would like to add that blah blah blah.",)
    assert whisper.parameters.dialog_event.span_start == "2024-08-31T10:05:00Z"


def test_floor_grant_fixture_content():
    doc = parse_envelope(read_fixture("floor_grant.json"))
    assert doc.sender_uri == "https://some_Convener.com"
    (grant,) = doc.events
    assert grant.to == ("https://agentRequestingFloor.com",)
    assert grant.parameters == FloorGrantParams(
        duration_ms=60000,
        context=GrantContext(
            topic="AI Multi-Agent Interoperability",
            previous_speaker_id="https://previousAgent.com",
        ),
    )


def test_floor_revoke_fixture_content():
    doc = parse_envelope(read_fixture("floor_revoke.json"))
    (revoke,) = doc.events
    assert revoke.to == ("https://agentFloorRevoked.com",)
    assert revoke.parameters == FloorRevokeParams(reason="exceeded_time_limit")
    out = serialize_envelope(doc)
    assert '"eventType":"Floor_revoke"' in out
    assert '"reason":"exceeded_time_limit"' in out


def test_uninvite_fixture_content():
    doc = parse_envelope(read_fixture("uninvite.json"))
    assert doc.sender_uri == "https://ConvenerAgent.com"
    (ev,) = doc.events
    assert ev.to == ("https://uninvitedAgent.com",)
    assert ev.parameters == UninviteParams(reason="not_authorized_to_participate")


# -- wire-shape specifics ----------------------------------------------------------

def test_to_array_is_preserved_and_single_to_collapses_to_string():
    text = json.dumps(
        {
            "ovon": {
                "schema": {"version": "0.9.2"},
                "conversation": {"id": "multiConversantConversationId"},
                "sender": {"from": "https://agentMultiConversant1.com"},
                "events": [
                    {
                        "to": [
                            "https://agentMultiConversant2.com",
                            "https://agentMultiConversant3.com",
                        ],
                        "eventType": "utterance",
                        "parameters": {
                            "dialogEvent": {
                                "speakerId": "Agent1ID",
                                "span": {"startTime": TS},
                                "features": {
                                    "text": {
                                        "mimeType": "text/plain",
                                        "tokens": [{"value": "I think we should consider the following approach."}],
                                    }
                                },
                            }
                        },
                    }
                ],
            }
        }
    )
    doc = parse_envelope(text)
    assert doc.events[0].to == (
        "https://agentMultiConversant2.com",
        "https://agentMultiConversant3.com",
    )
    out = json.loads(serialize_envelope(doc))
    assert out["ovon"]["events"][0]["to"] == [
        "https://agentMultiConversant2.com",
        "https://agentMultiConversant3.com",
    ]

    single = make_envelope("c", "https://a.example.com", [utterance_event("hi", "A", TS, to=("https://b.example.com",))])
    emitted = json.loads(serialize_envelope(single))
    assert emitted["ovon"]["events"][0]["to"] == "https://b.example.com"


def test_start_time_dash_variant_normalizes_with_same_value():
    text = json.dumps(
        {
            "ovon": {
                "schema": {"version": "0.9.2"},
                "conversation": {"id": "c1"},
                "sender": {"from": "https://someBot.example.com"},
                "events": [
                    {
                        "to": "https://someBotOrPerson.com",
                        "eventType": "whisper",
                        "parameters": {
                            "dialogEvent": {
                                "speakerId": "agent08kkmy6gt",
                                "span": {"start-time": TS_ALT},
                                "features": {
                                    "text": {
                                        "mimeType": "text/plain",
                                        "tokens": [{"value": "explain the side effects of citalopram in less than 200 words"}],
                                    }
                                },
                            },
                            "context": "The user has a history of serious depression and is seeking information about the side effects of different drug types.",
                        },
                    }
                ],
            }
        }
    )
    doc = parse_envelope(text)
    assert doc.events[0].parameters.dialog_event.span_start == TS_ALT
    assert validate_envelope(doc) == []
    out = serialize_envelope(doc)
    assert '"start-time"' not in out
    assert f'"startTime":"{TS_ALT}"' in out
    assert isinstance(doc.events[0].parameters.context, str)


def test_event_type_parsing_is_case_insensitive_and_emission_is_canonical():
    for member in EventType:
        for variant in (member.value.lower(), member.value.upper(), member.value.title()):
            assert parse_event_type(variant) is member
    doc = parse_envelope(
        json.dumps(
            {
                "ovon": {
                    "schema": {"version": "0.9.2"},
                    "conversation": {"id": "c"},
                    "sender": {"from": "https://a.example.com"},
                    "events": [
                        {"to": "https://b.example.com", "eventType": "FLOOR_REQUEST",
                         "parameters": {"request_reason": "question"}},
                        {"to": "https://b.example.com", "eventType": "floor_grant",
                         "parameters": {"duration_ms": 1000}},
                    ],
                }
            }
        )
    )
    out = serialize_envelope(doc)
    assert '"eventType":"Floor_request"' in out
    assert '"eventType":"Floor_grant"' in out


def test_unknown_event_type_is_preserved_and_warned():
    text = json.dumps(
        {
            "ovon": {
                "schema": {"version": "0.9.2"},
                "conversation": {"id": "c"},
                "sender": {"from": "https://a.example.com"},
                "events": [{"eventType": "emotion", "parameters": {"valence": 0.3}}],
            }
        }
    )
    doc = parse_envelope(text)
    assert doc.events[0].event_type is None
    assert doc.events[0].parameters == UnknownParams(event_type_raw="emotion", raw={"valence": 0.3})
    violations = validate_envelope(doc)
    assert [v.rule for v in violations] == ["UNKNOWN_EVENT_TYPE"]
    assert violations[0].severity == "warning"
    assert parse_envelope(serialize_envelope(doc)) == doc


def test_unknown_top_level_fields_survive_round_trip():
    text = json.dumps(
        {
            "ovon": {
                "schema": {"version": "0.9.2"},
                "conversation": {"id": "c"},
                "sender": {"from": "https://a.example.com"},
                "events": [{"eventType": "bye", "parameters": {}}],
                "annotations": {"lang": "en"},
            },
            "trace": {"hop": 2},
        }
    )
    doc = parse_envelope(text)
    assert doc.extra == {"annotations": {"lang": "en"}}
    assert doc.extra_top == {"trace": {"hop": 2}}
    assert parse_envelope(serialize_envelope(doc)) == doc


# -- parse errors ------------------------------------------------------------------

def test_parse_rejects_non_json():
    with pytest.raises(MalformedDocument):
        parse_envelope("{not json")


def test_parse_rejects_missing_root():
    with pytest.raises(MalformedDocument):
        parse_envelope(json.dumps({"schema": {"version": "0.9.2"}}))


@pytest.mark.parametrize(
    "drop,expected",
    [("schema", "schema.version"), ("conversation", "conversation.id"),
     ("sender", "sender.from"), ("events", "events")],
)
def test_parse_rejects_missing_sections(drop, expected):
    body = {
        "schema": {"version": "0.9.2"},
        "conversation": {"id": "c"},
        "sender": {"from": "https://a.example.com"},
        "events": [{"eventType": "bye", "parameters": {}}],
    }
    del body[drop]
    with pytest.raises(MissingField) as err:
        parse_envelope(json.dumps({"ovon": body}))
    assert err.value.field == expected


def test_parse_rejects_empty_events():
    body = {
        "schema": {"version": "0.9.2"},
        "conversation": {"id": "c"},
        "sender": {"from": "https://a.example.com"},
        "events": [],
    }
    with pytest.raises(EmptyEvents):
        parse_envelope(json.dumps({"ovon": body}))


def test_parse_rejects_event_without_type():
    body = {
        "schema": {"version": "0.9.2"},
        "conversation": {"id": "c"},
        "sender": {"from": "https://a.example.com"},
        "events": [{"parameters": {}}],
    }
    with pytest.raises(MissingField):
        parse_envelope(json.dumps({"ovon": body}))


# -- validation rules ----------------------------------------------------------------

def _doc_with(events):
    return make_envelope("c", "https://a.example.com", events)


def _rules(doc):
    return [v.rule for v in validate_envelope(doc)]


def test_schema_version_rules():
    base = _doc_with([bye_event()])
    import dataclasses

    bad = dataclasses.replace(base, schema_version="banana")
    assert "MALFORMED_SCHEMA_VERSION" in _rules(bad)
    with pytest.raises(InvalidDocument):
        serialize_envelope(bad)

    future = dataclasses.replace(base, schema_version="1.0.0")
    violations = validate_envelope(future)
    assert [v.rule for v in violations] == ["UNSUPPORTED_SCHEMA_VERSION"]
    assert violations[0].severity == "warning"
    serialize_envelope(future)  # warnings do not block emission


def test_sender_and_conversation_rules():
    import dataclasses

    base = _doc_with([bye_event()])
    assert "EMPTY_CONVERSATION_ID" in _rules(dataclasses.replace(base, conversation_id=""))
    assert "EMPTY_SENDER" in _rules(dataclasses.replace(base, sender_uri=""))
    assert "SENDER_NOT_URI" in _rules(dataclasses.replace(base, sender_uri="not a uri"))


def test_empty_events_is_a_violation_too():
    doc = EnvelopeDoc(schema_version="0.9.2", conversation_id="c",
                      sender_uri="https://a.example.com", events=())
    assert "EMPTY_EVENTS" in _rules(doc)


def test_dialog_event_rules():
    no_tokens = _doc_with([
        Event(
            event_type=EventType.UTTERANCE,
            parameters=UtteranceParams(dialog_event=DialogEvent("A", TS, ())),
        )
    ])
    assert "EMPTY_TOKENS" in _rules(no_tokens)

    bad_ts = _doc_with([utterance_event("hi", "A", "sometime later")])
    assert "BAD_TIMESTAMP" in _rules(bad_ts)

    no_speaker = _doc_with([utterance_event("hi", "", TS)])
    assert "MISSING_PARAM" in _rules(no_speaker)


def test_numeric_and_reason_rules():
    neg = _doc_with([floor_grant_event(("https://b.example.com",), duration_ms=-5)])
    assert "NEGATIVE_DURATION" in _rules(neg)

    no_reason = _doc_with([floor_revoke_event(("https://b.example.com",), reason="")])
    assert "MISSING_PARAM" in _rules(no_reason)

    missing_request_reason = _doc_with([floor_request_event("", ("https://b.example.com",))])
    assert "MISSING_PARAM" in _rules(missing_request_reason)

    bad_invitee = _doc_with([invite_request_event("not a uri", ("https://b.example.com",))])
    assert "BAD_URI" in _rules(bad_invitee)


def test_wire_level_missing_params_become_violations_not_exceptions():
    body = {
        "schema": {"version": "0.9.2"},
        "conversation": {"id": "c"},
        "sender": {"from": "https://a.example.com"},
        "events": [
            {"to": "https://b.example.com", "eventType": "Floor_grant", "parameters": {}},
            {"to": "https://b.example.com", "eventType": "Floor_request", "parameters": {}},
            {"eventType": "utterance", "parameters": {}},
        ],
    }
    doc = parse_envelope(json.dumps({"ovon": body}))
    rules = _rules(doc)
    assert "NEGATIVE_DURATION" in rules
    assert "MISSING_PARAM" in rules
    assert "EMPTY_TOKENS" in rules
    with pytest.raises(InvalidDocument):
        serialize_envelope(doc)


# -- parameter-shape cross product ------------------------------------------------

def _valid_params_samples():
    de = DialogEvent("A", TS, ("hello",))
    return {
        EventType.UTTERANCE: UtteranceParams(dialog_event=de),
        EventType.WHISPER: WhisperParams(dialog_event=de),
        EventType.FLOOR_REQUEST: FloorRequestParams(request_reason="question"),
        EventType.FLOOR_GRANT: FloorGrantParams(duration_ms=1000),
        EventType.FLOOR_REVOKE: FloorRevokeParams(reason="exceeded_time_limit"),
        EventType.UNINVITE: UninviteParams(reason="not_authorized_to_participate"),
        EventType.INVITE: InviteParams(),
        EventType.MUTE: MuteParams(),
        EventType.UNMUTE: UnmuteParams(),
        EventType.BYE: ByeParams(),
        EventType.UTTERANCE_NOTICE: UtteranceNoticeParams(speaker_id="A", span_start=TS),
        EventType.INVITE_REQUEST: InviteRequestParams(invitee_uri="https://i.example.com"),
    }


def test_param_shape_cross_product():
    samples = _valid_params_samples()
    for declared_type in EventType:
        for params_type, params in samples.items():
            doc = _doc_with([
                Event(event_type=declared_type, parameters=params, to=("https://b.example.com",))
            ])
            mismatches = [v for v in validate_envelope(doc) if v.rule == "PARAM_SHAPE_MISMATCH"]
            if params_type is declared_type:
                assert mismatches == [], (declared_type, params_type)
            else:
                assert len(mismatches) == 1, (declared_type, params_type)
                assert mismatches[0].path == "events[0].parameters"


# -- builder round trip (hypothesis) -----------------------------------------------

_uri = st.from_regex(r"https://[a-z]{1,8}\.example\.com", fullmatch=True)
_text = st.text(min_size=1, max_size=40).filter(lambda s: s.strip())
_speaker = st.from_regex(r"[A-Za-z][A-Za-z0-9]{0,10}", fullmatch=True)
_ts = st.sampled_from([TS, TS_ALT, "2024-01-01T00:00:00+00:00"])


@st.composite
def _events(draw):
    kind = draw(st.sampled_from(["utterance", "whisper", "request", "grant", "revoke",
                                 "invite", "uninvite", "mute", "unmute", "bye",
                                 "invite_request", "notice"]))
    to = tuple(draw(st.lists(_uri, max_size=3)))
    if kind == "utterance":
        return utterance_event(draw(_text), draw(_speaker), draw(_ts), to=to,
                               private=draw(st.booleans()))
    if kind == "whisper":
        context = draw(st.one_of(
            st.none(),
            _text,
            st.builds(DialogEvent, speaker_id=_speaker, span_start=_ts,
                      tokens=st.tuples(_text)),
        ))
        return whisper_event(draw(_text), draw(_speaker), draw(_ts),
                             to=to or (draw(_uri),), context=context)
    if kind == "request":
        return floor_request_event(draw(_text), to, urgency=draw(st.none() | _text))
    if kind == "grant":
        context = draw(st.none() | st.builds(
            GrantContext, topic=_text, previous_speaker_id=st.none() | _uri))
        return floor_grant_event(to, draw(st.integers(min_value=0, max_value=10**7)), context)
    if kind == "revoke":
        return floor_revoke_event(to, draw(_text))
    if kind == "invite":
        return invite_event(to, context=draw(st.none() | _text))
    if kind == "uninvite":
        return Event(event_type=EventType.UNINVITE,
                     parameters=UninviteParams(reason=draw(_text)), to=to)
    if kind == "mute":
        return mute_event(to, reason=draw(st.none() | _text))
    if kind == "unmute":
        return unmute_event(to, reason=draw(st.none() | _text))
    if kind == "bye":
        return bye_event(to)
    if kind == "invite_request":
        return invite_request_event(draw(_uri), to, context=draw(st.none() | _text))
    return notice_event(utterance_event(draw(_text), draw(_speaker), draw(_ts)))


@settings(max_examples=200, deadline=None)
@given(
    conversation_id=st.from_regex(r"[a-zA-Z0-9-]{1,20}", fullmatch=True),
    sender=_uri,
    events=st.lists(_events(), min_size=1, max_size=4),
)
def test_builder_docs_round_trip_exactly(conversation_id, sender, events):
    doc = make_envelope(conversation_id, sender, events)
    assert parse_envelope(serialize_envelope(doc)) == doc


def test_notice_event_carries_no_text():
    source = utterance_event("I can offer you some special offers", "spammer", TS,
                             to=("https://b.example.com",), private=True)
    notice = notice_event(source)
    assert notice.event_type is EventType.UTTERANCE_NOTICE
    assert notice.parameters.speaker_id == "spammer"
    assert notice.parameters.span_start == TS
    out = serialize_envelope(_doc_with([notice]))
    assert "special offers" not in out
