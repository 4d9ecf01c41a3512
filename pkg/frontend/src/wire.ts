/**
 * Envelope wire format: the JSON shapes the conversation service speaks,
 * builders for the envelopes a console user can compose, and the feed
 * renderer. The console only ever builds utterances, whispers, and floor
 * requests; everything else it just displays.
 */

export interface TokenObj {
  value: string;
}

export interface DialogEventObj {
  speakerId: string;
  span: { startTime: string };
  features?: {
    text?: { mimeType: string; tokens: TokenObj[] };
  };
}

export interface EventObj {
  to?: string | string[];
  eventType: string;
  parameters: Record<string, unknown>;
}

export interface EnvelopeObj {
  ovon: {
    schema: { version: string };
    conversation: { id: string };
    sender: { from: string };
    events: EventObj[];
  };
}

export const SCHEMA_VERSION = "0.9.2";

export function recipientsOf(event: EventObj): string[] {
  if (typeof event.to === "string") return [event.to];
  if (Array.isArray(event.to)) return event.to.map(String);
  return [];
}

/** Single recipient goes on the wire as a bare string, several as an array. */
function toField(recipients: string[]): string | string[] | undefined {
  if (recipients.length === 0) return undefined;
  if (recipients.length === 1) return recipients[0];
  return recipients;
}

function dialogEvent(speakerId: string, text: string, startTime: string): DialogEventObj {
  return {
    speakerId,
    span: { startTime },
    features: {
      text: { mimeType: "text/plain", tokens: [{ value: text }] },
    },
  };
}

function envelope(conversationId: string, senderUri: string, events: EventObj[]): EnvelopeObj {
  return {
    ovon: {
      schema: { version: SCHEMA_VERSION },
      conversation: { id: conversationId },
      sender: { from: senderUri },
      events,
    },
  };
}

/** Short display id from a participant URI, e.g. "emmett" from https://emmett.example.com. */
export function displayName(uri: string): string {
  try {
    const host = new URL(uri).hostname;
    return host.split(".")[0] || uri;
  } catch {
    return uri;
  }
}

export interface BuildContext {
  conversationId: string;
  selfUri: string;
  display: string;
  startTime: string;
}

export function utteranceEnvelope(
  ctx: BuildContext,
  text: string,
  recipients: string[],
  isPrivate: boolean,
): EnvelopeObj {
  const event: EventObj = {
    eventType: "utterance",
    parameters: {
      dialogEvent: dialogEvent(ctx.display, text, ctx.startTime),
      ...(isPrivate ? { private: true } : {}),
    },
  };
  const to = toField(recipients);
  if (to !== undefined) event.to = to;
  return envelope(ctx.conversationId, ctx.selfUri, [event]);
}

export function whisperEnvelope(ctx: BuildContext, text: string, recipients: string[]): EnvelopeObj {
  return envelope(ctx.conversationId, ctx.selfUri, [
    {
      to: toField(recipients),
      eventType: "whisper",
      parameters: { dialogEvent: dialogEvent(ctx.display, text, ctx.startTime) },
    } as EventObj,
  ]);
}

/**
 * A floor request addressed to the convener; when the user attached a note,
 * it rides along as a whisper in the same envelope.
 */
export function floorRequestEnvelope(
  ctx: BuildContext,
  convenerUri: string,
  reason: string,
  note?: string,
): EnvelopeObj {
  const events: EventObj[] = [
    {
      to: convenerUri,
      eventType: "Floor_request",
      parameters: { request_reason: reason },
    },
  ];
  if (note && note.trim()) {
    events.push({
      to: convenerUri,
      eventType: "whisper",
      parameters: { dialogEvent: dialogEvent(ctx.display, note, ctx.startTime) },
    });
  }
  return envelope(ctx.conversationId, ctx.selfUri, events);
}

// ---------------------------------------------------------------------------
// Composer

export type ComposerMode = "utterance" | "whisper" | "floor_request";

export interface ComposerState {
  mode: ComposerMode;
  recipients: string[];
  privateFlag: boolean;
  text: string;
  reason: string;
}

export function emptyComposer(): ComposerState {
  return { mode: "utterance", recipients: [], privateFlag: false, text: "", reason: "interjection" };
}

function validUri(value: string): boolean {
  try {
    const url = new URL(value);
    return url.protocol === "http:" || url.protocol === "https:";
  } catch {
    return false;
  }
}

/** Problems that must be fixed before the composer may submit. Empty means ok. */
export function composerProblems(state: ComposerState): string[] {
  const problems: string[] = [];
  for (const uri of state.recipients) {
    if (!validUri(uri)) problems.push(`recipient is not a valid URI: ${uri}`);
  }
  switch (state.mode) {
    case "utterance":
      if (!state.text.trim()) problems.push("utterance text is empty");
      if (state.privateFlag && state.recipients.length === 0) {
        problems.push("private utterance needs at least one recipient");
      }
      break;
    case "whisper":
      if (!state.text.trim()) problems.push("whisper text is empty");
      if (state.recipients.length === 0) problems.push("whisper needs at least one recipient");
      break;
    case "floor_request":
      if (!state.reason.trim()) problems.push("floor request needs a reason");
      break;
  }
  return problems;
}

export function composeEnvelope(ctx: BuildContext, convenerUri: string, state: ComposerState): EnvelopeObj {
  switch (state.mode) {
    case "utterance":
      return utteranceEnvelope(ctx, state.text, state.recipients, state.privateFlag);
    case "whisper":
      return whisperEnvelope(ctx, state.text, state.recipients);
    case "floor_request":
      return floorRequestEnvelope(ctx, convenerUri, state.reason, state.text);
  }
}

// ---------------------------------------------------------------------------
// Feed rendering

export type FeedKind = "utterance" | "notice" | "whisper" | "control";

export interface FeedEntry {
  kind: FeedKind;
  speaker: string;
  /** Dialog content; never present for notices, which arrive content-free. */
  text?: string;
  label: string;
  eventTypes: string[];
  wire: string;
  envelope: EnvelopeObj;
}

function dialogText(params: Record<string, unknown>): { speakerId?: string; text?: string } {
  const de = params["dialogEvent"] as DialogEventObj | undefined;
  if (!de || typeof de !== "object") return {};
  const tokens = de.features?.text?.tokens;
  const text = Array.isArray(tokens) ? tokens.map((t) => String(t.value)).join(" ") : undefined;
  return { speakerId: de.speakerId, text };
}

function eventLabel(event: EventObj, sender: string): { kind: FeedKind; text?: string; line: string } {
  const type = event.eventType;
  const params = event.parameters ?? {};
  const who = displayName(sender);
  switch (type) {
    case "utterance": {
      const { speakerId, text } = dialogText(params);
      const speaker = speakerId || who;
      const mark = params["private"] === true ? " (private)" : "";
      return { kind: "utterance", text, line: `${speaker}${mark}: ${text ?? ""}` };
    }
    case "utterance_notice": {
      const { speakerId } = dialogText(params);
      return { kind: "notice", line: `${speakerId || who} said something privately` };
    }
    case "whisper": {
      const { speakerId, text } = dialogText(params);
      const context = params["context"];
      const suffix = typeof context === "string" && context ? ` [${context}]` : "";
      return { kind: "whisper", text, line: `whisper from ${speakerId || who}: ${text ?? ""}${suffix}` };
    }
    case "Floor_grant": {
      const holder = recipientsOf(event)[0];
      const ms = params["duration_ms"];
      return { kind: "control", line: `floor granted to ${displayName(holder ?? "?")} (${ms ?? "?"}ms)` };
    }
    case "Floor_revoke":
      return { kind: "control", line: `floor revoked (${params["reason"] ?? "no reason"})` };
    case "Floor_request":
      return { kind: "control", line: `${who} requested the floor (${params["request_reason"] ?? "?"})` };
    case "invite": {
      const invitee = recipientsOf(event).map(displayName).join(", ");
      const context = typeof params["context"] === "string" ? ` [${params["context"]}]` : "";
      return { kind: "control", line: `${invitee || "someone"} invited${context}` };
    }
    case "uninvite":
      return { kind: "control", line: `${recipientsOf(event).map(displayName).join(", ")} removed` };
    case "bye":
      return { kind: "control", line: `${who} left` };
    default:
      return { kind: "control", line: `${type} from ${who}` };
  }
}

/** One feed entry per delivered envelope; order in the feed is delivery order. */
export function renderEnvelope(wireText: string): FeedEntry {
  const env = JSON.parse(wireText) as EnvelopeObj;
  const sender = env.ovon.sender.from;
  const parts = env.ovon.events.map((e) => eventLabel(e, sender));
  const main = parts[0] ?? { kind: "control" as FeedKind, line: "(empty envelope)" };
  return {
    kind: main.kind,
    speaker: displayName(sender),
    ...(main.text !== undefined ? { text: main.text } : {}),
    label: parts.map((p) => p.line).join("; "),
    eventTypes: env.ovon.events.map((e) => e.eventType),
    wire: wireText,
    envelope: env,
  };
}
