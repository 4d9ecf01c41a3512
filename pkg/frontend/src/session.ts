/**
 * Live console session: one participant attached to one conversation.
 *
 * The session is a pure client of the service's public API. It reads the
 * feed from the WebSocket, backfills history from the transcript endpoint,
 * and sends composed envelopes through the HTTP submit endpoint so every
 * send gets an acknowledged sequence number back.
 */

import {
  ComposerState,
  EnvelopeObj,
  FeedEntry,
  composeEnvelope,
  composerProblems,
  displayName,
  emptyComposer,
  recipientsOf,
  renderEnvelope,
} from "./wire.js";

export type SessionState = "idle" | "connecting" | "connected" | "rejected" | "closed";

export interface ParticipantInfo {
  uri: string;
  role: string;
  joined_at_tick: number;
}

export interface FloorIndicator {
  holderUri: string | null;
  durationMs: number | null;
  observedAtMs: number | null;
}

/** Cosmetic countdown; the server's lease clock stays authoritative. */
export function leaseRemainingMs(floor: FloorIndicator, nowMs: number): number | null {
  if (floor.holderUri === null || floor.durationMs === null || floor.observedAtMs === null) {
    return null;
  }
  return Math.max(0, floor.durationMs - (nowMs - floor.observedAtMs));
}

export interface WsHooks {
  onOpen: () => void;
  onMessage: (text: string) => void;
  onClose: (code: number, reason: string) => void;
}

export interface WsHandle {
  send(text: string): void;
  close(): void;
}

export type WsFactory = (url: string, hooks: WsHooks) => WsHandle;

export interface SessionOptions {
  fetchImpl?: typeof fetch;
  wsFactory?: WsFactory;
  nowMs?: () => number;
  display?: string;
}

export interface SendResult {
  ok: boolean;
  seq?: number;
  errors: string[];
}

export class ConsoleSession {
  readonly baseUrl: string;
  readonly conversationId: string;
  readonly selfUri: string;
  readonly display: string;

  state: SessionState = "idle";
  banner: string | null = null;
  feed: FeedEntry[] = [];
  participants: ParticipantInfo[] = [];
  convenerUri: string | null = null;
  floor: FloorIndicator = { holderUri: null, durationMs: null, observedAtMs: null };
  composer: ComposerState = emptyComposer();
  lastAckSeq: number | null = null;

  private readonly fetchImpl: typeof fetch;
  private readonly wsFactory: WsFactory | null;
  private readonly nowMs: () => number;
  private ws: WsHandle | null = null;
  private backfilled = false;
  // frames that arrived before the backfill landed, in delivery order
  private pendingFrames: string[] = [];
  // wires the backfill already covers; each may absorb one socket delivery
  // (the service flushes buffered views on attach, overlapping the backfill)
  private absorb = new Map<string, number>();

  constructor(baseUrl: string, conversationId: string, selfUri: string, options: SessionOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.conversationId = conversationId;
    this.selfUri = selfUri;
    this.display = options.display ?? displayName(selfUri);
    this.fetchImpl = options.fetchImpl ?? fetch;
    this.wsFactory = options.wsFactory ?? null;
    this.nowMs = options.nowMs ?? Date.now;
  }

  private async getJson(path: string): Promise<any> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new Error(`GET ${path} failed: ${response.status}`);
    }
    return response.json();
  }

  /**
   * Attach: load the roster, open the socket, then backfill the feed from
   * the transcript endpoint so history delivered before we connected shows
   * up too. Every recorded view reaches the socket at most once, so each
   * backfilled wire absorbs at most one duplicate frame, whichever side of
   * the fetch it lands on.
   */
  async join(): Promise<void> {
    if (this.wsFactory === null) {
      throw new Error("session has no websocket factory");
    }
    this.state = "connecting";
    await this.refreshParticipants();

    const wsBase = this.baseUrl.replace(/^http/, "ws");
    const url = `${wsBase}/conversations/${this.conversationId}/ws?uri=${encodeURIComponent(this.selfUri)}`;
    const opened = new Promise<void>((resolve, reject) => {
      this.ws = this.wsFactory!(url, {
        onOpen: () => resolve(),
        onMessage: (text) => this.handleFrame(text),
        onClose: (code, reason) => {
          this.handleClose(code, reason);
          reject(new Error(reason || `closed ${code}`));
        },
      });
    });
    await opened.catch(() => undefined);
    // handleClose may have run inside the socket callbacks by now
    const state = this.state as SessionState;
    if (state === "rejected" || state === "closed") {
      return;
    }

    const transcript = await this.getJson(
      `/conversations/${this.conversationId}/transcript?for=${encodeURIComponent(this.selfUri)}`,
    );
    const backfill: FeedEntry[] = [];
    for (const entry of transcript.entries ?? []) {
      const wire = JSON.stringify(entry.view);
      backfill.push(renderEnvelope(wire));
      this.absorb.set(wire, (this.absorb.get(wire) ?? 0) + 1);
    }
    this.feed = [...backfill, ...this.feed];
    for (const entry of backfill) this.observeControl(entry.envelope);

    const raced = this.pendingFrames;
    this.pendingFrames = [];
    this.backfilled = true;
    for (const frame of raced) this.appendFrame(frame);
    if (this.state === "connecting") {
      this.state = "connected";
    }
  }

  async refreshParticipants(): Promise<void> {
    const roster = await this.getJson(`/conversations/${this.conversationId}/participants`);
    this.participants = roster.participants ?? [];
    const convener = this.participants.find((p) => p.role === "convener");
    this.convenerUri = convener ? convener.uri : null;
    if (this.floor.holderUri === null && roster.holder) {
      this.floor = { holderUri: roster.holder, durationMs: null, observedAtMs: null };
    }
  }

  handleFrame(text: string): void {
    if (!this.backfilled) {
      this.pendingFrames.push(text);
      return;
    }
    this.appendFrame(text);
  }

  private appendFrame(text: string): void {
    const canonical = JSON.stringify(JSON.parse(text));
    const owed = this.absorb.get(canonical) ?? 0;
    if (owed > 0) {
      if (owed === 1) this.absorb.delete(canonical);
      else this.absorb.set(canonical, owed - 1);
      return;
    }
    const entry = renderEnvelope(text);
    this.feed.push(entry);
    this.observeControl(entry.envelope);
  }

  /** The floor indicator tracks the latest grant or revoke this session saw. */
  private observeControl(env: EnvelopeObj): void {
    for (const event of env.ovon.events) {
      if (event.eventType === "Floor_grant") {
        const holder = recipientsOf(event)[0] ?? null;
        const duration = event.parameters["duration_ms"];
        this.floor = {
          holderUri: holder,
          durationMs: typeof duration === "number" ? duration : null,
          observedAtMs: this.nowMs(),
        };
      } else if (event.eventType === "Floor_revoke") {
        this.floor = { holderUri: null, durationMs: null, observedAtMs: this.nowMs() };
      }
    }
  }

  handleClose(code: number, reason: string): void {
    if (code === 4403) {
      this.state = "rejected";
      this.banner = reason || "not authorized to participate";
    } else {
      if (this.state !== "rejected") this.state = "closed";
      if (reason && this.banner === null) this.banner = reason;
    }
    this.ws = null;
  }

  /**
   * Validate the composer, build the envelope, and submit it. Returns the
   * acknowledged seq on success, otherwise the problems to render inline;
   * nothing goes on the wire while problems remain.
   */
  async send(): Promise<SendResult> {
    const problems = composerProblems(this.composer);
    if (problems.length > 0) {
      return { ok: false, errors: problems };
    }
    if (this.composer.mode === "floor_request" && this.convenerUri === null) {
      return { ok: false, errors: ["convener unknown; roster not loaded"] };
    }
    const envelope = composeEnvelope(
      {
        conversationId: this.conversationId,
        selfUri: this.selfUri,
        display: this.display,
        startTime: new Date(this.nowMs()).toISOString(),
      },
      this.convenerUri ?? "",
      this.composer,
    );
    return this.submit(envelope);
  }

  async submit(envelope: EnvelopeObj): Promise<SendResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/conversations/${this.conversationId}/submit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(envelope),
    });
    const body: any = await response.json().catch(() => ({}));
    if (!response.ok) {
      const violations = Array.isArray(body.violations)
        ? body.violations.map((v: any) => `${v.rule}: ${v.message}`)
        : [String(body.error ?? response.status)];
      return { ok: false, errors: violations };
    }
    this.lastAckSeq = body.seq;
    this.composer.text = "";
    return { ok: true, seq: body.seq, errors: [] };
  }

  /** Wire form of every feed entry, in order; used to reconcile with the transcript endpoint. */
  feedWires(): string[] {
    return this.feed.map((e) => e.wire);
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
    if (this.state === "connected" || this.state === "connecting") {
      this.state = "closed";
    }
  }
}
