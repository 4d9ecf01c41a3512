export {
  ConsoleSession,
  leaseRemainingMs,
  type FloorIndicator,
  type ParticipantInfo,
  type SendResult,
  type SessionOptions,
  type SessionState,
  type WsFactory,
  type WsHandle,
  type WsHooks,
} from "./session.js";
export {
  composeEnvelope,
  composerProblems,
  displayName,
  emptyComposer,
  floorRequestEnvelope,
  recipientsOf,
  renderEnvelope,
  SCHEMA_VERSION,
  utteranceEnvelope,
  whisperEnvelope,
  type BuildContext,
  type ComposerMode,
  type ComposerState,
  type DialogEventObj,
  type EnvelopeObj,
  type EventObj,
  type FeedEntry,
  type FeedKind,
  type TokenObj,
} from "./wire.js";
