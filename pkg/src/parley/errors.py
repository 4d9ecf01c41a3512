"""Exception types shared across the package."""

from __future__ import annotations


class ParleyError(Exception):
    """Base class for every error raised by this package."""


# -- envelope parsing / serialization ----------------------------------------

class MalformedDocument(ParleyError):
    """Input text is not a well-formed envelope document."""


class MissingField(ParleyError):
    """A required top-level envelope field is absent."""

    def __init__(self, field: str):
        super().__init__(f"missing required field: {field}")
        self.field = field


class EmptyEvents(ParleyError):
    """An envelope carried no events."""


class InvalidDocument(ParleyError):
    """Serialization was attempted on a document with validation errors."""

    def __init__(self, violations):
        super().__init__(
            "document has violations: " + "; ".join(v.rule for v in violations)
        )
        self.violations = list(violations)


# -- floor state --------------------------------------------------------------

class UnknownParticipant(ParleyError):
    """The named URI is not a participant of this floor."""


class DuplicateParticipant(ParleyError):
    """The URI already participates in this floor."""


class CannotRemoveConvener(ParleyError):
    """The convener cannot leave or be ejected from an open conversation."""


class HolderOccupied(ParleyError):
    """A lease is already held; revoke or clear it first."""


class NoHolder(ParleyError):
    """No lease is currently held."""


class AlreadyMuted(ParleyError):
    pass


class NotMuted(ParleyError):
    pass


class AlreadyParticipant(ParleyError):
    """Invitation target already participates."""


# -- routing ------------------------------------------------------------------

class UnknownSender(ParleyError):
    """Envelope sender is not a participant of the floor."""


class InvalidEnvelope(ParleyError):
    """Envelope failed validation at the routing or service boundary."""

    def __init__(self, violations):
        super().__init__(
            "invalid envelope: " + "; ".join(v.rule for v in violations)
        )
        self.violations = list(violations)


class NothingToRedact(ParleyError):
    """Redaction requires at least one utterance event."""


# -- convener ------------------------------------------------------------------

class InvalidPolicy(ParleyError):
    """A policy document failed validation."""


# -- agents / simulator -------------------------------------------------------

class InvalidScript(ParleyError):
    """A conversant script or scenario document is malformed."""


# -- service ------------------------------------------------------------------

class UnknownConversation(ParleyError):
    pass


class NotInvited(ParleyError):
    """Attach was attempted by a URI with no invite on record."""


class DuplicateConnection(ParleyError):
    """The URI already has a live connection to this conversation."""
