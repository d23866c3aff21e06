"""Exception types shared across the package.

Every error raised on a documented failure path derives from
NudgeforgeError so callers can catch platform failures in one place
without swallowing programming errors.
"""

from __future__ import annotations


class NudgeforgeError(Exception):
    """Base class for all package errors."""


# --- event validation -------------------------------------------------------

class SchemaError(NudgeforgeError):
    """An event failed validation against the schema catalog."""


class UnknownEvent(SchemaError):
    """(stream, event_name) is not registered in the catalog."""


class MissingKey(SchemaError):
    """A required payload key is absent."""


class UnknownKey(SchemaError):
    """A payload key is not declared for the event."""


class TypeMismatch(SchemaError):
    """A payload value does not match its declared type."""


class PiiViolation(SchemaError):
    """A payload key or value triggered the PII guard."""


class ParseError(NudgeforgeError):
    """A wire line or serialized document could not be parsed."""


# --- device buffer ----------------------------------------------------------

class BufferFull(NudgeforgeError):
    """The device buffer is at capacity; the event was not logged."""


class UnknownNudge(NudgeforgeError):
    """A reaction referenced a nudge_id this device has never seen."""


class IllegalTransition(NudgeforgeError):
    """A nudge reaction transition is not allowed from the current state."""


# --- platform core ----------------------------------------------------------

class MalformedBatch(NudgeforgeError):
    """A batch header or body is structurally invalid."""


class ValidationError(NudgeforgeError):
    """A batch was rejected during ingest (bad event, device mismatch,
    or a sequence collision with different content)."""


class UnknownTrait(NudgeforgeError):
    """A trait name is not present in the registry."""


class EmptyGroup(NudgeforgeError):
    """A metric aggregation was asked for over zero usable subjects."""


# --- models -----------------------------------------------------------------

class EmptyInput(NudgeforgeError):
    """A fit was attempted on an empty data set."""


class DegenerateFeatures(NudgeforgeError):
    """The hazard fit cannot identify weights (single class or perfect
    separation with no regularization)."""


class SeriesTooShort(NudgeforgeError):
    """The series has too few points for the requested fit."""


# --- bandits ----------------------------------------------------------------

class DimensionMismatch(NudgeforgeError):
    """A context vector does not match the policy dimension."""


class NoIndifference(NudgeforgeError):
    """No subsidy in the search bracket makes the arm indifferent."""


# --- experiments ------------------------------------------------------------

class OddClusterCount(NudgeforgeError):
    """Pairwise matching needs an even number of clusters."""


class InsufficientData(NudgeforgeError):
    """Not enough observations to produce the requested estimate."""


# --- orchestrator -----------------------------------------------------------

class UnknownExperiment(NudgeforgeError):
    """No experiment with the given id is registered."""


class PolicyUnavailable(NudgeforgeError):
    """An adaptive plan has no usable policy state."""


class ExperimentNotRunning(NudgeforgeError):
    """A tick or control action requires a running experiment."""


# --- simulator --------------------------------------------------------------

class InvalidConfig(NudgeforgeError):
    """A scenario or server config failed validation."""
