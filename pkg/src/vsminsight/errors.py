"""Exception hierarchy shared across the package."""


class VsmInsightError(Exception):
    """Base class for all errors raised by this package."""


# --- graph model ---------------------------------------------------------


class VsmSyntaxError(VsmInsightError):
    """The document is not well-formed (e.g. broken JSON)."""


class SchemaError(VsmInsightError):
    """The document is well-formed but uses unknown kinds, fields or types."""


class ValidationError(VsmInsightError):
    """A graph invariant is broken. Carries the offending violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"graph validation failed: {detail}")


class UnknownNode(VsmInsightError):
    pass


# --- simulation ----------------------------------------------------------


class InvalidGraph(VsmInsightError):
    """The graph fails validation and cannot be simulated."""


class HorizonOverflow(VsmInsightError):
    """The event count exceeded the configured cap."""


class EmptySeries(VsmInsightError):
    pass


# --- data catalog --------------------------------------------------------


class UnknownSection(VsmInsightError):
    pass


class UnknownElement(VsmInsightError):
    pass


class CapabilityError(VsmInsightError):
    """Payload access was attempted without the payload capability."""


class ContextMismatch(VsmInsightError):
    """Simulation output provenance does not match the supplied graph."""


# --- llm client ----------------------------------------------------------


class BackendError(VsmInsightError):
    """Base class for chat-backend failures."""


class AuthError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class TransportError(BackendError):
    pass


class ProviderError(BackendError):
    pass


class ScriptExhausted(BackendError):
    """The replay script has no response left for this call."""


class ScriptMismatch(BackendError):
    """The request did not contain the strings the script expected."""


# --- agent runtime -------------------------------------------------------


class EnvelopeParseError(VsmInsightError):
    pass


class UnknownTool(VsmInsightError):
    pass


class StructuredOutputError(VsmInsightError):
    """The model failed to produce a valid envelope within max_retries."""


class StepLimitExceeded(VsmInsightError):
    pass


class PayloadTooLarge(VsmInsightError):
    """A rendered payload exceeds the per-response token budget."""


class IsolationBreach(VsmInsightError):
    """Raw payload content leaked into an orchestrator prompt."""


class OrchestratorBackendError(BackendError):
    """Transport failure mid-run; carries the trace gathered so far."""

    def __init__(self, message, steps):
        super().__init__(message)
        self.steps = steps


# --- metrics / evaluation ------------------------------------------------


class LengthMismatch(VsmInsightError):
    pass


class EmptyVector(VsmInsightError):
    pass


class ZeroVariance(VsmInsightError):
    """Correlation is undefined for a constant vector."""
