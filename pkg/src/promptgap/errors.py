"""Exception types shared across the toolkit."""


class PromptGapError(Exception):
    """Base class for all toolkit errors."""


class EmptyDistribution(PromptGapError):
    """An answer distribution with zero total was passed where counts are required."""


class EmptyPool(PromptGapError):
    """Statistics requested over an empty record pool."""


class JudgeUnavailable(PromptGapError):
    """The judge endpoint failed after the configured retries."""


class EndpointUnavailable(PromptGapError):
    """A model endpoint failed after the configured retries."""


class EmbedderUnavailable(PromptGapError):
    """The embedding endpoint failed after the configured retries."""


class ImageMissing(PromptGapError):
    """A prompt references an image that cannot be resolved."""


class ZeroVector(PromptGapError):
    """A zero-norm row was passed to a cosine-similarity computation."""


class NotPSD(PromptGapError):
    """A kernel matrix violates positive semi-definiteness beyond tolerance."""


class InvalidK(PromptGapError):
    """Cluster count outside [1, n]."""


class InvalidTarget(PromptGapError):
    """Sampling target outside [0, n]."""


class ParseFailure(PromptGapError):
    """A generated completion did not contain the expected output marker."""


class InsufficientSkills(PromptGapError):
    """The skill pool is smaller than the number of skills to sample."""


class SchemaViolation(PromptGapError):
    """A dataset line failed schema validation."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class DecodeFailure(PromptGapError):
    """An image could not be decoded."""


class ConfigError(PromptGapError):
    """Invalid or incomplete run configuration."""
