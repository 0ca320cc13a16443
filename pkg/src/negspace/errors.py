"""Exception hierarchy shared by all negspace modules.

Every error carries an ``exit_code`` consumed by the CLI:
2 config error, 3 data error, 4 LLM unavailable, 5 divergence.
"""


class NegspaceError(Exception):
    exit_code = 3


class ConfigError(NegspaceError):
    """Invalid configuration, missing inputs, inconsistent variant wiring."""

    exit_code = 2


# --- embedding store ---

class FormatError(NegspaceError):
    """File magic, version, or structural layout does not match."""


class CorruptError(NegspaceError):
    """Checksum mismatch or truncated payload."""


class DataError(NegspaceError):
    """Values violate a data invariant (non-finite, not normalized, ...)."""


class ShapeError(NegspaceError):
    """Dimension or row-count mismatch between operands."""


class DegenerateRowError(DataError):
    """A row that cannot be normalized (zero or cancelled to zero)."""

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"degenerate (zero-norm) row at index {row}")


# --- lexicon ---

class EmptyLexiconError(NegspaceError):
    """No labels where at least one is required."""


class DuplicateLabelError(NegspaceError):
    def __init__(self, text: str, first_line: int, second_line: int):
        self.text = text
        self.first_line = first_line
        self.second_line = second_line
        super().__init__(
            f"duplicate label {text!r} at lines {first_line} and {second_line}"
        )


class TemplateError(ConfigError):
    """Prompt template does not contain exactly one placeholder."""


# --- concepts / LLM ---

class LlmUnavailableError(NegspaceError):
    """Endpoint unreachable after retries, or fixture/cache miss offline."""

    exit_code = 4


class LlmParseError(NegspaceError):
    """Response text could not be parsed; carries the raw text."""

    def __init__(self, message: str, raw_text: str):
        self.raw_text = raw_text
        super().__init__(f"{message}; raw response: {raw_text[:200]!r}")


class IncompleteConceptError(NegspaceError):
    """A class left without a superclass, or a superclass without backgrounds."""


# --- mining ---

class EmptyReferenceError(NegspaceError):
    """Quantile scoring needs a non-empty reference embedding set."""


class GroupingError(NegspaceError):
    """Group count exceeds the number of selected negatives."""


# --- metrics ---

class EmptyInputError(NegspaceError):
    """Metric computation over an empty score list."""


# --- tuning ---

class LabelError(NegspaceError):
    """Class id outside the valid range."""


class DivergenceError(NegspaceError):
    """Training loss became non-finite."""

    exit_code = 5

    def __init__(self, epoch: int, term: str):
        self.epoch = epoch
        self.term = term
        super().__init__(f"non-finite {term} loss at epoch {epoch}")
