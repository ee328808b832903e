"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes: usage problems exit 1, data/format
problems exit 2, numeric degeneracies exit 3.
"""


class EedlabError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(EedlabError):
    """An argument violates a documented precondition."""


class FormatError(EedlabError):
    """A file failed validation while being parsed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateInputError(EedlabError):
    """Input is numerically unusable (e.g. zero-norm vector in a cosine)."""


class DegenerateNormalizationError(DegenerateInputError):
    """The latent normalization constant vanished (constant feature map)."""


class UnsupportedActionError(EedlabError):
    """The requested operation is undecidable or excluded for this action."""
