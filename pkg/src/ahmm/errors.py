"""Exception types shared across the package."""


class AHMMError(Exception):
    """Base class for all package errors."""


class InputError(AHMMError, ValueError):
    """Bad argument: unknown state, level out of range, malformed prior."""


class HierarchyError(AHMMError):
    """The hierarchy cannot support the requested operation (e.g. no applicable child)."""


class ParseError(AHMMError, ValueError):
    """A model or trajectory file could not be parsed."""


class ZeroEvidence(AHMMError):
    """Evidence has probability zero under the current belief."""


class ModelEvidenceError(AHMMError):
    """Every particle died: the observations are inconsistent with the model."""
