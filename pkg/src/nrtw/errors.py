"""Shared exception types."""


class NrtwError(Exception):
    """Base class for workbench errors."""


class ShapeMismatchError(NrtwError, ValueError):
    pass


class NonFiniteError(NrtwError, FloatingPointError):
    pass


class GraphError(NrtwError, ValueError):
    pass


class FormatError(NrtwError, ValueError):
    pass


class DegenerateCnrError(NrtwError, ValueError):
    pass


class CandidateNotFoundError(NrtwError, KeyError):
    pass


class TrainingDiverged(NrtwError, RuntimeError):
    pass
