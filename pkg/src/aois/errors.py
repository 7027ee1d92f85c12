class AoisError(Exception):
    pass


class ModelError(AoisError, ValueError):
    pass


class ParseError(ModelError):
    pass


class StructureError(AoisError, ValueError):
    pass


class ProposalError(AoisError, ValueError):
    pass


class EstimatorError(AoisError, RuntimeError):
    pass


class BoundExceededError(AoisError):
    """An exact computation would exceed its configured enumeration or memory bound."""


class UndefinedVarianceError(AoisError, ValueError):
    pass
