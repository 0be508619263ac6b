"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation (overlapping
    supports, a window not contained in the master window, ...)."""


class BudgetError(RuntimeError):
    """An enumeration or table would exceed its configured size cap."""

    def __init__(self, message, required=None, cap=None):
        super().__init__(message)
        self.required = required
        self.cap = cap


class InvalidDistributionError(ValueError):
    """A probability table is non-positive or not normalized."""


class ReconstructionError(ValueError):
    """Two routes of a reconstruction (probes, anchors, enumerations or
    reference configurations) disagree beyond tolerance."""

    def __init__(self, message, witness=None, disagreement=None):
        super().__init__(message)
        self.witness = witness
        self.disagreement = disagreement
