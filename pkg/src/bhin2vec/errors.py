"""Exception types shared across the package."""


class Bhin2vecError(Exception):
    """Base class for every error this package raises on purpose."""


class MalformedRecord(Bhin2vecError):
    """An input line does not have the expected number of fields."""


class UnknownNodeType(Bhin2vecError):
    """An edge references a node that has no entry in the type file."""


class EmptyGraph(Bhin2vecError):
    """No nodes survive loading and degree filtering."""


class IsolatedType(Bhin2vecError):
    """A node type has no neighbor in the type-level network."""


class DeadEnd(Bhin2vecError):
    """A walk reached a node without neighbors."""


class NonFiniteLoss(Bhin2vecError):
    """The batch loss overflowed, usually a divergent learning rate."""


class DegenerateRatio(Bhin2vecError):
    """Training-ratio normalization hit a zero or non-finite mean."""


class ShapeMismatch(Bhin2vecError):
    """Operands do not have compatible shapes."""


class InfeasibleSplit(Bhin2vecError):
    """The requested test fraction cannot be reached without isolating nodes."""


class InsufficientCandidates(Bhin2vecError):
    """Fewer ranking candidates exist than the protocol requires."""


class SingleClass(Bhin2vecError):
    """A node type carries only one label class, F1 is degenerate."""


class CorruptCheckpoint(Bhin2vecError):
    """Checkpoint file failed its magic or integrity check."""


class VersionMismatch(Bhin2vecError):
    """Checkpoint was written by an incompatible version or configuration."""


class InfeasibleSpec(Bhin2vecError):
    """A synthetic-network request cannot be satisfied."""


class MissingHistory(Bhin2vecError):
    """The transition-history file does not exist or is empty."""
