"""Exception hierarchy.

Every error carries a stable ``code`` so the CLI can emit single-line,
machine-readable failures.
"""


class GossipQCDError(Exception):
    code = "E_RUNTIME"

    def one_line(self) -> str:
        msg = " ".join(str(self).split())
        return f"{self.code}: {msg}"


# topology
class InvalidEdge(GossipQCDError):
    code = "E_INVALID_EDGE"


class DisconnectedGraph(GossipQCDError):
    code = "E_DISCONNECTED"


class TooLarge(GossipQCDError):
    code = "E_TOO_LARGE"


class EmptySupport(GossipQCDError):
    code = "E_EMPTY_SUPPORT"


class InvalidMatching(GossipQCDError):
    code = "E_INVALID_MATCHING"


class NotEnumerable(GossipQCDError):
    code = "E_NOT_ENUMERABLE"


# markov
class NotIrreducible(GossipQCDError):
    code = "E_NOT_IRREDUCIBLE"


class DegenerateBound(GossipQCDError):
    code = "E_DEGENERATE_BOUND"


# gossip
class InvalidEps(GossipQCDError):
    code = "E_INVALID_EPS"


# obsmodel
class NondistinguishablePair(GossipQCDError):
    code = "E_NONDISTINGUISHABLE"


class OutOfSupport(GossipQCDError):
    code = "E_OUT_OF_SUPPORT"


class InvalidDensity(GossipQCDError):
    code = "E_INVALID_DENSITY"


# detector
class NonFinite(GossipQCDError):
    code = "E_NON_FINITE"


class OutOfRange(GossipQCDError):
    code = "E_OUT_OF_RANGE"


class IdentityViolation(GossipQCDError):
    code = "E_IDENTITY"


# experiments
class ZeroFalseAlarms(GossipQCDError):
    code = "E_ZERO_FALSE_ALARMS"


class DegenerateFit(GossipQCDError):
    code = "E_DEGENERATE_FIT"


# config
class ParseError(GossipQCDError):
    code = "E_PARSE"


class ValidationError(GossipQCDError):
    code = "E_VALIDATION"

    def __init__(self, field: str, message: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class MissingSeed(GossipQCDError):
    code = "E_NO_SEED"
