"""Exception hierarchy shared by all rislink modules."""


class RisLinkError(Exception):
    """Base class for every error raised by this package."""


class InvalidScenario(RisLinkError, ValueError):
    pass


class DimensionMismatch(RisLinkError, ValueError):
    pass


class IndexOutOfRange(RisLinkError, IndexError):
    pass


class ZeroChannel(RisLinkError, ValueError):
    pass


class RankDeficient(RisLinkError, ValueError):
    pass


class NonFiniteObjective(RisLinkError, FloatingPointError):
    pass


class Infeasible(RisLinkError):
    """No transmit vector meets the constructive-interference constraints."""


class CombinatorialCap(RisLinkError, ValueError):
    pass


class DegenerateObjective(RisLinkError, ValueError):
    pass


class SearchSpaceTooLarge(RisLinkError, ValueError):
    pass


class MissingActiveChannels(RisLinkError, ValueError):
    pass


class MissingEveChannels(RisLinkError, ValueError):
    pass


class DemandInfeasible(RisLinkError):
    """The second user's rate demand cannot be met at the power budget."""


class MissingBroadcast(RisLinkError, ValueError):
    pass


class ParseError(RisLinkError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(RisLinkError, ValueError):
    def __init__(self, message, key=None, line=None):
        prefix = ""
        if key is not None:
            prefix += f"{key}: "
        if line is not None:
            prefix = f"line {line}: " + prefix
        super().__init__(prefix + message)
        self.key = key
        self.line = line
