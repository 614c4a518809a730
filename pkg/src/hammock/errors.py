"""Exception hierarchy shared by all modules."""


class HammockError(Exception):
    pass


class InputError(HammockError, ValueError):
    """Bad caller input: wrong dimension, non-finite value, invalid label..."""


class ParseError(InputError):
    """A document failed to parse or validate.

    ``location`` names where (e.g. ``"trees[2].nodes[id=5]"`` or ``"line 14"``).
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class MalformedJSONError(ParseError):
    pass


class DanglingReferenceError(ParseError):
    pass


class FeatureIndexError(ParseError):
    pass


class UnknownTaskError(ParseError):
    pass


class TreeStructureError(ParseError):
    """Cycles, shared children, unreachable nodes, duplicate ids, bad classes."""


class NumericOverflowError(HammockError, ArithmeticError):
    pass
