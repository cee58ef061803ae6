from typing import List, Optional, Sequence


class FabricError(ValueError):
    """ Base class of every error raised by the toolkit.
    Derives from ValueError so routes can keep converting ValueError into HTTP 400.
    """


class ArchParseError(FabricError):
    """ Raised when an architecture document cannot be read.
    line/ column are 1-based and only set for syntax errors.
    """

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.line = line
        self.column = column


class ArchValidationError(FabricError):
    """ Raised when a parsed architecture violates one or more invariants. """

    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class RRGFormatError(FabricError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SitePlanError(FabricError):
    pass


class CustomRuleError(FabricError):
    pass


class BlifError(FabricError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class CombinationalLoopError(FabricError):
    """ Raised with the list of nodes forming the loop. """

    def __init__(self, nodes: Sequence[object]):
        super().__init__("combinational loop through: " + " -> ".join(str(node) for node in nodes))
        self.nodes = list(nodes)


class VectorWidthError(FabricError):
    pass


class PackingError(FabricError):
    pass


class UnroutableError(FabricError):
    """ Raised when negotiated congestion does not converge.
    `overused` holds one human-readable entry per overused node.
    """

    def __init__(self, iterations: int, overused: List[str]):
        super().__init__(
            f"unroutable after {iterations} iterations, {len(overused)} overused nodes: "
            + ", ".join(overused[:10])
        )
        self.iterations = iterations
        self.overused = overused


class AnnotationError(FabricError):
    pass


class BitstreamMismatchError(FabricError):
    pass


class ReportError(FabricError):
    pass
