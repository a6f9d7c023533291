"""Exception hierarchy shared by all portanet modules."""


class PortanetError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(PortanetError):
    pass


class UnresolvedShape(PortanetError):
    pass


class InvalidGraph(PortanetError):
    """Raised when a pass receives a graph that does not validate."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        super().__init__(f"graph has {len(self.violations)} violation(s): {lines}")


class ParseError(PortanetError):
    def __init__(self, message, *, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class MissingWeights(PortanetError):
    pass


class InvalidSpec(PortanetError):
    pass


class InvalidCost(PortanetError):
    pass


class InconsistentPlan(PortanetError):
    pass


class InvalidResolution(PortanetError):
    pass


class UnsupportedStride(PortanetError):
    pass


class InfeasibleTarget(PortanetError):
    pass


class EmptyCalibration(PortanetError):
    pass


class MissingRange(PortanetError):
    pass


class TopologyMismatch(PortanetError):
    pass


class ImageTooSmall(PortanetError):
    pass


class VariantCapExceeded(PortanetError):
    pass


class ToleranceWarning(UserWarning):
    """Pruning could not land within the requested tolerance of its target."""
