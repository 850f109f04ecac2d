"""Exception hierarchy. Every domain error derives from ``ReglabError`` so the
CLI can map them to exit code 1 in one place."""


class ReglabError(Exception):
    pass


class ParseError(ReglabError, ValueError):
    pass


class SchemaError(ReglabError, ValueError):
    pass


class GeometryError(ReglabError, ValueError):
    pass


class DimensionMismatch(ReglabError, ValueError):
    pass


class MissingLogits(ReglabError, ValueError):
    pass


class ZeroCountClass(ReglabError, ValueError):
    def __init__(self, class_name):
        super().__init__(f"class {class_name!r} has zero annotations; its weight is undefined")
        self.class_name = class_name


class ManifoldMismatch(ReglabError, ValueError):
    pass


class ZeroNormAfterStep(ReglabError, ArithmeticError):
    pass


class NonFiniteObjective(ReglabError, ArithmeticError):
    pass


class NonPositiveVariance(ReglabError, ValueError):
    pass


class EmptyDataset(ReglabError, ValueError):
    pass


class InfeasibleConfig(ReglabError, ValueError):
    pass


class DivergenceDetected(ReglabError, ArithmeticError):
    pass
