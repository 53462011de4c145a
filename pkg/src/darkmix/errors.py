"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures to distinct process exit statuses.
"""


class DarkmixError(Exception):
    exit_code = 1


class DesignError(DarkmixError, ValueError):
    exit_code = 2


class DimensionError(DarkmixError, ValueError):
    exit_code = 3


class SchemaError(DarkmixError, ValueError):
    exit_code = 4


class TruncatedDataError(DarkmixError, ValueError):
    exit_code = 5


class ModelFileError(DarkmixError, ValueError):
    """Malformed model file; ``field`` holds the offending JSON path."""

    exit_code = 6

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ComponentDeathError(DarkmixError, RuntimeError):
    exit_code = 7

    def __init__(self, component, weight, n, trace=None):
        super().__init__(
            f"component {component} collapsed (weight {weight:.3g} < 1/n = {1.0 / n:.3g}); "
            "refit with a smaller number of components"
        )
        self.component = component
        # manifest log-likelihoods of the EM iterations run before the collapse
        self.trace = trace


class EStepError(DarkmixError, FloatingPointError):
    exit_code = 8

    def __init__(self, pixel):
        super().__init__(f"pixel {pixel} has zero likelihood under every component")
        self.pixel = pixel


class ScoringError(DarkmixError, ArithmeticError):
    exit_code = 9


class CriteriaError(DarkmixError, ValueError):
    exit_code = 10


class BootstrapError(DarkmixError, RuntimeError):
    exit_code = 11


class DiagnosticError(DarkmixError, ValueError):
    exit_code = 12
