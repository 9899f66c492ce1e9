"""Exception hierarchy for cfherit."""


class CFHeritError(Exception):
    """Base class for all cfherit errors."""


class ModelSyntaxError(CFHeritError):
    """Raised on a malformed model-spec file, with line/column location."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {col}" if col is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.col = col


class ModelValidationError(CFHeritError):
    """Raised when a parsed model violates a structural constraint
    (unbound symbol, indicator not outermost, bad binding, ...)."""


class DegeneratePhenotypeError(CFHeritError):
    """Var(Y) = 0: every ratio estimand is undefined."""


class DegenerateStratumError(CFHeritError):
    """A conditioning stratum has probability zero."""


class ReportInconsistencyError(CFHeritError):
    """Computed estimands violate a report invariant beyond tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
