"""Exception hierarchy shared by all modules.

Every error carries a short machine readable ``code`` so the command line
front end can report failures as JSON.
"""


class StratnetError(Exception):
    """Base class for library errors."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class DegenerateInputError(StratnetError, ValueError):
    code = "degenerate_input"


class DomainError(StratnetError, ValueError):
    code = "domain"


class EdgeListParseError(StratnetError, ValueError):
    """Malformed edge list; ``line`` is the 1-based row of the offending entry."""

    code = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

    def to_dict(self):
        d = super().to_dict()
        d["line"] = self.line
        return d


class NoConvergenceError(StratnetError, RuntimeError):
    """Iteration budget exhausted; ``last`` holds the final iterate."""

    code = "no_convergence"

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NonexistenceError(StratnetError, ValueError):
    """Maximum likelihood estimate does not exist for the listed players."""

    code = "nonexistence"

    def __init__(self, message, players=()):
        super().__init__(message)
        self.players = list(players)

    def to_dict(self):
        d = super().to_dict()
        d["players"] = [int(p) for p in self.players]
        return d


class IdentificationError(StratnetError, ValueError):
    code = "identification"


class SingularityError(StratnetError, ValueError):
    code = "singular"


class ContractionViolationError(StratnetError, ValueError):
    code = "contraction_violation"


class NonContractionError(StratnetError, RuntimeError):
    """Nested pseudo-likelihood iterations oscillate or diverge."""

    code = "non_contraction"

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class IllConditionedError(StratnetError, ValueError):
    code = "ill_conditioned"


class ScaleError(StratnetError, ValueError):
    code = "scale"


class StructuralError(StratnetError, ValueError):
    code = "structural"
