"""Exception and warning types raised across the package."""


class DDSError(Exception):
    """Base class for all package errors."""


class InvalidInput(DDSError, ValueError):
    pass


class FormatError(DDSError, ValueError):
    """A binary or JSON file does not follow its declared layout."""


class MismatchedChannels(DDSError, ValueError):
    pass


class DegenerateNorm(DDSError, ArithmeticError):
    """A row that enters a cosine has (numerically) zero norm."""


class EmptyPrototypeSet(DDSError):
    """No mask group keeps enough visible points to form a prototype."""


class SingularSystem(DDSError, ArithmeticError):
    pass


class EigFailure(DDSError, ArithmeticError):
    pass


class LengthMismatch(DDSError, ValueError):
    pass


class ConfigError(DDSError):
    pass


class StageError(DDSError):
    def __init__(self, stage: str, digest: str, cause: BaseException):
        self.stage = stage
        self.digest = digest
        self.cause = cause
        super().__init__(f"stage '{stage}' failed (inputs {digest[:12]}): {cause}")


class NoConvergenceWarning(RuntimeWarning):
    pass


class DegenerateDataWarning(RuntimeWarning):
    pass
