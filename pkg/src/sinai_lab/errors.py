"""Exception hierarchy shared by every module."""


class SinaiLabError(Exception):
    """Base class for all errors raised by the package."""


class SpecInvalid(SinaiLabError, ValueError):
    pass


class DomainError(SinaiLabError, ValueError):
    pass


class WindowOverflow(SinaiLabError, RuntimeError):
    pass


class TooLarge(SinaiLabError, ValueError):
    pass


class NotInGamma(SinaiLabError, ValueError):
    pass


class EmptyRange(SinaiLabError, ValueError):
    pass


class ScanExhausted(SinaiLabError, RuntimeError):
    """No rise of the requested height was found within the scan cap.

    ``side`` is ``"+"`` or ``"-"`` (or ``"both"``).
    """

    def __init__(self, side, cap):
        self.side = side
        self.cap = cap
        super().__init__(f"no rise found on side {side!r} within {cap} sites")


class HorizonTooShort(SinaiLabError, ValueError):
    pass


class GridMismatch(SinaiLabError, ValueError):
    pass


class KindMismatch(SinaiLabError, ValueError):
    pass


class ConfigInvalid(SinaiLabError, ValueError):
    """Raised with one or more ``(field_path, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        msg = "; ".join(f"{path}: {text}" for path, text in self.problems)
        super().__init__(msg)
