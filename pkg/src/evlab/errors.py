"""Exception taxonomy shared by all evlab modules."""


class EvlabError(Exception):
    """Base class for all evlab errors."""


class ConfigurationError(EvlabError):
    """Invalid grid or solver configuration (odd N, mismatched grids, ...)."""


class UsageError(EvlabError):
    """An operation was called outside its contract."""


class PreconditionError(UsageError):
    """A stated precondition of an operation does not hold for the inputs."""


class FormatError(EvlabError):
    """Malformed on-disk data (snapshot, manifest, config file)."""


class IntegrityError(EvlabError):
    """Internal consistency violation in constructed data (e.g. a positive
    energy jump in a force-free trace)."""


class BlowUpError(EvlabError):
    """Time integration produced non-finite values."""

    def __init__(self, time: float):
        super().__init__(f"solution blew up at t={time:.6g}")
        self.time = time
