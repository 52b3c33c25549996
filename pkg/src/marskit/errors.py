"""Exception hierarchy shared by every marskit module."""


class MarsError(Exception):
    """Base class for all marskit failures."""


class InvalidRecord(MarsError, ValueError):
    """A record violates an invariant that is enforced at construction."""


class ClockMismatch(MarsError):
    """Two instants or streams on different clocks were combined."""


class NonMonotonicTimestamp(MarsError):
    pass


class EmptyStream(MarsError):
    pass


class DegenerateMarks(MarsError):
    """Two or more clock marks share the same source-clock reading."""


class MixedClockPairs(MarsError):
    pass


class MissingClockMarks(MarsError):
    pass


class UnsyncedInput(MarsError):
    pass


class TooFewSamples(MarsError):
    pass


class InvalidConfig(MarsError, ValueError):
    pass


class IoFailure(MarsError, OSError):
    pass


class MissingFile(MarsError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"missing file: {path}")


class MalformedLine(MarsError):
    """A line in a session file could not be parsed.

    Carries the file name, the 1-based line number and a short reason so a
    user can jump straight to the offending row.
    """

    def __init__(self, file, line, reason):
        self.file = str(file)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.file}:{line}: {reason}")
