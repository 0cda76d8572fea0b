"""Exception hierarchy.

Every error raised on bad input derives from :class:`SeqRankError`, which is
itself a :class:`ValueError` so callers that only care about "bad value" can
catch the builtin.
"""


class SeqRankError(ValueError):
    pass


class InvalidInput(SeqRankError):
    pass


class InvalidObservation(SeqRankError):
    """Raised for NaN or infinite observations."""


class InvalidRandomizer(SeqRankError):
    pass


class InvalidRank(SeqRankError):
    pass


class InvalidCounts(SeqRankError):
    pass


class InvalidMatrix(SeqRankError):
    pass


class InvalidRectangle(SeqRankError):
    pass


class InvalidDepth(SeqRankError):
    pass


class TiesPresent(SeqRankError):
    """Tied observations where the continuous-data path requires none."""


class ConfigError(SeqRankError):
    pass


class ObserveAfterStop(SeqRankError):
    pass


class CorruptSnapshot(SeqRankError):
    pass


class SnapshotVersionError(CorruptSnapshot):
    pass


class UnknownScenario(SeqRankError):
    pass
