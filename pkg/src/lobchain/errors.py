"""Exception types shared across the package."""


class LobchainError(Exception):
    """Base class; the CLI converts these into structured non-zero exits."""


# feed / book reconstruction

class FeedError(LobchainError):
    pass


class MalformedPayload(FeedError):
    pass


class UnknownEventType(FeedError):
    pass


class DeltaBeforeSnapshot(FeedError):
    pass


class EmptySide(FeedError):
    pass


# on-chain ingestion

class ChainError(LobchainError):
    pass


class TopicMismatch(ChainError):
    pass


class MalformedData(ChainError):
    pass


class SplitFill(ChainError):
    pass


class ZeroAmount(ChainError):
    pass


class PriceOutOfRange(ChainError):
    pass


class NegativeOffset(ChainError):
    pass


class ReorgBufferError(ChainError):
    pass


class RpcError(ChainError):
    def __init__(self, message, code=None, retryable=True):
        super().__init__(message)
        self.code = code
        self.retryable = retryable


class ChunkTooLarge(RpcError):
    def __init__(self, message, code=None):
        super().__init__(message, code=code, retryable=True)


# stats kernel

class StatsError(LobchainError):
    pass


class RankDeficient(StatsError):
    pass


class LeverageOne(StatsError):
    pass


class EmptyInput(StatsError):
    pass


class DegenerateClusters(StatsError):
    pass


# calibration

class CalibrationError(LobchainError):
    pass


class NoValidCells(CalibrationError):
    pass


class EmptyComparable(CalibrationError):
    pass


# measures

class MeasureError(LobchainError):
    pass


class InsufficientTrades(MeasureError):
    pass


class InsufficientBuckets(MeasureError):
    pass


class NotConverged(MeasureError):
    pass


# stylized facts

class NoEvents(LobchainError):
    pass


class NoTrades(LobchainError):
    pass


# panel

class PanelError(LobchainError):
    pass


class InsufficientEligible(PanelError):
    pass


# synthetic venue

class ConfigInvalid(LobchainError):
    pass
