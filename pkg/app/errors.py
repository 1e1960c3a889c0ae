"""Exceptions raised by the simulator."""


class LoRadarError(Exception):
    """Base class for all simulator errors."""


class ConfigError(LoRadarError, ValueError):
    """Invalid waveform or experiment configuration."""


class BandwidthMismatch(ConfigError):
    pass


class ScheduleIndivisible(ConfigError):
    pass


class SamplingOverrun(ConfigError):
    pass


class BinOffsetNonInteger(ConfigError):
    pass


class UnknownConfigKey(ConfigError):
    pass


class DelayExceedsGuard(LoRadarError, ValueError):
    """A target delay would reach past the mixing guard Tmix."""


class OutOfSymbol(LoRadarError, ValueError):
    """Time argument outside [0, T)."""


class LengthMismatch(LoRadarError, ValueError):
    pass


class InsufficientSupport(LoRadarError):
    """Fewer supported rows than requested detections."""


class MissingPairEstimate(LoRadarError):
    """An antenna pair has no velocity-stage coefficient."""


class RankDeficient(UserWarning):
    """Selected atoms are numerically dependent."""
