"""Shared exception types."""


class TinybirdError(Exception):
    """Base class for all errors raised by this package."""

    module = "tinybird"


class ConfigError(TinybirdError):
    """Invalid configuration (bad block size, MTU too small, ...)."""

    module = "config"


class FramingError(TinybirdError):
    """Payload or sample-count granularity violated."""

    module = "codecs"


class StreamError(TinybirdError):
    """Malformed packet stream or stream header."""

    module = "protocol"


class ModelError(TinybirdError):
    """Weight file or model shape validation failure."""

    module = "tinyml"
