from __future__ import annotations

from typing import Optional


class MetaMetaError(Exception): ...


class ConfigError(MetaMetaError): ...


class ShapeError(MetaMetaError): ...


class DifferentiationError(MetaMetaError): ...


class SamplingError(MetaMetaError): ...


class ClusteringError(MetaMetaError): ...


class CheckpointError(MetaMetaError): ...


class StreamExhaustedError(MetaMetaError): ...


class FeatureBankFormatError(MetaMetaError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
