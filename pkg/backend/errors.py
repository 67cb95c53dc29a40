"""Exception hierarchy shared by the DeFusion backend."""
from __future__ import annotations

from typing import Optional, Sequence


class DeFusionError(Exception):
    """Base class for every error raised by the backend."""


class ShapeError(DeFusionError, ValueError):
    """An op received operands whose shapes do not fit together."""

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        rendered = " vs ".join(str(s) for s in self.shapes)
        message = f"{op}: incompatible shapes {rendered}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class BackwardError(DeFusionError, RuntimeError):
    pass


class NonFiniteGradientError(DeFusionError, FloatingPointError):
    def __init__(self, param_name: str):
        self.param_name = param_name
        super().__init__(f"non-finite gradient for parameter '{param_name}'")


class GradCheckError(DeFusionError, RuntimeError):
    pass


class ConfigError(DeFusionError, ValueError):
    pass


class DatasetError(DeFusionError, ValueError):
    def __init__(self, message: str, case_id: Optional[str] = None, path: Optional[str] = None):
        self.case_id = case_id
        self.path = path
        if case_id is not None:
            message = f"case '{case_id}': {message}"
        super().__init__(message)


class PreprocessingError(DeFusionError, ValueError):
    pass


class MetricError(DeFusionError, ValueError):
    pass


class TrainingDivergedError(DeFusionError, RuntimeError):
    def __init__(self, epoch: int, last_good_epoch: Optional[int]):
        self.epoch = epoch
        self.last_good_epoch = last_good_epoch
        good = "none" if last_good_epoch is None else str(last_good_epoch)
        super().__init__(f"non-finite loss in epoch {epoch} (last good epoch: {good})")


class FoldFailedError(DeFusionError, RuntimeError):
    def __init__(self, fold: int, cause: BaseException):
        self.fold = fold
        super().__init__(f"fold {fold} failed: {cause}")


class CheckpointError(DeFusionError, ValueError):
    pass
