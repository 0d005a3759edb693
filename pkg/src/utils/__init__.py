from .numerics import central_difference, sample_std, symmetrize, unit
from .seeding import Stream, stream_generator
from .decorators import log_duration
from .report_builder import ReportBuilder

__all__ = [
    "central_difference",
    "sample_std",
    "symmetrize",
    "unit",
    "Stream",
    "stream_generator",
    "log_duration",
    "ReportBuilder",
]
