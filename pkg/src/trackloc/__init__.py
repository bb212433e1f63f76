"""Train-borne localization and compact track mapping.

GNSS/IMU fusion with a three-model IMM filter, track-geometry
identification from the model probabilities, clothoid track maps refined
by nonlinear least squares, and map-constrained positioning.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DataError, DegenerateFitError, DomainError, NumericalError, ParseError,
                     TracklocError)
from .geodesy import GeoPoint
from .geom import Chain, Pose2, Shape, TrackElement
from .trackmap import TrackMap, map_load, map_save

__all__ = [
    "Chain", "ConfigError", "DataError", "DegenerateFitError", "DomainError", "GeoPoint", "NumericalError",
    "ParseError", "Pose2", "Shape", "TrackElement", "TrackMap", "TracklocError", "map_load", "map_save",
    "__version__",
]
