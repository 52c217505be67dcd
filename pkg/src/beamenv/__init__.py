"""Joint MIMO beam map and virtual 3D environment reconstruction from RSS data."""

from .grid import (
    BeamEnvError,
    DataValidationError,
    DegenerateGeometryError,
    EnvironmentMap,
    GridSpec,
    Link,
    NumericalError,
    OutOfBoundsError,
)

__version__ = "0.1.0"
