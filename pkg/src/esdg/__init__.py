"""Matrix-free entropy-stable DG solver for the Euler equations with gravity."""

from .mesh import Boundary, MeshConfig, build_mesh
from .physics import Constants, Coriolis, NonPhysicalState
from .reference_element import build_reference_element

__version__ = "0.1.0"

__all__ = ["Boundary", "Constants", "Coriolis", "MeshConfig", "NonPhysicalState",
           "build_mesh", "build_reference_element"]
