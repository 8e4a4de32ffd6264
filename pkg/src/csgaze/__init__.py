"""Context-aware social gaze prediction at desk scale."""

from .types import GazeClass, PairClass

__version__ = "0.1.0"

__all__ = ["GazeClass", "PairClass", "__version__"]
