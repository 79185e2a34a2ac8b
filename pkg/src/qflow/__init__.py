"""State-vector quantum simulation and quantum linear-solver pipelines
for 1D viscous flow problems."""

from .backend import backend_name, get_num_threads, set_num_threads

__version__ = "0.1.0"

__all__ = ["backend_name", "get_num_threads", "set_num_threads", "__version__"]
