"""blockrnn: block-diagonal recurrent networks with recurrence analysis.

Recurrent layers whose recurrent weight is block-diagonal (K independent
small cells whose states are concatenated and aggregated position-wise),
exact BPTT for vanilla/LSTM/GRU variants, eigenvalue-based classification of
recurrent dynamics, exact bridges to ARMA/GARCH models, and reproducible
training/benchmark harnesses behind a small CLI.
"""

__version__ = "0.1.0"

from .backend import backend_name, get_num_threads, set_num_threads
from .linalg import BlockDiagonalMatrix, Rng

__all__ = [
    "__version__",
    "BlockDiagonalMatrix",
    "Rng",
    "backend_name",
    "set_num_threads",
    "get_num_threads",
]
