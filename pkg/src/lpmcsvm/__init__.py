"""Multi-class linear SVMs over block l2,p balls: losses, a Frank-Wolfe
solver, Monte-Carlo complexity estimates and closed-form generalization bounds."""
from .dataio import SparseDataset, load_libsvm, parse_libsvm, stats
from .fw import FwConfig, lmo_l2p, solve
from .losses import LossSpec, lipschitz_profile, loss_subgradient, loss_value
from .norms import INF, block_norm, dual_exponent, schatten_norm

__version__ = "0.1.0"
