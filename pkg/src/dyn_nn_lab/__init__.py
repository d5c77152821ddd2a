"""dyn-nn-lab: a numerical laboratory treating neural networks as
dynamical systems -- forward architectures (MLP / ResNet / neural ODE /
DDE), gradient-descent stability analysis (sharpness, edge of stability,
Lyapunov exponents, Milnor probes), and interacting-particle / mean-field
machinery (Kuramoto systems on graphons and digraph measures, a Vlasov
solver, Wasserstein diagnostics), driven by a config-based experiment CLI.
"""

__version__ = "0.1.0"

from .backend import ACTIVE as BACKEND  # noqa: F401
