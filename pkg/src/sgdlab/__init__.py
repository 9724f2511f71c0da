"""sgdlab: Bayesian evidence for small models and the SGD noise scale.

A numpy/scipy laboratory for three connected questions: how plausible is a
trained model under the Bayesian evidence (Laplace approximation + Occam
factor), how does minibatch noise shape SGD/momentum/Langevin dynamics, and
how should the batch size scale with learning rate, training-set size and
momentum.  See the demos/ directory for narrative walkthroughs and the
``sgdlab`` CLI for the experiment presets.
"""

from . import data, evidence, experiments, models, noise, numkit, optim
from .numkit import RngStream

__version__ = "0.1.0"

__all__ = [
    "numkit",
    "data",
    "models",
    "optim",
    "evidence",
    "noise",
    "experiments",
    "RngStream",
    "__version__",
]
