"""Multi-output feedforward surrogate for coastal storm-surge prediction.

Submodules: numerics (linear algebra, activations, RNG), network (model and
checkpoints), training (backprop, optimizer, parallel loop), dataset (track
schema, synthetic corpus), evaluation (metrics and error densities), cli.
"""

__version__ = "0.1.0"
