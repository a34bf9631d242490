"""Graph-regularized non-negative latent factor analysis for temporal bipartite networks."""

__version__ = "0.1.0"
