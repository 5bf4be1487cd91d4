"""SentryCam: live visualization and geometry auditing of training-time
representation snapshots.

The pipeline ingests one activation snapshot per training epoch, keeps a
log-spaced working memory of past epochs, prunes each slice to the most
aggressive sampling ratio that provably keeps neighborhood structure,
builds a fuzzy spatial + cosine temporal graph, and trains a small
autoencoder by manual backpropagation to produce temporally coherent 2-D
views. Geometric health metrics over those views raise early-warning
alerts for training failures.
"""

__version__ = "0.1.0"
