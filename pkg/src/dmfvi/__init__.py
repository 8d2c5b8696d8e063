"""Distributed mean-field variational inference for Bayesian PCA.

Nodes of a simulated network each hold a slice of the data columns and a copy
of the global posteriors; Bregman ADMM with a KL penalty drives the copies to
consensus.  Submodules:

* :mod:`dmfvi.expfam`      Gaussian natural/moment parameters, KL and Bregman divergences
* :mod:`dmfvi.network`     topologies and data partitions
* :mod:`dmfvi.bpca`        centralized Bayesian PCA by coordinate ascent
* :mod:`dmfvi.badmm`       the distributed solver
* :mod:`dmfvi.missing`     observation masks and reconstruction error
* :mod:`dmfvi.benchmarks`  cube structure-from-motion and matrix-completion data
* :mod:`dmfvi.config`, :mod:`dmfvi.experiments`, :mod:`dmfvi.cli`  experiment runner
"""
from .badmm import DistributedFit, SolverConfig, fit_distributed
from .bpca import BpcaModelConfig, BpcaPosterior, DivergenceError, compute_elbo, fit_centralized
from .expfam import GaussianParams, NaturalParams, bregman_divergence, gaussian_kl
from .network import ConfigurationError, DataPartition, NetworkGraph, build_topology, partition_equal
from .trace import ConvergenceTrace

__all__ = [
    "BpcaModelConfig", "BpcaPosterior", "ConfigurationError", "ConvergenceTrace", "DataPartition",
    "DistributedFit", "DivergenceError", "GaussianParams", "NaturalParams", "NetworkGraph",
    "SolverConfig", "bregman_divergence", "build_topology", "compute_elbo", "fit_centralized",
    "fit_distributed", "gaussian_kl", "partition_equal",
]
