"""Unrolled ADMM networks for graph signal denoising (GraphDAU) and restoration (NestDAU)."""

from .baselines import BaselineSpec, admm_fixed, bandlimited_interp, grid_search, heat_diffusion, pnp_fixed
from .context import CHEB, EVD, GraphContext
from .data import Dataset, Sample, generate_dataset, load_csv_dataset, load_dataset, save_dataset
from .denoiser import EN, TV, DauParams, ParamError, graphdau_forward, param_count, soft_threshold
from .experiment import ConfigError, ExperimentConfig, emit_report, run_experiment, transfer_eval
from .gradients import GradBundle, graphdau_backward, nestdau_backward
from .graph import Graph, GraphError, build_graph, community_graph, knn_graph, partition, sensor_graph
from .restorer import DegradationOp, NestParams, nestdau_forward
from .spectral import ChebFilter, SpectralDecomposition, cheb_fit, eigendecompose, estimate_lambda_max
from .training import NumericError, TrainConfig, evaluate, finite_diff_check, train

__version__ = "0.1.0"

__all__ = [
    "BaselineSpec", "admm_fixed", "bandlimited_interp", "grid_search", "heat_diffusion", "pnp_fixed",
    "CHEB", "EVD", "GraphContext",
    "Dataset", "Sample", "generate_dataset", "load_csv_dataset", "load_dataset", "save_dataset",
    "EN", "TV", "DauParams", "ParamError", "graphdau_forward", "param_count", "soft_threshold",
    "ConfigError", "ExperimentConfig", "emit_report", "run_experiment", "transfer_eval",
    "GradBundle", "graphdau_backward", "nestdau_backward",
    "Graph", "GraphError", "build_graph", "community_graph", "knn_graph", "partition", "sensor_graph",
    "DegradationOp", "NestParams", "nestdau_forward",
    "ChebFilter", "SpectralDecomposition", "cheb_fit", "eigendecompose", "estimate_lambda_max",
    "NumericError", "TrainConfig", "evaluate", "finite_diff_check", "train",
]
