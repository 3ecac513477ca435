"""Good dictionaries of Koopman eigenpairs from simulated trajectory data.

The package splits into five layers: ``dynsys`` (simulation, lifting,
scaling), ``delay`` (lagged-window embedding), ``autoencoder`` (a small
self-contained MLP autoencoder), ``koopman`` (the eigenvalue scan and
greedy mode extraction), and ``pipeline``/``cli`` (configured runs that
emit CSV tables, figures, and a manifest).
"""
from .autoencoder import LayerSpec, MlpAutoencoder, TrainConfig, train
from .config import ConfigError, ExperimentConfig, parse_config, parse_config_dict
from .delay import DelayConfig, delay_embed
from .dynsys import LambdaSegment, RdParams, TrajectoryGrid, VdpParams
from .koopman import (
    EigenPair,
    LambdaGrid,
    ModeDecomposition,
    ObservableGrid,
    evaluate_observable,
    greedy_decompose,
    scan_lambda,
    solve_initial_data,
)
from .observables import Observable, get_observable
from .pipeline import (
    PipelineResult,
    RunManifest,
    StageError,
    execute,
    run_rd_pipeline,
    run_synthetic,
    run_vdp_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "LayerSpec",
    "MlpAutoencoder",
    "TrainConfig",
    "train",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_dict",
    "DelayConfig",
    "delay_embed",
    "LambdaSegment",
    "RdParams",
    "TrajectoryGrid",
    "VdpParams",
    "EigenPair",
    "LambdaGrid",
    "ModeDecomposition",
    "ObservableGrid",
    "evaluate_observable",
    "greedy_decompose",
    "scan_lambda",
    "solve_initial_data",
    "Observable",
    "get_observable",
    "PipelineResult",
    "RunManifest",
    "StageError",
    "execute",
    "run_rd_pipeline",
    "run_synthetic",
    "run_vdp_pipeline",
]
