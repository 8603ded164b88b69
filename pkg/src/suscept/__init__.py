"""Toolkit for measuring how susceptible neural networks are to adversarial
perturbation, via hidden-state drift and the susceptibility ratio."""

from .attack import AttackConfig, Perturbation, pgd_attack, random_perturbation
from .chaos import (
    GrowthSeries,
    batchnorm_chain_growth,
    doubling_map_divergence,
    doubling_map_trajectory,
    random_matrix_growth,
    relu_chain_growth,
)
from .engine import Trajectory, evolve, forward, forward_batch, input_gradient
from .kernels import active_backend_name, available_backends, use_backend
from .metrics import (
    DriftRecord,
    SusceptibilityReport,
    approx_robustness_radius,
    boundary_distance,
    dataset_robustness_radius,
    drift_trajectory,
    lyapunov_exponent,
    post_attack_accuracy,
    psi,
    psi_hat,
)
from .model import (
    ModelSpec,
    build_custom,
    build_model,
    init_gaussian,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import (
    ZeroVectorError,
    gaussian_tensor,
    project_to_sphere,
    rms_distance,
    rms_norm,
)
from .training import TrainConfig, TrainingDivergedError, accuracy, train

__version__ = "0.1.0"
