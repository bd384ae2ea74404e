"""Deterministic simulator for federated learning across isolated agencies."""

from ._backend import BACKEND
from .cost import CostParams, asymptotic_ratio, sweep_curve, time_ratio
from .data import (
    Dataset,
    PartitionPlan,
    apply_exchange,
    generate_synthetic,
    load_idx,
    partition_by_class,
    partition_random,
)
from .federation import (
    FederationConfig,
    RoundRecord,
    run_centralized,
    run_experiment,
    run_flavor1,
    run_flavor2,
    run_flavor3,
    sweep_exchange,
)
from .nn import (
    ModelParams,
    NetworkSpec,
    average_params,
    evaluate,
    forward,
    init_params,
    loss_and_grad,
    sgd_step,
    train_local,
)
from .simnet import TrafficLedger, record_transfer, simulated_time

__version__ = "0.1.0"
