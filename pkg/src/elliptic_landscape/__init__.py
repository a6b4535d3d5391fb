"""Brownian-bridge training objectives for small dense networks, plus a
Monte Carlo verifier for the induced loss landscape."""

from .datasets import Dataset, denormalize_features, load_csv, one_hot, split, synthetic_sine, two_moons
from .landscape import (
    HittingTimeEstimate,
    LandscapeEstimate,
    MaxPrincipleReport,
    affine_shift_bound,
    dynkin_residual,
    estimate_hitting_time,
    estimate_landscape,
    estimate_landscape_values,
    max_principle_report,
    two_layer_laplacian_bound,
)
from .network import (
    DomainError,
    Gradients,
    MlpModel,
    OptimState,
    ShapeError,
    adam_state,
    backward_params,
    forward,
    init_mlp,
    load_checkpoint,
    loss_with_input_grad,
    optimizer_step,
    per_sample_losses,
    save_checkpoint,
    sgd_state,
)
from .objectives import (
    EllipticConfig,
    EndpointSampler,
    MixupConfig,
    bridge_objective,
    erm_objective,
    importance_weighted_objective,
    mixup_lambda,
    mixup_objective,
    pairwise_distances,
    sample_endpoint,
    simplex_project,
)
from .rng import RngStream
from .sde import (
    Box,
    BridgeSpec,
    HitOutcome,
    HitResult,
    Path,
    data_box,
    euler_maruyama,
    girsanov_log_weight,
    hitting_time_walk,
    sample_brownian_bridge,
    sample_brownian_path,
)

__version__ = "0.1.0"
