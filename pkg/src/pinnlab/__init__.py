"""Physics-informed network training with adaptive collocation resampling."""

from .autodiff import (
    EmptyTapeError,
    JetValue,
    LossTape,
    NumericOverflowError,
    eval_jet,
    finite_diff_oracle,
    loss_gradient,
)
from .diagnostics import (
    FailureReport,
    UndefinedMetricError,
    failure_indicator,
    kurtosis,
    miou,
    relative_l2,
    residual_field_grid,
    skewness,
)
from .gate import GateState, causal_pde_loss, gate_update, gate_value
from .geometry import Geometry2D, circle_polygon, read_geometry, sdf_ground_truth, write_geometry
from .lab import frozen_rrr_run, lp_norm, lp_sampling_identity
from .network import (
    FieldNetwork,
    NetworkSpec,
    PeriodicEmbedding,
    init_network,
    load_checkpoint,
    periodic_embed,
    save_checkpoint,
)
from .objectives import OBJECTIVES, ObjectiveFunction, get_objective
from .problems import (
    Box,
    PdeProblem,
    allen_cahn_problem,
    allen_cahn_residual,
    bc_loss,
    convection_exact,
    convection_problem,
    convection_residual,
    eikonal_problem,
    eikonal_residual,
    harmonic_ode_problem,
    harmonic_ode_residual,
    ic_loss,
    read_grid,
    write_grid,
)
from .sampling import (
    DenseSet,
    Population,
    abs_fitness,
    dense_topk,
    distribution_resample,
    expected_refinement_evals,
    gated_fitness,
    make_sampler,
    rar_distribution_step,
    rar_greedy_step,
    rrr_step,
    threshold,
)
from .training import (
    AdamState,
    GateSettings,
    SamplerSettings,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    step_lr,
    total_loss,
    train,
)

__version__ = "0.1.0"
