"""Point-cloud field regression with rotary position-aware attention.

The library is plain numpy end to end; the handful of hot kernels switch
to numba when it is importable (see `ropeflow.backends`). Everything is
deterministic given the top-level seed.
"""

from .autodiff import (
    GradCheckReport,
    finite_difference_gradcheck,
    loss_and_grads,
    model_backward,
    mse_loss,
    mse_loss_grad,
)
from .backends import BACKEND, set_num_threads
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    CHANNELS,
    DatasetManifest,
    SampleRecord,
    ZScoreStats,
    apply_zscore,
    fit_zscore,
    gen_potential_flow_sphere,
    invert_zscore,
    load_sample,
    load_split,
    make_splits,
    potential_velocity,
    pressure_coefficient,
    random_subsample,
    read_manifest,
    save_sample,
    write_manifest,
)
from .encoding import (
    CoordinateNormalizer,
    FrequencyTable,
    apply_normalizer,
    build_frequency_table,
    encode_axis,
    encode_point,
    encode_points,
    fit_normalizer,
    invert_normalizer,
)
from .errors import (
    BoundsError,
    CheckpointMismatchError,
    ConfigError,
    DegenerateChannelError,
    DegenerateGeometryError,
    DomainError,
    EmptyDatasetError,
    EmptyInputError,
    FormatError,
    InvalidBaseError,
    InvalidDimensionError,
    NonFiniteInputError,
    NumericalAbortError,
    ResourceGuardError,
    RopeflowError,
    ShapeError,
    SuspiciousInputWarning,
    UndefinedMetricError,
    UsageError,
    VersionError,
)
from .metrics import (
    ErrorDistribution,
    MetricsReport,
    abs_error_pdf,
    attention_entropy,
    attention_row,
    block_head_entropies,
    entropy_histogram,
    entropy_profile,
    per_sample_error_distribution,
    relative_l2,
    rows_normalized_entropy,
    write_metrics_report,
)
from .model import (
    VARIANTS,
    ModelConfig,
    ParameterStore,
    decoder_forward,
    encoder_forward,
    init_parameters,
    layer_norm,
    model_forward,
    parameter_shapes,
    physics_block_forward,
)
from .rope import (
    AttentionOutput,
    RotaryConfig,
    apply_rotary,
    build_rotary_config,
    compute_phases,
    multi_head_attention,
    rotary_inner_product_oracle,
    scaled_dot_attention,
)
from .seeding import seed_int, sub_seed
from .training import (
    EpochLog,
    FitResult,
    OptimizerState,
    TrainConfig,
    adam_step,
    fit,
    format_log_row,
    init_optimizer_state,
    last_logged_epoch,
    parse_log_row,
    steplr,
)

__version__ = "0.1.0"
