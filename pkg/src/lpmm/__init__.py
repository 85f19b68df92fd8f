"""Landmark-parameter morphable model toolkit.

Build a PCA model over 68-point facial landmarks, edit poses through
parameter arithmetic, and train an adaptor MLP that maps parameters into
the latent space of a pluggable surrogate encoder/generator.
"""

from .errors import DomainError, FormatError, LpmmError, TrainingDivergedError
from .landmarks import (
    LandmarkDataset,
    LandmarkRecord,
    LandmarkSet,
    NmeReport,
    dataset_fingerprint,
    interocular_distance,
    nme,
    normalize_dataset,
    normalize_to_canonical,
    parse_landmark_records,
    serialize_landmark_records,
)
from .model import (
    LpmmModel,
    ParamVector,
    build_lpmm,
    deserialize_model,
    explained_variance,
    fit_params,
    load_model,
    nme_sweep,
    reconstruct,
    save_model,
    serialize_model,
)
from .poseedit import (
    Blendshape,
    BlendshapeLibrary,
    apply_blendshapes,
    deserialize_blendshape,
    interpolate_params,
    load_blendshape,
    save_blendshape,
    scale_from_base,
    serialize_blendshape,
)
from .surrogate import (
    RasterConfig,
    SurrogateStack,
    decode_latent,
    encode_landmarks,
    make_surrogate,
    raster_to_pgm,
    render_jacobian,
    render_raster,
)
from .adaptor import (
    AdaptorNet,
    LossBreakdown,
    TrainConfig,
    TrainReport,
    adam_step,
    adaptor_forward,
    base_pose_residual,
    compute_gradients,
    compute_losses,
    deserialize_adaptor,
    init_adaptor,
    load_adaptor,
    map_params_to_latent,
    mix_driving_with_params,
    run_loss_ablation,
    save_adaptor,
    serialize_adaptor,
    train_adaptor,
    zero_adaptor,
)

__version__ = "0.1.0"
