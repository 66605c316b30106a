"""Scale-disentangled branched GAN toolkit.

Train generators whose latent sub-vectors each control one feature scale,
measure the association with a spectral variance metric, and edit images by
optimizing latents against color/edge constraints.
"""

from .config import (
    ConfigError,
    NetConfig,
    OptimSpec,
    Profile,
    PROFILES,
    get_profile,
)
from .latent import (
    BranchedLatent,
    LatentError,
    LatentSource,
    SamplePolicy,
    constant_sweep,
    fuse,
    sample_latent,
    sample_latent_batch,
)
from .spectral import (
    BandSpec,
    SpectralError,
    VarianceImage,
    VbsReport,
    VbsTarget,
    band_filter,
    dimension_targets,
    dominant_scale,
    subvector_targets,
    variance_image,
    vbs_raw,
    vbs_report,
)
from .data import (
    DataError,
    DatasetSpec,
    Pyramid,
    SyntheticRecipe,
    area_downsample,
    generate_synthetic,
    load_dataset,
    make_pyramid,
)
from .networks import (
    Discriminator,
    Encoder,
    Generator,
    NetworkError,
    discriminate,
    encode,
    generate,
    generate_batch,
)
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .training import (
    FrozenLeakError,
    MaskedAdam,
    RunResult,
    ScheduleStage,
    SuppressionReport,
    TrainingDiverged,
    TrainingError,
    build_schedule,
    gan_step,
    generator_from_checkpoint,
    make_checkpoint,
    nets_from_checkpoint,
    run_joint,
    run_progressive,
    suppression_experiment,
    train_encoder,
)
from .hog import HogSpec, hog, hog_descriptor
from .editing import (
    EditCase,
    EditConfig,
    EditConstraints,
    EditError,
    EditResult,
    benchmark_manifold,
    edit_loss,
    make_benchmark_cases,
    optimize_edit,
)

__version__ = "0.1.0"
