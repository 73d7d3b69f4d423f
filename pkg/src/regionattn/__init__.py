"""Region-text attention mask engine.

Builds the four-block joint attention mask from scene annotations, applies
it inside a two-stage masked multi-head attention block over a gated
denoising loop, and ships oracle suites that verify every construction.
"""

from .assembly import (
    RegionalMask,
    TextLayout,
    assemble,
    assemble_scene,
    build_i2i,
    build_i2t,
    build_t2i,
    build_t2t,
    layout_for,
)
from .attention import (
    AttentionBatch,
    BlockWeights,
    RegionalBlockInput,
    global_stage_forward,
    masked_attention_backward,
    masked_attention_forward,
    regional_block_forward,
)
from .clients import (
    CaptionerClient,
    ClientError,
    DetectorClient,
    HttpConfig,
    HttpSceneClient,
    MockSceneClient,
    NoRecordingError,
    TransportError,
    build_scene_from_clients,
)
from .degrade import DegradeConfig, ImageBuffer, degrade, psnr, upsample_nearest
from .loop import LoopConfig, StepRecord, StepTrace, build_all, run_loop
from .prep import PrepConfig, PreparedRegions, prepare
from .raster import (
    DropRecord,
    GridSpec,
    RegionGridMasks,
    background_mask,
    rasterize_box,
    rasterize_scene,
)
from .rng import SeededRng, derive
from .scene import (
    BoundingBox,
    ImageRef,
    RegionAnnotation,
    Scene,
    SceneValidationError,
    load_scene,
    save_scene,
)
from .verify import run_suites

__version__ = "0.1.0"
