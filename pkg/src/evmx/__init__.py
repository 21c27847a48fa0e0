"""evmx: event-camera micro-expression toolkit.

Event-stream codecs and slicing, two-channel event-frame representation,
a spiking network for action-unit recognition, a conditional VAE for
intensity-frame reconstruction, and the evaluation metrics for both.
"""

from .errors import EvmxError
from .events import (
    DAVIS346,
    EVK4,
    Event,
    EventStream,
    SensorGeometry,
    TimeWindow,
    load_evm,
    parse_csv,
    parse_evm,
    save_evm,
    write_evm,
)
from .representation import (
    CropSpec,
    EventFrame,
    FrameSequence,
    InputClip,
    accumulate,
    bilinear_resize,
    build_sequence,
    clip_to_input,
    crop_resize,
    encode_counts,
    load_evf,
    read_evf,
    save_evf,
    write_evf,
)
from .metrics import (
    ItemMetrics,
    MetricReport,
    evaluate_pair,
    evaluate_pairs,
    mae,
    mse,
    ncc,
    psnr,
    rmse,
    ssim,
)
from .dataset import (
    AULabel,
    ClipRecord,
    LOOCVPlan,
    SyntheticSpec,
    TAXONOMY,
    generate_synthetic,
    load_inputs,
    load_manifest,
    load_pairs,
    save_manifest,
    split_loocv,
    write_synthetic_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "AULabel",
    "ClipRecord",
    "CropSpec",
    "DAVIS346",
    "EVK4",
    "Event",
    "EventFrame",
    "EventStream",
    "EvmxError",
    "FrameSequence",
    "InputClip",
    "ItemMetrics",
    "LOOCVPlan",
    "MetricReport",
    "SensorGeometry",
    "SyntheticSpec",
    "TAXONOMY",
    "TimeWindow",
    "accumulate",
    "bilinear_resize",
    "build_sequence",
    "clip_to_input",
    "crop_resize",
    "encode_counts",
    "evaluate_pair",
    "evaluate_pairs",
    "generate_synthetic",
    "load_evf",
    "load_evm",
    "load_inputs",
    "load_manifest",
    "load_pairs",
    "mae",
    "mse",
    "ncc",
    "parse_csv",
    "parse_evm",
    "psnr",
    "read_evf",
    "rmse",
    "save_evf",
    "save_evm",
    "save_manifest",
    "split_loocv",
    "ssim",
    "write_evf",
    "write_evm",
    "write_synthetic_dataset",
    "__version__",
]
