"""Zero-shot image restoration with one denoiser in a dual role.

A single diffusion-style noise predictor drives both a stochastic
sampling branch and a deterministic denoiser-residual regularizer inside
an HQS-split gradient iteration, with the balance set by a single
weighting parameter.
"""

from .denoisers import (
    DCTShrinkBackend,
    DenoiserBackend,
    ExternalBackend,
    PriorSpectrum,
    WienerBackend,
    wiener_matrix_action,
)
from .errors import (
    BackendError,
    DivergenceError,
    ImageFormatError,
    ParameterError,
    ProtocolError,
    RdmdError,
    ShapeError,
    UnsupportedDepthError,
)
from .operators import (
    CircularBlur,
    ForwardOperator,
    Identity,
    Kernel,
    Mask,
    SRBicubic,
    degrade,
    make_gaussian_kernel,
    make_motion_kernel,
    read_kernel,
    write_kernel,
)
from .schedule import (
    DetSchedule,
    NoiseSchedule,
    ScheduleSpec,
    build_det_schedule,
    build_schedule,
    lookup_tprime,
    solver_index_map,
)
from .solver import (
    RestorationResult,
    SolverConfig,
    SweepRow,
    TraceRecord,
    restore,
    restore_diffpir_like,
    restore_red,
    sweep_tau,
)
from .metrics import MetricReport, psnr, report, ssim
from .imgio import read_image, write_image

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "CircularBlur",
    "DCTShrinkBackend",
    "DenoiserBackend",
    "DetSchedule",
    "DivergenceError",
    "ExternalBackend",
    "ForwardOperator",
    "Identity",
    "ImageFormatError",
    "Kernel",
    "Mask",
    "MetricReport",
    "NoiseSchedule",
    "ParameterError",
    "PriorSpectrum",
    "ProtocolError",
    "RdmdError",
    "RestorationResult",
    "SRBicubic",
    "ScheduleSpec",
    "ShapeError",
    "SolverConfig",
    "SweepRow",
    "TraceRecord",
    "UnsupportedDepthError",
    "WienerBackend",
    "build_det_schedule",
    "build_schedule",
    "degrade",
    "lookup_tprime",
    "make_gaussian_kernel",
    "make_motion_kernel",
    "psnr",
    "read_image",
    "read_kernel",
    "report",
    "restore",
    "restore_diffpir_like",
    "restore_red",
    "solver_index_map",
    "ssim",
    "sweep_tau",
    "wiener_matrix_action",
    "write_image",
    "write_kernel",
]
