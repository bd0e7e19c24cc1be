"""Variational optical flow with a Laplacian cotangent mesh smoothness term."""

from lcmflow.errors import (
    ConfigurationError,
    DimensionError,
    FormatError,
    LCMFlowError,
    NumericalError,
)
from lcmflow.flowfield import FlowField
from lcmflow.imagecore import Image, build_pyramid, load_image, save_image
from lcmflow.io_formats import read_flo, write_flo
from lcmflow.kernels import BACKEND
from lcmflow.metrics import ErrorReport, angular_error, endpoint_error, evaluate
from lcmflow.solver import SolverParams, compute_flow
from lcmflow.synth import degrade, synth_sequence
from lcmflow.warp import flow_to_color, interpolate_middle_frame, inverse_warp

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "DimensionError",
    "ErrorReport",
    "FlowField",
    "FormatError",
    "Image",
    "LCMFlowError",
    "NumericalError",
    "SolverParams",
    "angular_error",
    "build_pyramid",
    "compute_flow",
    "degrade",
    "endpoint_error",
    "evaluate",
    "flow_to_color",
    "interpolate_middle_frame",
    "inverse_warp",
    "load_image",
    "read_flo",
    "save_image",
    "synth_sequence",
    "write_flo",
]
