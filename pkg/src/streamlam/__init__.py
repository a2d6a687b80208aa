"""Frame-field aligned multi-laminar structures from point-sampled stream surfaces."""

from .errors import DataError, SolverError, StreamlamError
from .field import FrameGrid, GENERATORS, load_field, save_field
from .hexer import HexMesh, hexmesh, mesh_quality_report
from .pipeline import PipelineConfig, run_pipeline
from .selector import cardinalities, select
from .singularity import SingularMask, detect_singular_voxels, rotation_energy
from .splatter import VoxelVolume, extract_isosurface, splat_surface
from .tracer import StreamSurface, generate_surface_set, supersample_surface, trace_surface

__version__ = "0.1.0"

__all__ = [
    "DataError", "FrameGrid", "GENERATORS", "HexMesh", "PipelineConfig", "SingularMask", "SolverError",
    "StreamSurface", "StreamlamError", "VoxelVolume", "cardinalities", "detect_singular_voxels",
    "extract_isosurface", "generate_surface_set", "hexmesh", "load_field", "mesh_quality_report",
    "rotation_energy", "run_pipeline", "save_field", "select", "splat_surface", "supersample_surface",
    "trace_surface",
]
