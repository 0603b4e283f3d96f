"""Homogenization toolkit for unsteady filtration in periodic porous media."""

import os as _os

# Cap BLAS threads before numpy loads so runs are bit-reproducible by
# default; POROHOM_THREADS lifts the cap.
_threads = _os.environ.get("POROHOM_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, _threads)

from .meshing import (
    EllipseSpec,
    MeshFormatError,
    MeshQualityError,
    TriMesh,
    gen_cell_mesh,
    gen_rect_mesh,
    read_mesh,
    validate_mesh,
    write_mesh,
)
from .fem import SolverError, StokesSystem
from .cell_steady import solve_cell_steady
from .cell_spectral import Spectrum, solve_eigen
from .cell_unsteady import KernelSamples, solve_cell_unsteady
from .kernel_model import KernelModel, KernelModelError, build_kernel_model
from .macro import MacroProblem, MacroState, solve_steady
from .pipeline import PipelineError, parse_config, render_table, run_pipeline

__all__ = [
    "EllipseSpec",
    "KernelModel",
    "KernelModelError",
    "KernelSamples",
    "MacroProblem",
    "MacroState",
    "MeshFormatError",
    "MeshQualityError",
    "PipelineError",
    "SolverError",
    "Spectrum",
    "StokesSystem",
    "TriMesh",
    "build_kernel_model",
    "gen_cell_mesh",
    "gen_rect_mesh",
    "parse_config",
    "read_mesh",
    "render_table",
    "run_pipeline",
    "solve_cell_steady",
    "solve_cell_unsteady",
    "solve_eigen",
    "solve_steady",
    "validate_mesh",
    "write_mesh",
]

__version__ = "0.1.0"
