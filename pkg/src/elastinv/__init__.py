"""Time-harmonic elastic scattering on a disk and multi-frequency Landweber inversion."""

from .dtn import BackgroundMedium, apply_dtn, build_dtn
from .fem import MaterialField, build_disk_mesh
from .inversion import InversionProblem, StepSize, StoppingRule, SweepSchedule, run_sweep
from .scenarios import get_phantom, paper_preset, read_dataset, synthesize, write_dataset
from .solver import FrequencyContext, solve_adjoint, solve_forward

__version__ = "0.1.0"

__all__ = [
    "BackgroundMedium",
    "FrequencyContext",
    "InversionProblem",
    "MaterialField",
    "StepSize",
    "StoppingRule",
    "SweepSchedule",
    "apply_dtn",
    "build_disk_mesh",
    "build_dtn",
    "get_phantom",
    "paper_preset",
    "read_dataset",
    "run_sweep",
    "solve_adjoint",
    "solve_forward",
    "synthesize",
    "write_dataset",
]
