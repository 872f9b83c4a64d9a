"""FE2 simulation of alkali-silica reaction damage in concrete."""
from .config import PROFILES, RunConfig, build_config, load_config, profile_config
from .errors import (AsrFe2Error, ConstitutiveError, MeshError, NonConvergenceError, PairingError,
                     ParameterError, PlacementError, SingularityError, StiffnessError)
from .output import HistoryRecord, read_history, write_history, write_vtk
from .scenarios import (monte_carlo, run_fe2_scenario, run_meso_scenario, run_scenario)

__version__ = "0.1.0"

__all__ = [
    "AsrFe2Error", "ConstitutiveError", "HistoryRecord", "MeshError", "NonConvergenceError",
    "PROFILES", "PairingError", "ParameterError", "PlacementError", "RunConfig",
    "SingularityError", "StiffnessError", "build_config", "load_config", "monte_carlo",
    "profile_config", "read_history", "run_fe2_scenario", "run_meso_scenario", "run_scenario",
    "write_history", "write_vtk",
]
