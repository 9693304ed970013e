"""Two-drone racing on a parametric path with NMPC and zero-sum game controllers.

The main entry points:

- ``paths``: parametric paths, projection-point dynamics
- ``quadrotor``: rigid-body quadrotor model
- ``objectives``: path-following and overtaking/obstructing costs
- ``game_solver``: continuation/GMRES solver for NMPC and NRHDG
- ``harness``: closed-loop races and the four-race comparison
- ``cli``: command-line interface
"""

from .config import RunConfig, load_config
from .errors import DroneRaceError
from .harness import RaceConfig, RaceLog, compare_races, extract_progress, run_race
from .paths import SinusoidPath, race_path

__all__ = ["DroneRaceError", "RaceConfig", "RaceLog", "RunConfig", "SinusoidPath",
           "compare_races", "extract_progress", "load_config", "race_path", "run_race"]
