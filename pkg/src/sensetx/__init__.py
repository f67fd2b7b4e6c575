"""Energy-optimal joint sensing and transmission rate control.

Data for a sequence of deadline tasks is sensed and then sent over a wireless
link.  Sensing pauses during a busy interval, and the receiver may hold only a
bounded amount of data.  The solver returns the minimum-energy pair of
piecewise-constant rate schedules.
"""

from .model import (BusyInterval, FeasibilityReport, InfeasibleBuffer, InfeasibleError,
                    InfeasibleHeight, InfeasibleScenario, InfeasibleTunnel, NoBusyInterval,
                    PhysicalParams, RateSchedule, Scenario, ScenarioError, Task, build_epoch_grid,
                    check_feasibility, sensing_energy, transmission_energy)
from .solve import (Solution, baseline, optimize, optimize_buffered, rates_for_height,
                    rates_for_height_buffered, solve)

__all__ = [
    "BusyInterval", "FeasibilityReport", "InfeasibleBuffer", "InfeasibleError", "InfeasibleHeight",
    "InfeasibleScenario", "InfeasibleTunnel", "NoBusyInterval", "PhysicalParams", "RateSchedule",
    "Scenario", "ScenarioError", "Solution", "Task", "baseline", "build_epoch_grid",
    "check_feasibility", "optimize", "optimize_buffered", "rates_for_height",
    "rates_for_height_buffered", "sensing_energy", "solve", "transmission_energy",
]
