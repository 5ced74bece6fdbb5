"""Centralized urban traffic control: route and street-entry scheduling over a
relaxed discrete-time network model, with a queue-based micro-simulator."""

from cutc.network import Network, OccupancyLedger, Street, travel_time
from cutc.scheduling import (Infeasible, Objective, Schedule, SchedulingInstance, SolveTimeout,
                             check, evaluate)
from cutc.solver import solve

__all__ = ["Network", "OccupancyLedger", "Street", "travel_time", "Infeasible", "Objective",
           "Schedule", "SchedulingInstance", "SolveTimeout", "check", "evaluate", "solve"]
__version__ = "0.1.0"
