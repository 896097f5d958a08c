"""Fault-restoration planning for radial distribution grids."""
from .iao import IaoResult, run_iao
from .mcb import McbResult, SolverParams, run_mcb
from .network import FaultScenario, Network, NetworkError, load_network, load_scenario
from .plan import RestorationPlan
from .topology import compute_off_outage, is_radial
from .validation import MarginReport, power_flow, validate_plan

__all__ = [
    "FaultScenario", "IaoResult", "MarginReport", "McbResult", "Network", "NetworkError",
    "RestorationPlan", "SolverParams", "compute_off_outage", "is_radial", "load_network",
    "load_scenario", "power_flow", "run_iao", "run_mcb", "validate_plan",
]
