"""Experiment builders: vehicle platoons and cart-pole fleets."""
from .cacc import CaccParams, CaccVehicleState, build_cacc_fleet, cacc_control_error
from .cartpole import CARTPOLE_A, CARTPOLE_B, CartPoleParams, build_cartpole_fleet, sync_gain
from .disturbance import DisturbanceSpec, apply_disturbance
from .fleet import Fleet

__all__ = [
    "CARTPOLE_A",
    "CARTPOLE_B",
    "CaccParams",
    "CaccVehicleState",
    "CartPoleParams",
    "DisturbanceSpec",
    "Fleet",
    "apply_disturbance",
    "build_cacc_fleet",
    "build_cartpole_fleet",
    "cacc_control_error",
    "sync_gain",
]
