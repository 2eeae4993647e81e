"""Key rates of discrete-modulation CV-QKD under random LO-intensity fluctuations."""

from ._version import __version__
from .attack import (CalibrationModel, FluctuationModel, attack_scenario_rates, bias_factors,
                     estimated_channel, estimated_observables, min_vk, practical_channel,
                     practical_observables)
from .constellation import Constellation, from_points, pcs_qam, protocol_quantities, qpsk
from .errors import (BracketError, ConfigError, CVQKDError, InfeasibleScenarioError, InvalidInputError,
                     NonMonotoneError, UnphysicalError)
from .keyrate import ChannelParams, Observables, channel_observables, distance_to_T, holevo, key_rate, z_star
from .sdp import build_sdp_constraints, read_operator_bundle, write_operator_bundle

__all__ = [
    "__version__",
    "BracketError", "CVQKDError", "CalibrationModel", "ChannelParams", "ConfigError", "Constellation",
    "FluctuationModel", "InfeasibleScenarioError", "InvalidInputError", "NonMonotoneError", "Observables",
    "UnphysicalError", "attack_scenario_rates", "bias_factors", "build_sdp_constraints",
    "channel_observables", "distance_to_T", "estimated_channel", "estimated_observables", "from_points",
    "holevo", "key_rate", "min_vk", "pcs_qam", "practical_channel", "practical_observables",
    "protocol_quantities", "qpsk", "read_operator_bundle", "write_operator_bundle", "z_star",
]
