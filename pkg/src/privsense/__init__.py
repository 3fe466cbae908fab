"""Simulation of private distributed quantum sensing over verified GHZ resources."""

__version__ = "0.1.0"

from ._kernels import backend_name
from .adversary import AdversaryModel, ChannelNoise, DishonestBehavior, NetworkTopology, SourceAttack
from .encoding import LinearFunctionSpec, QubitAssignment, encode_network, resource_state_for_function
from .ghz import PauliString, StabilizerSet, ghz_state, stabilizer_generators
from .metrology import phase_family, privacy_epsilon, qfi, qfi_bures_oracle, qfi_mixed, qfi_pure
from .qcore import QuantumState, fidelity, partial_trace, trace_distance
from .sensing import SensingParams, run_sensing_protocol
from .verification import VerificationParams, run_symmetrised_verification, run_verification

__all__ = [
    "AdversaryModel",
    "ChannelNoise",
    "DishonestBehavior",
    "LinearFunctionSpec",
    "NetworkTopology",
    "PauliString",
    "QuantumState",
    "QubitAssignment",
    "SensingParams",
    "SourceAttack",
    "StabilizerSet",
    "VerificationParams",
    "__version__",
    "backend_name",
    "encode_network",
    "fidelity",
    "ghz_state",
    "partial_trace",
    "phase_family",
    "privacy_epsilon",
    "qfi",
    "qfi_bures_oracle",
    "qfi_mixed",
    "qfi_pure",
    "resource_state_for_function",
    "run_sensing_protocol",
    "run_symmetrised_verification",
    "run_verification",
    "stabilizer_generators",
    "trace_distance",
]
