"""Short two-qubit-gate circuits that disentangle multiqubit pure states."""
from .state import (
    apply_gate,
    avg_entanglement,
    bell,
    concurrence,
    entanglement_of_formation,
    entropy,
    generate_initial,
    ghz,
    haar_random,
    pairs,
    permute_qubits,
    rdm_pair,
    w_state,
)
from .synthesis import (
    Circuit,
    apply_action,
    cnot_budget,
    spectral_gate,
    universal_3q,
    universal_4q,
    universal_4q_cnot_form,
)

__version__ = "0.1.0"
