"""Universal short circuits for three and four qubits.

Any three-qubit pure state is disentangled by two locally optimal gates, and
any four-qubit state by five. The four-qubit circuit can also be written with
two CNOTs in the middle, which caps its CNOT count at ten.
"""
import numpy as np

from qdisentangle.state import avg_entanglement, ghz, haar_random, w_state
from qdisentangle.synthesis import cnot_budget, universal_3q, universal_4q, universal_4q_cnot_form


def show(name, psi, circ):
    out = circ.run(psi)
    print(f"{name:<14} gates={len(circ)}  S_avg {avg_entanglement(psi):.4f} -> {avg_entanglement(out):.2e}")


rng = np.random.default_rng(0)

print("three qubits: pairs (0,1) then (1,2)")
for name, psi in [("GHZ", ghz(3)), ("W", w_state(3)), ("Haar", haar_random(3, rng))]:
    show(name, psi, universal_3q(psi))

print("\nfour qubits: pairs (0,1), (2,3), (0,2), (1,3), (2,3)")
psi = haar_random(4, rng)
circ = universal_4q(psi)
show("Haar", psi, circ)
print("  gate entropies per step:", " ".join(f"{s:.3f}" for s in circ.entropies_per_step))

form = universal_4q_cnot_form(psi)
show("CNOT form", psi, form)
print("  gate kinds:", [op.kind for op in form.gates])
print("  CNOT budget:", cnot_budget(form))
