"""Random and greedy agents on Haar-random states.

Both agents apply locally optimal gates. The random agent picks the pair
uniformly; the greedy agent picks the pair whose gate lowers S_avg the most.
The mean entropy decays roughly exponentially in the number of gates, and the
decay time grows quickly with the number of qubits.
"""
from qdisentangle.bench import bench_ensemble, fit_decay

N = 300

print(f"{'L':>2} {'agent':<7} {'success':>7} {'gates':>14} {'CNOTs':>7} {'c':>6}")
for L in (4, 5):
    stats = bench_ensemble(f"R:{L}", N, ["random", "greedy"], seed=0)
    for s in stats:
        fit = fit_decay(s.mean_trace, 1e-3)
        print(f"{L:>2} {s.agent:<7} {s.success_rate:>7.2f} {s.mean_gates:>7.2f} +- {s.std_gates:<5.2f}"
              f"{s.mean_cnots:>7.1f} {fit.c:>6.2f}")
    print(f"   greedy / random = {stats[1].mean_gates / stats[0].mean_gates:.2f}")

# a structured ensemble: two Haar pairs whose qubits are shuffled
s = bench_ensemble("R:2;R:2", N, ["random", "greedy"], seed=1)
print("\nR:2;R:2 ensemble:", ", ".join(f"{x.agent} {x.mean_gates:.2f} gates" for x in s))
