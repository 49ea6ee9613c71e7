"""Train a PPO agent on three qubits and inspect what it learned.

The environment hands the agent the symmetrized pair density matrices and
rewards it for lowering the single-qubit entropies. Two gates always
suffice for three qubits, so a trained agent should need about two on
Haar-random states. Training states are products of random blocks, so some
of them need only one gate and the logged episode length sits below two.
"""
import os
import sys
import tempfile

import numpy as np

from qdisentangle import io
from qdisentangle.bench import GreedyAgent, RLAgent, run_batch
from qdisentangle.ppo import Trainer, default_configs
from qdisentangle.state import haar_random

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 200
trainer = Trainer(*default_configs(3, seed=0))


def progress(tr, row):
    if tr.iteration % 25 == 0:
        print(f"iter {row['iteration']:>4}  accuracy {row['accuracy']:.3f}  "
              f"length {row['mean_episode_len']:.2f}  reward {row['mean_reward']:+.3f}  kl {row['kl']:+.4f}")


trainer.train(iters, callback=progress)

rng = np.random.default_rng(1)
psis = np.stack([haar_random(3, rng) for _ in range(500)])
for name, agent in [("trained", RLAgent(trainer.policy)), ("greedy", GreedyAgent())]:
    n, ok, _, _ = run_batch(agent, psis, 1e-3, 10)
    print(f"{name:<8} success {ok.mean():.3f}, mean gates {n[ok].mean():.2f}")

path = os.path.join(tempfile.mkdtemp(), "three_qubits.json")
io.save_checkpoint(path, trainer)
print("checkpoint:", path)
