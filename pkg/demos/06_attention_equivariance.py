"""Permutation equivariance of the policy network.

The observation is one token per qubit pair and the network has no
positional encoding, so relabeling the qubits only reorders the tokens and
the action probabilities follow the same reordering. The attention maps
show which pairs each pair looks at. Pass a checkpoint (for instance the one
written by 03_train_three_qubits.py) to look at a trained policy; a freshly
initialized network attends almost uniformly.
"""
import sys

import numpy as np

from qdisentangle import io
from qdisentangle.env import obs_encode
from qdisentangle.nets import NetConfig, PolicyNet, extract_attention, policy_probs
from qdisentangle.state import haar_random, pair_permutation, pairs, permute_qubits

rng = np.random.default_rng(3)
if len(sys.argv) > 1:
    trainer = io.load_checkpoint(sys.argv[1])
    pol, L = trainer.policy, trainer.env_cfg.L
else:
    L = 4
    pol = PolicyNet(NetConfig.for_L(L), seed=0)
psi = haar_random(L, rng)
probs = policy_probs(pol, obs_encode(psi))

perm = rng.permutation(L).tolist()
sigma = pair_permutation(perm)
moved = policy_probs(pol, obs_encode(permute_qubits(psi, perm)))

print(f"relabeling {list(range(L))} -> {perm}")
print("pair      p(a)    same pair after relabeling")
for a, pr in enumerate(pairs(L)):
    print(f"{str(pr):<9} {probs[a]:.4f}  {moved[list(sigma).index(a)]:.4f}")
print(f"max difference: {np.max(np.abs(moved - probs[sigma])):.1e}")

attn = extract_attention(pol, obs_encode(psi))
print("\nattention of layer 0, head 0 (rows attend to columns)")
print("        " + " ".join(f"{str(p):>7}" for p in pairs(L)))
for a, row in enumerate(attn[0, 0]):
    print(f"{str(pairs(L)[a]):>7} " + " ".join(f"{x:7.3f}" for x in row))
