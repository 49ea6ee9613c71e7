"""Command-line entry point.

Exit status: 0 on success, 1 on domain errors (bad physics input, failed
synthesis, numerical trouble), 2 on I/O and parse errors.
"""
import argparse
import json
import os
import sys
import time

import numpy as np

from . import io
from .synthesis import DisentanglingFailure


def _rng(seed, key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def _load_policy(path):
    return io.load_checkpoint(path).policy


def cmd_train(a):
    from .ppo import METRIC_COLUMNS, Trainer
    if a.resume:
        tr = io.load_checkpoint(a.resume)
        run = {"checkpoint_every": a.checkpoint_every or 0}
    else:
        run = io.load_run_config(a.config)
        env_cfg, net_cfg, train_cfg = io.build_configs(run, a.seed)
        tr = Trainer(env_cfg, net_cfg, train_cfg)
    os.makedirs(a.out, exist_ok=True)
    metrics = os.path.join(a.out, "metrics.csv")
    ckpt = os.path.join(a.out, "checkpoint.json")
    every = a.checkpoint_every if a.checkpoint_every is not None else int(run.get("checkpoint_every", 0))
    if not a.resume and os.path.exists(metrics):
        os.remove(metrics)
    n_iters = a.iters if a.iters is not None else tr.train_cfg.N_iters - tr.iteration

    def on_iter(trainer, row):
        io.append_csv(metrics, METRIC_COLUMNS, [row])
        if every and trainer.iteration % every == 0:
            io.save_checkpoint(ckpt, trainer, timestamp=not a.no_timestamp)

    tr.train(n_iters, callback=on_iter)
    io.save_checkpoint(ckpt, tr, timestamp=not a.no_timestamp)
    print(f"trained {tr.iteration} iterations; metrics {metrics}; checkpoint {ckpt}")
    return 0


def cmd_eval(a):
    from .bench import RLAgent, run_batch
    tr = io.load_checkpoint(a.ckpt)
    psis = io.load_states(a.states)
    if int(np.log2(psis.shape[1])) != tr.env_cfg.L:
        raise ValueError(f"states have {int(np.log2(psis.shape[1]))} qubits, policy expects {tr.env_cfg.L}")
    agent = RLAgent(tr.policy, a.mode, _rng(a.seed, 12))
    eps = tr.env_cfg.eps if a.eps is None else a.eps
    n, ok, traces, cnots = run_batch(agent, psis, eps, a.max_steps)
    cols = ["index", "n_gates", "success", "terminal_s_avg", "cnot_budget"]
    rows = [{"index": k, "n_gates": int(n[k]), "success": bool(ok[k]),
             "terminal_s_avg": float(traces[k, -1]), "cnot_budget": int(cnots[k])} for k in range(len(n))]
    io.write_csv(a.csv, cols, rows)
    print(f"success {ok.mean():.4f}; mean gates {n[ok].mean() if ok.any() else float('nan'):.3f}")
    return 0


def cmd_disentangle(a):
    from .bench import RLAgent, run_episode
    from .synthesis import Circuit
    from .state import num_qubits
    tr = io.load_checkpoint(a.ckpt)
    psi = io.load_state(a.state)
    eps = tr.env_cfg.eps if a.eps is None else a.eps
    if a.shots is None and a.lam is None:
        agent = RLAgent(tr.policy, a.mode, _rng(a.seed, 12))
        rec = run_episode(agent, psi, eps, a.max_steps)
        io.save_circuit(a.circuit, rec.circuit)
        print(f"gates {rec.n_gates}; terminal S_avg {rec.terminal_s_avg:.3e}; success {rec.success}")
        return 0
    from .tomography import ObservationRLAgent, noisy_pipeline_run
    agent = ObservationRLAgent(tr.policy, a.mode, _rng(a.seed, 12))
    shots = 0 if a.shots is None else a.shots
    lam = 0.0 if a.lam is None else a.lam
    rec = noisy_pipeline_run(psi, agent, shots, lam, _rng(a.seed, 20), a.max_steps, stop_eps=eps)
    circ = Circuit(num_qubits(psi), entropies_per_step=list(rec.exact_s_avg))
    for orient, g in rec.gates:
        circ.append(orient, g)
    io.save_circuit(a.circuit, circ)
    json.dump(rec.to_dict(), sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_universal(a):
    from .synthesis import universal_3q, universal_4q, universal_4q_cnot_form, cnot_budget
    psi = io.load_state(a.state)
    if a.n == 3:
        circ = universal_3q(psi)
    elif a.cnot_form:
        circ = universal_4q_cnot_form(psi)
    else:
        circ = universal_4q(psi)
    io.save_circuit(a.circuit, circ)
    print(f"gates {len(circ)}; terminal S_avg {circ.terminal_s_avg:.3e}; cnot budget {cnot_budget(circ)}")
    return 0


def cmd_bench(a):
    from .bench import BENCH_COLUMNS, bench_ensemble
    agents = [s.strip() for s in a.agents.split(",") if s.strip()]
    policy = _load_policy(a.ckpt) if a.ckpt else None
    stats = bench_ensemble(a.ensemble, a.n, agents, seed=a.seed, eps=a.eps,
                           max_steps=a.max_steps, permute=not a.no_perm, policy=policy)
    io.write_csv(a.csv, BENCH_COLUMNS, [s.row() for s in stats])
    for s in stats:
        print(f"{s.agent}: success {s.success_rate:.3f}, gates {s.mean_gates:.2f} +- {s.std_gates:.2f}")
    return 0


def cmd_beam(a):
    from .beam import beam_plan, plan_to_circuit
    psi = io.load_state(a.state)
    t0 = time.perf_counter()
    res = beam_plan(psi, a.k, a.heuristic, a.eps, a.max_depth)
    dt = time.perf_counter() - t0
    if a.circuit:
        io.save_circuit(a.circuit, plan_to_circuit(psi, res.plan))
    print(f"gates={len(res.plan)} nodes={res.nodes_visited} success={res.success} "
          f"s_avg={res.h:.3e} time={dt:.3f}s")
    return 0 if res.success else 1


def cmd_tomo(a):
    from .tomography import ObservationGreedyAgent, ObservationRLAgent, noisy_pipeline_run
    psi = io.load_state(a.state)
    agent = ObservationRLAgent(_load_policy(a.ckpt), "greedy") if a.ckpt else ObservationGreedyAgent()
    shots = 0 if a.exact else a.shots
    rec = noisy_pipeline_run(psi, agent, shots, a.lam, _rng(a.seed, 20), a.steps)
    out = json.dumps(rec.to_dict())
    if a.out:
        with open(a.out, "w") as f:
            f.write(out + "\n")
    else:
        print(out)
    return 0


def cmd_attn_dump(a):
    from .env import obs_encode
    from .nets import extract_attention
    from .state import pairs
    tr = io.load_checkpoint(a.ckpt)
    psi = io.load_state(a.state)
    attn = extract_attention(tr.policy, obs_encode(psi))
    L = tr.env_cfg.L
    with open(a.out, "w") as f:
        json.dump({"pairs": [list(p) for p in pairs(L)], "attention": attn.tolist()}, f)
        f.write("\n")
    print(f"attention {attn.shape} written to {a.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="qdisentangle",
                                description="Disentangle multiqubit pure states with short two-qubit circuits.")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("train", help="train a PPO agent")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--iters", type=int, help="iterations to run (default: N_iters)")
    s.add_argument("--checkpoint-every", type=int)
    s.add_argument("--resume", help="continue from a checkpoint header")
    s.add_argument("--no-timestamp", action="store_true")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("eval", help="evaluate a policy on a file of states")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--states", required=True)
    s.add_argument("--csv", required=True)
    s.add_argument("--mode", choices=["greedy", "sample"], default="greedy")
    s.add_argument("--eps", type=float)
    s.add_argument("--max-steps", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("disentangle", help="disentangle one state with a trained policy")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--circuit", required=True)
    s.add_argument("--shots", type=int)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--mode", choices=["greedy", "sample"], default="greedy")
    s.add_argument("--eps", type=float)
    s.add_argument("--max-steps", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_disentangle)

    s = sub.add_parser("universal", help="apply the universal 3- or 4-qubit sequence")
    s.add_argument("--n", type=int, choices=[3, 4], required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--circuit", required=True)
    s.add_argument("--cnot-form", action="store_true", help="4 qubits: use the two-CNOT form")
    s.set_defaults(fn=cmd_universal)

    s = sub.add_parser("bench", help="ensemble statistics for several agents")
    s.add_argument("--agents", default="random,greedy")
    s.add_argument("--ensemble", required=True)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--csv", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-perm", action="store_true")
    s.add_argument("--ckpt", help="policy checkpoint for the rl agent")
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--max-steps", type=int, default=1000)
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("beam", help="beam-search plan for one state")
    s.add_argument("--state", required=True)
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--heuristic", choices=["avg", "qbq"], default="avg")
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--max-depth", type=int, default=200)
    s.add_argument("--circuit")
    s.set_defaults(fn=cmd_beam)

    s = sub.add_parser("tomo", help="noisy tomography-driven run")
    s.add_argument("--state", required=True)
    s.add_argument("--shots", type=int, default=10000)
    s.add_argument("--lambda", dest="lam", type=float, default=0.0)
    s.add_argument("--exact", action="store_true", help="exact expectations instead of shots")
    s.add_argument("--steps", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ckpt", help="use a trained policy instead of the greedy agent")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_tomo)

    s = sub.add_parser("attn-dump", help="dump attention matrices for one state")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_attn_dump)
    return p


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    if a.cmd == "train" and not (a.config or a.resume):
        parser.error("train needs --config or --resume")
    try:
        return a.fn(a)
    except (io.FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, DisentanglingFailure, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
