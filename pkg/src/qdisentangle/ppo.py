"""PPO-Clip with generalized advantage estimation.

Rollouts run over a persistent batched environment in fixed-length segments.
Episodes that end inside a segment are re-initialized by the environment;
terminated steps bootstrap with zero, truncated ones with the value of the
final observation.
"""
import time
from dataclasses import dataclass, asdict

import numpy as np
import torch

from .env import DisentangleEnv, EnvConfig
from .nets import NetConfig, PolicyNet, ValueNet, as_tensor

# per-L defaults: (T_seg, N_iters, B_PPO)
TRAIN_DEFAULTS = {
    3: (16, 500, 128),
    4: (16, 4000, 128),
    5: (64, 10000, 128),
    6: (90, 12000, 512),
}

METRIC_COLUMNS = ["iteration", "accuracy", "mean_episode_len", "mean_reward",
                  "policy_loss", "value_loss", "entropy", "kl", "lr"]


@dataclass
class TrainConfig:
    T_seg: int = 16
    N_iters: int = 4000
    lr_pi: float = 2e-4
    eps_pi: float = 0.2
    lr_v: float = 3e-4
    eps_v: float = 10.0
    kl_lim: float = 0.01
    lam_gae: float = 0.95
    g_clip: float = 1.0
    beta_inv: float = 0.1
    K: int = 3
    B_PPO: int = 128
    gamma: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 < self.lam_gae <= 1:
            raise ValueError("lam_gae must be in (0, 1]")
        if self.eps_pi <= 0 or self.kl_lim <= 0:
            raise ValueError("eps_pi and kl_lim must be positive")

    @classmethod
    def for_L(cls, L, **overrides):
        if L not in TRAIN_DEFAULTS:
            raise ValueError(f"no default training settings for L={L}")
        T, n, bp = TRAIN_DEFAULTS[L]
        kw = dict(T_seg=T, N_iters=n, B_PPO=bp)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self):
        return asdict(self)


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (B, T, n, 32)
    actions: np.ndarray  # (B, T)
    rewards: np.ndarray  # (B, T)
    values: np.ndarray  # (B, T + 1), last column is the segment-end bootstrap
    log_probs: np.ndarray  # (B, T)
    terminated: np.ndarray  # (B, T)
    truncated: np.ndarray  # (B, T)
    truncation_values: np.ndarray  # (B, T), V(final obs) where truncated
    episode_lengths: np.ndarray  # lengths of episodes that ended in the segment
    episode_success: np.ndarray


def sample_actions(probs, rng):
    """Draw one action per row of ``probs`` by inverse-CDF sampling."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    a = (cdf <= u[:, None]).sum(axis=-1)
    return np.minimum(a, probs.shape[-1] - 1)


def collect_segment(env, policy, value, T_seg, rng, obs=None):
    """Roll ``T_seg`` steps from the environment's current states."""
    if obs is None:
        obs = env.observe()
    B = env.config.B
    n = obs.shape[1]
    buf = RolloutBuffer(
        obs=np.empty((B, T_seg, n, obs.shape[2])),
        actions=np.empty((B, T_seg), dtype=np.int64),
        rewards=np.empty((B, T_seg)),
        values=np.empty((B, T_seg + 1)),
        log_probs=np.empty((B, T_seg)),
        terminated=np.zeros((B, T_seg), dtype=bool),
        truncated=np.zeros((B, T_seg), dtype=bool),
        truncation_values=np.zeros((B, T_seg)),
        episode_lengths=None,
        episode_success=None,
    )
    lengths, success = [], []
    with torch.no_grad():
        for t in range(T_seg):
            x = as_tensor(obs)
            logp = policy.log_probs(x).numpy()
            a = sample_actions(np.exp(logp), rng)
            buf.obs[:, t] = obs
            buf.actions[:, t] = a
            buf.log_probs[:, t] = logp[np.arange(B), a]
            buf.values[:, t] = value(x).numpy()
            res = env.step(a)
            buf.rewards[:, t] = res.reward
            buf.terminated[:, t] = res.terminated
            buf.truncated[:, t] = res.truncated
            if res.truncated.any():
                idx = np.nonzero(res.truncated)[0]
                buf.truncation_values[idx, t] = value(as_tensor(res.info["final_observation"][idx])).numpy()
            done = np.nonzero(res.terminated | res.truncated)[0]
            lengths.extend(res.info["episode_step"][done].tolist())
            success.extend(res.terminated[done].tolist())
            obs = res.observation
        buf.values[:, T_seg] = value(as_tensor(obs)).numpy()
    buf.episode_lengths = np.asarray(lengths, dtype=np.int64)
    buf.episode_success = np.asarray(success, dtype=bool)
    return buf, obs


def gae(rewards, values, terminated, truncated, gamma, lam, truncation_values=None):
    """Truncated generalized advantage estimates and value targets.

    ``values`` carries one more column than ``rewards``: ``values[:, t]`` is
    ``V(s_t)`` and the last column bootstraps the segment end. Returns
    ``(advantages, targets)`` with ``targets = advantages + V(s_t)``.
    """
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    terminated = np.atleast_2d(np.asarray(terminated, dtype=bool))
    truncated = np.atleast_2d(np.asarray(truncated, dtype=bool))
    B, T = rewards.shape
    if values.shape != (B, T + 1) or terminated.shape != (B, T) or truncated.shape != (B, T):
        raise ValueError("buffer shapes are inconsistent")
    if truncation_values is None:
        truncation_values = np.zeros((B, T))
    truncation_values = np.atleast_2d(truncation_values)
    next_v = np.where(truncated, truncation_values, values[:, 1:])
    next_v = np.where(terminated, 0.0, next_v)
    delta = rewards + gamma * next_v - values[:, :-1]
    cont = ~(terminated | truncated)
    adv = np.zeros((B, T))
    running = np.zeros(B)
    for t in range(T - 1, -1, -1):
        running = delta[:, t] + gamma * lam * cont[:, t] * running
        adv[:, t] = running
    return adv, adv + values[:, :-1]


def standardize(x, guard=1e-8):
    """Zero mean, unit population std; the std is floored at ``guard``."""
    return (x - x.mean()) / torch.clamp(x.std(unbiased=False), min=guard)


def clipped_surrogate(ratio, adv, eps):
    return torch.minimum(ratio * adv, torch.clamp(ratio, 1 - eps, 1 + eps) * adv)


def policy_loss(policy, obs, actions, logp_old, adv, cfg):
    """Negated clipped objective with entropy bonus; returns ``(loss, entropy estimate)``."""
    logp = policy.log_probs(obs).gather(1, actions[:, None]).squeeze(1)
    ratio = torch.exp(logp - logp_old)
    ent = (-logp).mean()
    loss = -(clipped_surrogate(ratio, standardize(adv), cfg.eps_pi).mean() + cfg.beta_inv * ent)
    return loss, ent


def value_loss(value, obs, v_old, targets, eps_v):
    v = value(obs)
    v_clip = v_old + torch.clamp(v - v_old, -eps_v, eps_v)
    return torch.maximum((v - targets) ** 2, (v_clip - targets) ** 2).mean()


def mean_kl(policy, obs, actions, logp_old):
    with torch.no_grad():
        logp = policy.log_probs(obs).gather(1, actions[:, None]).squeeze(1)
    return float((logp_old - logp).mean())


def ppo_update(policy, value, opt_pi, opt_v, buf, adv, targets, cfg, rng):
    """K epochs of minibatch PPO with per-epoch KL early stopping."""
    n_tok = buf.obs.shape[2]
    obs = as_tensor(buf.obs.reshape(-1, n_tok, buf.obs.shape[3]))
    actions = torch.as_tensor(buf.actions.reshape(-1))
    logp_old = as_tensor(buf.log_probs.reshape(-1))
    v_old = as_tensor(buf.values[:, :-1].reshape(-1))
    adv = as_tensor(adv.reshape(-1))
    targets = as_tensor(targets.reshape(-1))
    N = obs.shape[0]
    pl, vl, ents = [], [], []
    kl = 0.0
    epochs = 0
    early = False
    for _ in range(cfg.K):
        perm = torch.as_tensor(rng.permutation(N))
        for start in range(0, N, cfg.B_PPO):
            mb = perm[start:start + cfg.B_PPO]
            loss_pi, ent = policy_loss(policy, obs[mb], actions[mb], logp_old[mb], adv[mb], cfg)
            loss_v = value_loss(value, obs[mb], v_old[mb], targets[mb], cfg.eps_v)
            if not (torch.isfinite(loss_pi) and torch.isfinite(loss_v)):
                raise FloatingPointError(
                    f"non-finite loss: policy {loss_pi.item()}, value {loss_v.item()}")
            opt_pi.zero_grad()
            loss_pi.backward()
            torch.nn.utils.clip_grad_norm_(policy.parameters(), cfg.g_clip)
            opt_pi.step()
            opt_v.zero_grad()
            loss_v.backward()
            torch.nn.utils.clip_grad_norm_(value.parameters(), cfg.g_clip)
            opt_v.step()
            pl.append(loss_pi.item())
            vl.append(loss_v.item())
            ents.append(ent.item())
        epochs += 1
        kl = mean_kl(policy, obs, actions, logp_old)
        if kl > cfg.kl_lim:
            early = True
            break
    return {"policy_loss": float(np.mean(pl)), "value_loss": float(np.mean(vl)),
            "entropy": float(np.mean(ents)), "kl": kl, "epochs": epochs, "early_stop": early}


def derive_seed(seed, key):
    return int(np.random.SeedSequence(seed, spawn_key=(key,)).generate_state(1)[0])


class Trainer:
    """Owns the environment, networks, optimizers and RNG streams of one run.

    Stream layout for a run seed: env slots use spawn keys ``(0, slot)``;
    action sampling ``(1,)``; minibatch shuffling ``(2,)``; policy and value
    initialization seeds come from ``(3,)`` and ``(4,)``.
    """

    def __init__(self, env_cfg, net_cfg, train_cfg, initial=None):
        torch.set_num_threads(1)
        self.env_cfg, self.net_cfg, self.train_cfg = env_cfg, net_cfg, train_cfg
        seed = env_cfg.seed
        self.env = DisentangleEnv(env_cfg, stream=0, initial=initial)
        self.policy = PolicyNet(net_cfg, seed=derive_seed(seed, 3))
        self.value = ValueNet(self.env.n_actions, net_cfg, seed=derive_seed(seed, 4))
        self.opt_pi = torch.optim.Adam(self.policy.parameters(), lr=train_cfg.lr_pi)
        self.opt_v = torch.optim.Adam(self.value.parameters(), lr=train_cfg.lr_v)
        self.action_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        self.shuffle_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
        self.obs = self.env.reset()
        self.iteration = 0

    def step(self):
        """One collect + update iteration; returns the metrics row."""
        cfg = self.train_cfg
        buf, self.obs = collect_segment(self.env, self.policy, self.value, cfg.T_seg,
                                        self.action_rng, self.obs)
        adv, targets = gae(buf.rewards, buf.values, buf.terminated, buf.truncated,
                           cfg.gamma, cfg.lam_gae, buf.truncation_values)
        stats = ppo_update(self.policy, self.value, self.opt_pi, self.opt_v, buf, adv, targets,
                           cfg, self.shuffle_rng)
        self.iteration += 1
        n_ep = len(buf.episode_lengths)
        return {
            "iteration": self.iteration,
            "accuracy": float(buf.episode_success.mean()) if n_ep else float("nan"),
            "mean_episode_len": float(buf.episode_lengths.mean()) if n_ep else float("nan"),
            "mean_reward": float(buf.rewards.mean()),
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
            "kl": stats["kl"],
            "lr": cfg.lr_pi,
        }

    def train(self, n_iters=None, callback=None, time_limit=None):
        n_iters = self.train_cfg.N_iters if n_iters is None else n_iters
        rows = []
        t0 = time.monotonic()
        for _ in range(n_iters):
            row = self.step()
            rows.append(row)
            if callback is not None:
                callback(self, row)
            if time_limit is not None and time.monotonic() - t0 > time_limit:
                break
        return rows

    # checkpoint support -------------------------------------------------

    def get_state(self):
        """``(meta, arrays)``: JSON-able metadata and a flat dict of named arrays."""
        arrays = {}
        for prefix, model in (("policy", self.policy), ("value", self.value)):
            for name, p in model.state_dict().items():
                arrays[f"{prefix}.{name}"] = p.detach().numpy().copy()
        groups = {}
        for prefix, opt in (("opt_pi", self.opt_pi), ("opt_v", self.opt_v)):
            sd = opt.state_dict()
            groups[prefix] = sd["param_groups"]
            for idx, st in sd["state"].items():
                for key, val in st.items():
                    arrays[f"{prefix}.{idx}.{key}"] = val.detach().numpy().copy()
        env = self.env.get_state()
        arrays["env.states"] = env["states"]
        arrays["env.steps"] = env["steps"]
        arrays["env.entropies"] = env["entropies"]
        arrays["env.obs"] = self.obs
        meta = {
            "iteration": self.iteration,
            "param_groups": groups,
            "rng": {
                "action": self.action_rng.bit_generator.state,
                "shuffle": self.shuffle_rng.bit_generator.state,
                "env_slots": env["rngs"],
            },
        }
        return meta, arrays

    def set_state(self, meta, arrays):
        for prefix, model in (("policy", self.policy), ("value", self.value)):
            sd = {name: torch.as_tensor(arrays[f"{prefix}.{name}"]).clone()
                  for name in model.state_dict()}
            model.load_state_dict(sd)
        for prefix, opt in (("opt_pi", self.opt_pi), ("opt_v", self.opt_v)):
            state = {}
            for key, val in arrays.items():
                parts = key.split(".")
                if parts[0] != prefix:
                    continue
                idx, name = int(parts[1]), parts[2]
                t = torch.as_tensor(val).clone()
                state.setdefault(idx, {})[name] = t
            opt.load_state_dict({"state": state, "param_groups": meta["param_groups"][prefix]})
        self.env.set_state({"states": arrays["env.states"], "steps": arrays["env.steps"],
                            "entropies": arrays["env.entropies"],
                            "rngs": meta["rng"]["env_slots"]})
        self.obs = np.asarray(arrays["env.obs"]).copy()
        self.action_rng.bit_generator.state = meta["rng"]["action"]
        self.shuffle_rng.bit_generator.state = meta["rng"]["shuffle"]
        self.iteration = int(meta["iteration"])


def default_configs(L, seed=0, **overrides):
    """Per-L ``(EnvConfig, NetConfig, TrainConfig)``; overrides are routed by field name."""
    env_f = set(EnvConfig.__dataclass_fields__)
    net_f = set(NetConfig.__dataclass_fields__)
    tr_f = set(TrainConfig.__dataclass_fields__)
    unknown = set(overrides) - env_f - net_f - tr_f
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    pick = lambda fields: {k: v for k, v in overrides.items() if k in fields}
    return (EnvConfig.for_L(L, seed=seed, **pick(env_f - {"L", "seed"})),
            NetConfig.for_L(L, **pick(net_f)),
            TrainConfig.for_L(L, **pick(tr_f)))
