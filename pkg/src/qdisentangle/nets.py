"""Permutation-equivariant transformer policy and MLP value network.

The policy embeds every pair token, runs post-norm self-attention encoder
blocks without positional encodings and reads one logit per token, so
relabeling qubits permutes the action distribution the same way it permutes
the tokens. Everything runs in float64 on the CPU.
"""
import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from .env import TOKEN_DIM

DTYPE = torch.float64
LN_EPS = 1e-5

# per-L defaults: (N_layers, N_heads, D_qkv, D_mlp, h_hid)
NET_DEFAULTS = {
    3: (2, 2, 32, 64, 64),
    4: (2, 2, 128, 256, 128),
    5: (4, 4, 128, 512, 256),
    6: (4, 4, 256, 1024, 256),
}


@dataclass
class NetConfig:
    n_layers: int = 2
    n_heads: int = 2
    d_qkv: int = 128
    d_mlp: int = 256
    h_hid: int = 128
    token_dim: int = TOKEN_DIM

    def __post_init__(self):
        if self.d_qkv % self.n_heads:
            raise ValueError(f"d_qkv={self.d_qkv} not divisible by n_heads={self.n_heads}")

    @classmethod
    def for_L(cls, L, **overrides):
        if L not in NET_DEFAULTS:
            raise ValueError(f"no default network settings for L={L}")
        nl, nh, d, dm, hh = NET_DEFAULTS[L]
        kw = dict(n_layers=nl, n_heads=nh, d_qkv=d, d_mlp=dm, h_hid=hh)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self):
        return asdict(self)


def init_uniform(module, generator):
    """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) for every linear map; unit/zero layer norms."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Linear):
                bound = math.sqrt(1.0 / m.in_features)
                m.weight.copy_(torch.rand(m.weight.shape, generator=generator, dtype=DTYPE) * 2 * bound - bound)
                if m.bias is not None:
                    m.bias.copy_(torch.rand(m.bias.shape, generator=generator, dtype=DTYPE) * 2 * bound - bound)
            elif isinstance(m, nn.LayerNorm):
                m.weight.fill_(1.0)
                m.bias.fill_(0.0)


class EncoderBlock(nn.Module):
    def __init__(self, d, n_heads, d_mlp):
        super().__init__()
        self.n_heads = n_heads
        self.d_k = d // n_heads
        self.wq = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.wk = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.wv = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.wo = nn.Linear(d, d, dtype=DTYPE)
        self.ln1 = nn.LayerNorm(d, eps=LN_EPS, dtype=DTYPE)
        self.mlp1 = nn.Linear(d, d_mlp, dtype=DTYPE)
        self.mlp2 = nn.Linear(d_mlp, d, dtype=DTYPE)
        self.act = nn.ReLU()
        self.ln2 = nn.LayerNorm(d, eps=LN_EPS, dtype=DTYPE)

    def attention(self, x):
        """Multi-head self-attention; returns output ``(B, n, d)`` and weights ``(B, H, n, n)``."""
        B, n, d = x.shape
        split = lambda t: t.view(B, n, self.n_heads, self.d_k).transpose(1, 2)
        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        a = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.d_k), dim=-1)
        z = (a @ v).transpose(1, 2).reshape(B, n, d)
        return self.wo(z), a

    def forward(self, x):
        z, a = self.attention(x)
        x = self.ln1(x + z)
        x = self.ln2(x + self.mlp2(self.act(self.mlp1(x))))
        return x, a


class PolicyNet(nn.Module):
    def __init__(self, cfg, seed=0):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Linear(cfg.token_dim, cfg.d_qkv, dtype=DTYPE)
        self.blocks = nn.ModuleList(
            [EncoderBlock(cfg.d_qkv, cfg.n_heads, cfg.d_mlp) for _ in range(cfg.n_layers)])
        self.head = nn.Linear(cfg.d_qkv, 1, dtype=DTYPE)
        init_uniform(self, torch.Generator().manual_seed(int(seed)))

    def forward(self, tokens, return_attention=False):
        """Logits ``(B, n)`` for tokens ``(B, n, token_dim)``."""
        if tokens.shape[-1] != self.cfg.token_dim:
            raise ValueError(f"token dimension {tokens.shape[-1]} != {self.cfg.token_dim}")
        x = self.embed(tokens)
        attn = []
        for blk in self.blocks:
            x, a = blk(x)
            attn.append(a)
        logits = self.head(x).squeeze(-1)
        if return_attention:
            return logits, attn
        return logits

    def log_probs(self, tokens):
        # log_softmax subtracts the max internally
        return torch.log_softmax(self(tokens), dim=-1)


class ValueNet(nn.Module):
    """Three-layer ReLU MLP on the flattened observation."""

    def __init__(self, n_tokens, cfg, seed=0):
        super().__init__()
        self.n_in = n_tokens * cfg.token_dim
        self.net = nn.Sequential(
            nn.Linear(self.n_in, cfg.h_hid, dtype=DTYPE), nn.ReLU(),
            nn.Linear(cfg.h_hid, cfg.h_hid, dtype=DTYPE), nn.ReLU(),
            nn.Linear(cfg.h_hid, 1, dtype=DTYPE),
        )
        init_uniform(self, torch.Generator().manual_seed(int(seed)))

    def forward(self, tokens):
        return self.net(tokens.reshape(tokens.shape[0], -1)).squeeze(-1)


def as_tensor(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def policy_probs(policy, obs):
    """Action probabilities as a numpy array; ``obs`` is ``(n, 32)`` or ``(B, n, 32)``."""
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 2
    with torch.no_grad():
        p = torch.softmax(policy(as_tensor(obs[None] if single else obs)), dim=-1).numpy()
    return p[0] if single else p


def value_of(value, obs):
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 2
    with torch.no_grad():
        v = value(as_tensor(obs[None] if single else obs)).numpy()
    return float(v[0]) if single else v


def extract_attention(policy, obs):
    """Attention weights as an array ``(N_layers, N_heads, n, n)`` for one observation."""
    with torch.no_grad():
        _, attn = policy(as_tensor(np.asarray(obs, dtype=np.float64)[None]), return_attention=True)
    return np.stack([a[0].numpy() for a in attn])


def gradients(model, loss):
    """Backpropagate ``loss`` and return ``{name: grad array}``; non-finite gradients raise."""
    model.zero_grad()
    loss.backward()
    out = {}
    for name, p in model.named_parameters():
        g = np.zeros(p.shape) if p.grad is None else p.grad.detach().numpy().copy()
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name}")
        out[name] = g
    return out


def _relu_patterns(model, loss_fn):
    masks = []
    hooks = [m.register_forward_hook(lambda mod, inp, out: masks.append(inp[0] > 0))
             for m in model.modules() if isinstance(m, nn.ReLU)]
    try:
        with torch.no_grad():
            loss = loss_fn(model).item()
    finally:
        for hk in hooks:
            hk.remove()
    return loss, masks


def finite_difference_check(model, loss_fn, n_probes, rng, h=1e-4, floor=1e-6):
    """Compare autograd gradients against central differences on random coordinates.

    ``loss_fn(model)`` must return a scalar tensor. Returns ``{name: max relative error}``
    with relative error ``|g - fd| / max(|g|, |fd|, floor)``. A probe whose +-h
    perturbation flips any ReLU is not differentiable over the stencil and is
    replaced by another coordinate.
    """
    grads = gradients(model, loss_fn(model))
    _, base = _relu_patterns(model, loss_fn)
    errors = {}
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        worst, done = 0.0, 0
        for idx in rng.permutation(flat.numel()):
            if done == n_probes:
                break
            old = flat[idx].item()
            flat[idx] = old + h
            up, m_up = _relu_patterns(model, loss_fn)
            flat[idx] = old - h
            down, m_down = _relu_patterns(model, loss_fn)
            flat[idx] = old
            if any(not torch.equal(a, b) for a, b in zip(base, m_up)) or \
                    any(not torch.equal(a, b) for a, b in zip(base, m_down)):
                continue
            fd = (up - down) / (2 * h)
            g = grads[name].reshape(-1)[idx]
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), floor))
            done += 1
        errors[name] = worst
    return errors
