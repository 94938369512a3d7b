"""Numpy actor-critic with a diagonal Gaussian policy and clipped-surrogate PPO.

Everything, including backpropagation, is written out by hand so the
gradient path can be audited against finite differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelFormatError
from .flowfield import ACTION_HIGH, ACTION_LOW, FieldAction

ACTION_DIM = 4
HIDDEN = 128
LOG_STD_MIN, LOG_STD_MAX = -4.0, 1.0
RAW_EPS = 1e-6

MODEL_MAGIC = b"TFTA-PPO"
MODEL_VERSION = 1


@dataclass(frozen=True)
class PpoConfig:
    clip_epsilon: float = 0.2
    discount: float = 0.98
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_size: int = 512
    minibatch_size: int = 128
    epochs_K: int = 10
    gae_lambda: float = 0.95
    momentum: float = 0.9
    max_grad_norm: float = 0.5
    entropy_coef: float = 0.0
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ConfigError("clip_epsilon must be in (0, 1)")
        if not 0 < self.discount <= 1:
            raise ConfigError("discount must be in (0, 1]")
        if self.lr_actor < 0 or self.lr_critic < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.batch_size < 1 or self.minibatch_size < 1 or self.epochs_K < 1:
            raise ConfigError("batch sizes and epochs must be positive")


class Mlp:
    """Four affine layers with ReLU in between and an optional tanh head."""

    def __init__(self, layer_dims: Sequence[int], out_activation: str = "tanh", rng=None, out_scale: float = 1.0):
        if len(layer_dims) != 5:
            raise ConfigError("an Mlp has exactly four layers (five layer widths)")
        if out_activation not in ("tanh", "linear"):
            raise ConfigError(f"unknown output activation {out_activation!r}")
        self.layer_dims = [int(d) for d in layer_dims]
        self.out_activation = out_activation
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights = []
        self.biases = []
        for i, (n_in, n_out) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            last = i == len(self.layer_dims) - 2
            gain = out_scale if last else math.sqrt(2.0)
            self.weights.append(_orthogonal(rng, n_in, n_out, gain))
            self.biases.append(np.zeros(n_out))

    @property
    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def forward(self, x: np.ndarray, keep: bool = False):
        """Forward pass on a batch (N, in) or a single vector.

        With ``keep=True`` also returns the activations needed by :meth:`backward`.
        """
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != self.layer_dims[0]:
            raise ConfigError(f"input dimension {h.shape[-1]} != {self.layer_dims[0]}")
        acts = [h]
        n = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < n - 1:
                h = np.maximum(h, 0.0)
            elif self.out_activation == "tanh":
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts: list, grad_out: np.ndarray) -> list:
        """Gradients of a scalar loss w.r.t. ``params`` given dLoss/dOutput."""
        g = np.asarray(grad_out, dtype=np.float64)
        if self.out_activation == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return grads


def _orthogonal(rng, n_in, n_out, gain):
    a = rng.normal(size=(max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return np.ascontiguousarray(gain * q[:n_in, :n_out])


def actor_forward(net: Mlp, state) -> np.ndarray:
    """Policy mean, each component strictly inside (-1, 1)."""
    return net.forward(state)


class ActorCritic:
    def __init__(self, state_dim: int, hidden: int = HIDDEN, seed: int = 0, log_std_init: float = -0.5):
        rng = np.random.default_rng(seed)
        self.actor = Mlp([state_dim, hidden, hidden, hidden, ACTION_DIM], "tanh", rng, out_scale=0.01)
        self.critic = Mlp([state_dim, hidden, hidden, hidden, 1], "linear", rng, out_scale=1.0)
        self.log_std = np.full(ACTION_DIM, float(log_std_init))

    @property
    def state_dim(self) -> int:
        return self.actor.layer_dims[0]

    def actor_params(self) -> list:
        return self.actor.params + [self.log_std]

    def critic_params(self) -> list:
        return self.critic.params

    def policy(self, state):
        return PolicyOutput(self.actor.forward(state), self.log_std.copy(), float(self.critic.forward(state)[0]))

    def value(self, states) -> np.ndarray:
        return self.critic.forward(states)[..., 0]


class PolicyOutput(NamedTuple):
    mean: np.ndarray
    log_std: np.ndarray
    value: float


class ActionSample(NamedTuple):
    raw: np.ndarray  # clamped into the open interval, fed to squash_action
    log_prob: float
    sample: np.ndarray  # unclamped Gaussian draw, stored for the ratio


def gaussian_log_prob(x, mean, log_std) -> np.ndarray:
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * math.log(2.0 * math.pi), axis=-1)


def sample_action(output: PolicyOutput, rng: np.random.Generator) -> ActionSample:
    noise = rng.normal(size=ACTION_DIM)
    x = output.mean + np.exp(output.log_std) * noise
    lp = float(gaussian_log_prob(x, output.mean, output.log_std))
    raw = np.clip(x, -1.0 + RAW_EPS, 1.0 - RAW_EPS)
    return ActionSample(raw, lp, x)


_SPAN = ACTION_HIGH - ACTION_LOW
_MID = 0.5 * (ACTION_HIGH + ACTION_LOW)


def squash_action(raw) -> FieldAction:
    """Affine map from (-1, 1)^4 onto the field-parameter box."""
    r = np.asarray(raw, dtype=np.float64)
    b, p, s = (_MID + 0.5 * _SPAN * r[:3]).tolist()
    return FieldAction(b, p, s, float(math.pi * r[3]))


def unsquash_action(action: FieldAction) -> np.ndarray:
    return np.array(
        [
            (action.beta - _MID) / (0.5 * _SPAN),
            (action.rho - _MID) / (0.5 * _SPAN),
            (action.sigma - _MID) / (0.5 * _SPAN),
            action.theta / math.pi,
        ]
    )


def compute_returns(rewards, final_value: float, discount: float) -> np.ndarray:
    """Discounted returns by backward recursion, bootstrapped with ``final_value``."""
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    g = float(final_value)
    for t in range(len(r) - 1, -1, -1):
        g = r[t] + discount * g
        out[t] = g
    return out


def compute_advantages(rewards, values, dones, discount: float, gae_lambda: float, last_value: float = 0.0) -> np.ndarray:
    """Generalised advantage estimates (not normalised).

    ``dones[t]`` marks that the episode ended after step ``t``; the value
    after a terminal step is zero, otherwise the next stored value (or
    ``last_value`` past the end of the buffer) bootstraps.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=bool)
    adv = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        nonterminal = 0.0 if d[t] else 1.0
        v_next = (v[t + 1] if t + 1 < len(r) else last_value) * nonterminal
        delta = r[t] + discount * v_next - v[t]
        running = delta + discount * gae_lambda * nonterminal * running
        adv[t] = running
    return adv


def normalize(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


@dataclass
class RolloutBuffer:
    states: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def add(self, state, sample, log_prob, reward, value, done) -> None:
        self.states.append(np.asarray(state, dtype=np.float64))
        self.samples.append(np.asarray(sample, dtype=np.float64))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))

    def __len__(self) -> int:
        return len(self.rewards)

    def clear(self) -> None:
        for v in (self.states, self.samples, self.log_probs, self.rewards, self.values, self.dones):
            v.clear()

    def batch(self, config: PpoConfig, last_value: float = 0.0) -> dict:
        """Arrays for an update: advantages by GAE, returns as advantage + value."""
        values = np.array(self.values)
        adv = compute_advantages(self.rewards, values, self.dones, config.discount, config.gae_lambda, last_value)
        return {
            "states": np.array(self.states),
            "samples": np.array(self.samples),
            "log_probs": np.array(self.log_probs),
            "returns": adv + values,
            "advantages": adv,
        }


@dataclass
class LossReport:
    actor_loss: float = 0.0
    critic_loss: float = 0.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    minibatches: int = 0
    aborted: bool = False
    message: str = ""


def clipped_surrogate(ratio, adv, eps):
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def losses_and_grads(ac: ActorCritic, mb: dict, config: PpoConfig):
    """Actor and critic losses on a minibatch plus their exact gradients.

    ``mb["advantages"]`` is used as given; normalisation happens per update batch.
    Returns ``(actor_loss, critic_loss, actor_grads, critic_grads, clip_fraction, approx_kl)``.
    """
    x = mb["samples"]
    adv = mb["advantages"]
    n = len(adv)
    eps = config.clip_epsilon
    mean, acts = ac.actor.forward(mb["states"], keep=True)
    log_std = ac.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = x - mean
    logp = gaussian_log_prob(x, mean, log_std)
    log_ratio = logp - mb["log_probs"]
    ratio = np.exp(log_ratio)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    surrogate = np.minimum(unclipped, clipped)
    entropy = float(np.sum(log_std + 0.5 * math.log(2.0 * math.pi * math.e)))
    actor_loss = -float(surrogate.mean()) - config.entropy_coef * entropy

    # d(-mean surrogate)/d logp: only samples where the unclipped branch is active
    active = unclipped <= clipped
    dlogp = np.where(active, -adv * ratio, 0.0) / n
    d_mean = dlogp[:, None] * diff * inv_var
    d_log_std = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - config.entropy_coef
    actor_grads = ac.actor.backward(acts, d_mean) + [d_log_std]

    values, c_acts = ac.critic.forward(mb["states"], keep=True)
    err = values[:, 0] - mb["returns"]
    critic_loss = float(np.mean(err * err))
    critic_grads = ac.critic.backward(c_acts, (2.0 * err / n)[:, None])

    clip_frac = float(np.mean(np.abs(ratio - 1.0) > eps))
    approx_kl = float(np.mean(-log_ratio))
    return actor_loss, critic_loss, actor_grads, critic_grads, clip_frac, approx_kl


class SgdMomentum:
    """Minibatch SGD with heavy-ball momentum and global-norm gradient clipping."""

    def __init__(self, params: list, lr: float, momentum: float, max_grad_norm: Optional[float]):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.max_grad_norm = max_grad_norm
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list) -> float:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        if self.lr == 0.0:
            return norm
        for p, g, v in zip(self.params, grads, self.velocity):
            v *= self.momentum
            v += scale * g
            p -= self.lr * v
        return norm


class PpoLearner:
    """Owns the networks and the optimiser state across updates."""

    def __init__(self, ac: ActorCritic, config: PpoConfig):
        self.ac = ac
        self.config = config
        self.actor_opt = SgdMomentum(ac.actor_params(), config.lr_actor, config.momentum, config.max_grad_norm)
        self.critic_opt = SgdMomentum(ac.critic_params(), config.lr_critic, config.momentum, config.max_grad_norm)

    def update(self, batch: dict, rng: np.random.Generator) -> LossReport:
        return ppo_update(self.ac, batch, self.config, rng, self.actor_opt, self.critic_opt)


def ppo_update(
    ac: ActorCritic,
    batch: dict,
    config: PpoConfig,
    rng: np.random.Generator,
    actor_opt: Optional[SgdMomentum] = None,
    critic_opt: Optional[SgdMomentum] = None,
) -> LossReport:
    """K epochs of shuffled minibatch SGD on the clipped surrogate and value MSE."""
    actor_opt = actor_opt or SgdMomentum(ac.actor_params(), config.lr_actor, config.momentum, config.max_grad_norm)
    critic_opt = critic_opt or SgdMomentum(ac.critic_params(), config.lr_critic, config.momentum, config.max_grad_norm)
    adv = batch["advantages"]
    if config.normalize_advantages and len(adv) > 1:
        adv = normalize(adv)
    data = dict(batch, advantages=adv)
    n = len(adv)
    report = LossReport()
    a_sum = c_sum = clip_sum = kl_sum = 0.0
    for _ in range(config.epochs_K):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            mb = {k: v[idx] for k, v in data.items()}
            a_loss, c_loss, a_grads, c_grads, clip_frac, kl = losses_and_grads(ac, mb, config)
            if not (math.isfinite(a_loss) and math.isfinite(c_loss)):
                report.aborted = True
                report.message = f"non-finite loss (actor={a_loss}, critic={c_loss})"
                return report
            actor_opt.step(a_grads)
            critic_opt.step(c_grads)
            np.clip(ac.log_std, LOG_STD_MIN, LOG_STD_MAX, out=ac.log_std)
            a_sum += a_loss
            c_sum += c_loss
            clip_sum += clip_frac
            kl_sum += kl
            report.minibatches += 1
    m = max(report.minibatches, 1)
    report.actor_loss = a_sum / m
    report.critic_loss = c_sum / m
    report.clip_fraction = clip_sum / m
    report.approx_kl = kl_sum / m
    return report


def save_model(ac: ActorCritic, path) -> None:
    """Versioned little-endian binary: header, per-network dims and float64 params, then log_std."""
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<I", MODEL_VERSION))
        for net in (ac.actor, ac.critic):
            f.write(struct.pack("<B", 1 if net.out_activation == "tanh" else 0))
            f.write(struct.pack("<I", len(net.layer_dims)))
            f.write(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
            for p in net.params:
                f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        f.write(struct.pack("<I", ac.log_std.size))
        f.write(np.ascontiguousarray(ac.log_std, dtype="<f8").tobytes())


def load_model(path) -> ActorCritic:
    raw = Path(path).read_bytes()
    if not raw.startswith(MODEL_MAGIC):
        raise ModelFormatError("not a model file (bad magic)")
    off = len(MODEL_MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    nets = []
    try:
        for _ in range(2):
            (act,) = struct.unpack_from("<B", raw, off)
            off += 1
            (nd,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = list(struct.unpack_from(f"<{nd}I", raw, off))
            off += 4 * nd
            net = Mlp(dims, "tanh" if act else "linear")
            for i in range(len(net.weights)):
                for arr, shape in ((net.weights, (dims[i], dims[i + 1])), (net.biases, (dims[i + 1],))):
                    size = int(np.prod(shape))
                    arr[i] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
                    off += 8 * size
            nets.append(net)
        (ns,) = struct.unpack_from("<I", raw, off)
        off += 4
        log_std = np.frombuffer(raw, dtype="<f8", count=ns, offset=off).astype(np.float64)
        off += 8 * ns
    except (struct.error, ValueError) as exc:
        raise ModelFormatError(f"truncated model file: {exc}") from None
    if off != len(raw):
        raise ModelFormatError("trailing bytes in model file")
    ac = ActorCritic.__new__(ActorCritic)
    ac.actor, ac.critic = nets
    ac.log_std = log_std
    return ac
