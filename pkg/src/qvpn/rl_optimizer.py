"""Policy-gradient path selection: REINFORCE with an average-reward baseline.

The policy is a small feed-forward network (leaky-ReLU hidden layers) mapping
the encoded user-pair list to one logit per (pair, candidate path). Softmax
is applied per pair block; during training paths are sampled without
replacement within each block, at inference each pair takes its top-p_max
probabilities. The update is

    theta <- theta + alpha * sum_t [ grad log pi(a_t|s_t) * (r_t - b(s_t))
                                     + beta * grad H(pi(.|s_t)) ]

with b(s) the running mean of rewards observed at s (updated with r_t before
the advantage is formed). Gradients are computed by hand-written reverse-mode
differentiation; gradient_check validates them against central finite
differences and is part of the test gate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.01
PROB_FLOOR = 1e-12  # only applied when a softmax block underflows to zeros


class DivergenceError(RuntimeError):
    """A policy weight became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    lr_decay: float = 0.96
    lr_decay_every: int = 500
    lr_floor: float = 1e-4
    entropy_beta: float = 0.1
    batch_size: int = 8
    epochs: int = 2000
    paths_per_state: int | None = None  # R; None = every pair takes min(p_max, |CP|)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.entropy_beta < 0:
            raise ValueError("entropy beta must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def lr_at(self, epoch: int) -> float:
        decayed = self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)
        return max(self.lr_floor, decayed)


class RlProblem:
    """Candidate layout for the policy: pair order, per-pair logit blocks,
    and the single distillation strategy used for every selected path."""

    def __init__(self, workload, candidates, strategy, p_max=3):
        self.pair_order = [p.key for p in workload.user_pairs if candidates.get(p.key)]
        self.candidates = {k: list(candidates[k]) for k in self.pair_order}
        self.strategy = strategy
        self.p_max = p_max
        self.block_slices = []
        start = 0
        for k in self.pair_order:
            end = start + len(self.candidates[k])
            self.block_slices.append((start, end))
            start = end
        self.output_dim = start
        self.num_pairs = len(self.pair_order)
        self.input_dim = self.num_pairs * self.num_pairs

    def state_key(self):
        return tuple(self.pair_order)

    def encode_state(self) -> np.ndarray:
        """Fixed one-hot block per pair slot (identity pattern for the static list)."""
        x = np.zeros(self.input_dim)
        for i in range(self.num_pairs):
            x[i * self.num_pairs + i] = 1.0
        return x

    def per_pair_quota(self, R=None):
        """How many paths each pair samples; R caps the total, round-robin."""
        quotas = [min(self.p_max, len(self.candidates[k])) for k in self.pair_order]
        if R is None or R >= sum(quotas):
            return quotas
        if R < self.num_pairs:
            raise ValueError(f"R={R} cannot give every pair a path ({self.num_pairs} pairs)")
        out = [0] * self.num_pairs
        remaining = R
        level = 0
        while remaining > 0:
            level += 1
            for i in range(self.num_pairs):
                if out[i] < min(quotas[i], level) and remaining > 0:
                    out[i] += 1
                    remaining -= 1
        return out

    def selection_from_actions(self, actions):
        """actions: {pair_key: [global candidate indices]} -> selection dict."""
        selection = {}
        for i, k in enumerate(self.pair_order):
            start, _ = self.block_slices[i]
            selection[k] = [(self.candidates[k][a - start], self.strategy) for a in actions[k]]
        return selection


class PolicyNetwork:
    """Feed-forward logits over candidate paths; weights in float64."""

    def __init__(self, weights, biases, block_slices):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.block_slices = list(block_slices)

    @classmethod
    def init(cls, problem: RlProblem, hidden=(128,), seed=0):
        rng = np.random.default_rng([seed, 0xC0FFEE])
        dims = [problem.input_dim, *hidden, problem.output_dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims, dims[1:]):
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, problem.block_slices)

    def num_parameters(self):
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def forward(self, x):
        """Returns (logits, cache) where cache holds activations for backprop."""
        h = np.asarray(x, dtype=float)
        hs = [h]
        zs = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            z = W @ h + b
            zs.append(z)
            h = np.where(z > 0, z, LEAKY_SLOPE * z)
            hs.append(h)
        logits = self.weights[-1] @ h + self.biases[-1]
        return logits, (hs, zs)

    def block_probs(self, logits):
        """Per-pair softmax, each block summing to 1."""
        probs = np.empty_like(logits)
        for start, end in self.block_slices:
            block = logits[start:end]
            e = np.exp(block - block.max())
            probs[start:end] = e / e.sum()
        return probs

    def backward(self, dlogits, cache):
        """Gradient of a scalar surrogate wrt all parameters, given dL/dlogits."""
        hs, zs = cache
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dlogits
        grads_w[-1] = np.outer(delta, hs[-1])
        grads_b[-1] = delta.copy()
        for layer in range(len(self.weights) - 2, -1, -1):
            delta = self.weights[layer + 1].T @ delta
            delta = delta * np.where(zs[layer] > 0, 1.0, LEAKY_SLOPE)
            grads_w[layer] = np.outer(delta, hs[layer])
            grads_b[layer] = delta.copy()
        return grads_w, grads_b

    def apply_update(self, grads_w, grads_b, scale):
        for W, g in zip(self.weights, grads_w):
            W += scale * g
        for b, g in zip(self.biases, grads_b):
            b += scale * g
        for W in self.weights:
            if not np.all(np.isfinite(W)):
                raise DivergenceError("policy weights diverged to non-finite values")
        for b in self.biases:
            if not np.all(np.isfinite(b)):
                raise DivergenceError("policy biases diverged to non-finite values")

    def copy(self):
        return PolicyNetwork([w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], self.block_slices)


@dataclass
class BaselineTable:
    counts: dict = field(default_factory=dict)  # n[s]
    totals: dict = field(default_factory=dict)  # v[s]

    def update(self, key, reward):
        self.counts[key] = self.counts.get(key, 0) + 1
        self.totals[key] = self.totals.get(key, 0.0) + reward

    def value(self, key):
        if key not in self.counts:
            raise KeyError(f"baseline read before any observation of state {key!r}")
        return self.totals[key] / self.counts[key]


def sample_action(policy: PolicyNetwork, problem: RlProblem, rng, R=None):
    """Sample per-pair paths without replacement under the factorized policy.

    Returns (actions, probs, cache) where actions maps pair_key to global
    logit indices. The log-probability uses the factorized approximation
    (independent draws, no renormalization).
    """
    x = problem.encode_state()
    logits, cache = policy.forward(x)
    probs = policy.block_probs(logits)
    if not np.all(np.isfinite(probs)):
        raise DivergenceError(
            "policy produced non-finite action probabilities; "
            "lower the learning rate or rescale rewards")
    quotas = problem.per_pair_quota(R)
    actions = {}
    for i, k in enumerate(problem.pair_order):
        start, end = problem.block_slices[i]
        n = end - start
        r = quotas[i]
        p = probs[start:end]
        if r >= n:
            chosen = np.arange(n)
        else:
            if np.count_nonzero(p) < r:
                # saturated softmax underflowed; keep zero-mass entries
                # reachable so the quota can still be filled
                p = np.maximum(p, PROB_FLOOR)
                p = p / p.sum()
            chosen = rng.choice(n, size=r, replace=False, p=p)
        actions[k] = [start + int(c) for c in sorted(chosen)]
    return actions, probs, cache


def _surrogate_dlogits(policy, problem, probs, actions, advantage, beta):
    """dL/dlogits for L = sum log pi(a)*(advantage) + beta*H, per pair block."""
    d = np.zeros_like(probs)
    for i, k in enumerate(problem.pair_order):
        start, end = problem.block_slices[i]
        p = probs[start:end]
        block = np.zeros(end - start)
        chosen = [a - start for a in actions[k]]
        for c in chosen:
            block[c] += 1.0
        block -= len(chosen) * p
        block *= advantage
        if beta > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                logp = np.where(p > 0, np.log(p), 0.0)
            entropy = -np.sum(p * logp)
            block += beta * (-p * (logp + entropy))
        d[start:end] = block
    return d


def surrogate_value(policy, problem, actions, advantage, beta):
    """L = sum_chosen log pi(a) * advantage + beta * H, for gradient checking."""
    logits, _ = policy.forward(problem.encode_state())
    probs = policy.block_probs(logits)
    total = 0.0
    for i, k in enumerate(problem.pair_order):
        start, end = problem.block_slices[i]
        p = probs[start:end]
        for a in actions[k]:
            total += np.log(p[a - start]) * advantage
        if beta > 0:
            logp = np.where(p > 0, np.log(p), 0.0)
            total += beta * (-np.sum(p * logp))
    return float(total)


def train(policy: PolicyNetwork, problem: RlProblem, config: TrainConfig, environment):
    """REINFORCE loop; mutates the policy in place.

    environment(selection) -> W-EGR reward. Returns (policy, reward_trace,
    baseline_table) with one mean-reward entry per epoch.
    """
    baseline = BaselineTable()
    state = problem.state_key()
    trace = []
    for epoch in range(config.epochs):
        grads_w = [np.zeros_like(w) for w in policy.weights]
        grads_b = [np.zeros_like(b) for b in policy.biases]
        rewards = []
        for b_idx in range(config.batch_size):
            rng = np.random.default_rng([config.seed, epoch, b_idx])
            actions, probs, cache = sample_action(policy, problem, rng, config.paths_per_state)
            reward = environment(problem.selection_from_actions(actions))
            baseline.update(state, reward)
            advantage = reward - baseline.value(state)
            dlogits = _surrogate_dlogits(policy, problem, probs, actions,
                                         advantage, config.entropy_beta)
            gw, gb = policy.backward(dlogits, cache)
            for acc, g in zip(grads_w, gw):
                acc += g
            for acc, g in zip(grads_b, gb):
                acc += g
            rewards.append(reward)
        policy.apply_update(grads_w, grads_b, config.lr_at(epoch))
        trace.append(float(np.mean(rewards)))
    return policy, trace, baseline


def greedy_selection(policy: PolicyNetwork, problem: RlProblem):
    """Inference: per pair, take the top-p_max paths by probability."""
    logits, _ = policy.forward(problem.encode_state())
    probs = policy.block_probs(logits)
    actions = {}
    for i, k in enumerate(problem.pair_order):
        start, end = problem.block_slices[i]
        r = min(problem.p_max, end - start)
        block = probs[start:end]
        # stable ordering: probability descending, index ascending
        order = sorted(range(end - start), key=lambda j: (-block[j], j))
        actions[k] = [start + j for j in sorted(order[:r])]
    return problem.selection_from_actions(actions)


def gradient_check(policy: PolicyNetwork, problem: RlProblem, actions,
                   advantage: float, beta: float, step: float = 1e-5) -> float:
    """Max deviation between analytic and central-difference gradients,
    relative to the largest finite-difference component.

    Guarded to small policies (<= 1e3 parameters); intended as a test gate.
    """
    if policy.num_parameters() > 1000:
        raise ValueError("gradient_check is limited to policies with <= 1000 parameters")
    logits, cache = policy.forward(problem.encode_state())
    probs = policy.block_probs(logits)
    dlogits = _surrogate_dlogits(policy, problem, probs, actions, advantage, beta)
    grads_w, grads_b = policy.backward(dlogits, cache)

    analytic = np.concatenate([g.ravel() for g in grads_w + grads_b])
    params = policy.weights + policy.biases
    fd = np.empty_like(analytic)
    idx = 0
    for arr in params:
        flat = arr.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = surrogate_value(policy, problem, actions, advantage, beta)
            flat[j] = orig - step
            down = surrogate_value(policy, problem, actions, advantage, beta)
            flat[j] = orig
            fd[idx] = (up - down) / (2.0 * step)
            idx += 1
    scale = max(np.max(np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd)) / scale)


# Checkpoint format (little-endian): magic "QVPNPOL1", uint32 array count,
# then per array uint32 ndim, uint32 dims..., float64 payload. Arrays are
# W0, b0, W1, b1, ... followed by one extra array holding the block slices
# as a flat (start, end) int-valued float array.
_MAGIC = b"QVPNPOL1"


def save_policy(policy: PolicyNetwork) -> bytes:
    arrays = []
    for W, b in zip(policy.weights, policy.biases):
        arrays.extend([W, b])
    arrays.append(np.array([v for se in policy.block_slices for v in se], dtype=float))
    out = [_MAGIC, struct.pack("<I", len(arrays))]
    for arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        out.append(struct.pack("<I", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes())
    return b"".join(out)


def load_policy(blob: bytes) -> PolicyNetwork:
    if blob[:8] != _MAGIC:
        raise ValueError("not a policy checkpoint (bad magic)")
    offset = 8
    arrays = []
    try:
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
            offset += 8 * n
            arrays.append(arr.astype(float))
    except (struct.error, ValueError) as exc:
        raise ValueError(f"corrupt checkpoint: {exc}") from None
    if len(arrays) < 3 or len(arrays) % 2 == 0:
        raise ValueError("corrupt checkpoint: unexpected array count")
    slices_flat = arrays[-1]
    block_slices = [(int(slices_flat[i]), int(slices_flat[i + 1]))
                    for i in range(0, len(slices_flat), 2)]
    weights = arrays[:-1:2]
    biases = arrays[1:-1:2]
    return PolicyNetwork(weights, biases, block_slices)
