"""Plain numpy MLPs for the policy and value function, plus checkpoint I/O.

Networks are affine-ReLU stacks in float32 with orthogonal init (gain
sqrt(2) on hidden layers, configurable on the head). The policy is a
diagonal Gaussian whose mean is the sigmoid of the head output and whose
log-std is a state-independent learned vector. Backprop is hand-rolled;
forward(want_cache=True) returns the activations backward() consumes.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import CheckpointError

LOG_2PI = math.log(2.0 * math.pi)


def count_parameters(sizes) -> int:
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def orthogonal_init(shape, gain, rng) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix the sign ambiguity so init is rng-determined
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MlpNetwork:
    """Affine-ReLU-...-affine. Weights stored (in, out) so forward is x @ W + b.

    rng=None builds a zero-initialized network (checkpoint loading and the
    odd test); pass a Generator for orthogonal init.
    """

    def __init__(self, sizes, rng=None, head_gain=1.0, dtype=np.float32):
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = [int(s) for s in sizes]
        self.dtype = dtype
        self.weights, self.biases = [], []
        last = len(sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if rng is None:
                w = np.zeros((n_in, n_out))
            else:
                gain = head_gain if i == last else math.sqrt(2.0)
                w = orthogonal_init((n_in, n_out), gain, rng)
            self.weights.append(np.ascontiguousarray(w, dtype=dtype))
            self.biases.append(np.zeros(n_out, dtype=dtype))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x, want_cache=False):
        """x: (B, in) or (in,). Cache holds the input of every affine layer."""
        h = np.asarray(x, dtype=self.dtype)
        if h.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dim {h.shape[-1]} != expected {self.sizes[0]}")
        cache = [h]
        for i in range(self.n_layers):
            z = h @ self.weights[i] + self.biases[i]
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            cache.append(h)
        return (h, cache) if want_cache else h

    def backward(self, cache, grad_out):
        """grad_out = dL/d(head output), batched. Returns grads aligned with
        params(): [dW0, db0, dW1, db1, ...]."""
        g = np.asarray(grad_out, dtype=self.dtype)
        grads = [None] * (2 * self.n_layers)
        for i in reversed(range(self.n_layers)):
            h_in = cache[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (cache[i] > 0.0)
        return grads

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def sigmoid(x):
    # split positive/negative branches to stay finite in float32
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gaussian_log_prob(mean, log_std, actions):
    """Diagonal-Gaussian log density in float64. The single definition shared
    by the policy and the PPO loss, so recomputed log-probs under unchanged
    weights match bit for bit."""
    std = np.exp(np.asarray(log_std, dtype=np.float64))
    diff = (np.asarray(actions, dtype=np.float64) - mean) / std
    dim = diff.shape[-1]
    return (-0.5 * (diff * diff).sum(axis=-1)
            - np.asarray(log_std, dtype=np.float64).sum() - 0.5 * dim * LOG_2PI)


class GaussianPolicy:
    """Diagonal Gaussian over raw actions: mean = sigmoid(mlp(s)), learned
    state-independent log-std. Samples are raw; the environment quantizes."""

    def __init__(self, sizes, rng=None, log_std_init=-0.5, dtype=np.float32):
        self.net = MlpNetwork(sizes, rng, head_gain=0.01, dtype=dtype)
        self.log_std = np.full(sizes[-1], log_std_init, dtype=dtype)
        self.action_dim = sizes[-1]

    @property
    def sizes(self):
        return self.net.sizes

    def mean(self, states):
        return sigmoid(self.net.forward(states))

    def act(self, state, deterministic=True, rng=None):
        m = self.mean(state)
        if deterministic:
            return m
        if rng is None:
            raise ValueError("stochastic act() needs an explicit rng")
        std = np.exp(self.log_std)
        return (m + std * rng.standard_normal(m.shape)).astype(self.net.dtype)

    def log_prob(self, states, actions):
        """Log-density of raw actions under the current policy; (B,)."""
        return gaussian_log_prob(self.mean(states), self.log_std, actions)

    def entropy(self) -> float:
        return float(self.log_std.sum() + 0.5 * self.action_dim * (LOG_2PI + 1.0))

    def params(self):
        return self.net.params() + [self.log_std]


class ValueNetwork:
    def __init__(self, sizes, rng=None, dtype=np.float32):
        if sizes[-1] != 1:
            raise ValueError("value network head must have size 1")
        self.net = MlpNetwork(sizes, rng, head_gain=1.0, dtype=dtype)

    @property
    def sizes(self):
        return self.net.sizes

    def value(self, states):
        return self.net.forward(states).squeeze(-1)

    def params(self):
        return self.net.params()


# ---------------------------------------------------------------------------
# checkpoint file: magic line, JSON header line, then raw little-endian
# float32 tensors in manifest order

CKPT_MAGIC = b"mmmesh-ckpt v1\n"


def _tensor_manifest(policy: GaussianPolicy, value_net: ValueNetwork):
    entries = []
    for i, (w, b) in enumerate(zip(policy.net.weights, policy.net.biases)):
        entries.append((f"policy.w{i}", w))
        entries.append((f"policy.b{i}", b))
    entries.append(("policy.log_std", policy.log_std))
    for i, (w, b) in enumerate(zip(value_net.net.weights, value_net.net.biases)):
        entries.append((f"value.w{i}", w))
        entries.append((f"value.b{i}", b))
    return entries


def save_checkpoint(path, policy: GaussianPolicy, value_net: ValueNetwork,
                    steps: int = 0, train_config: dict | None = None,
                    env_config: dict | None = None):
    entries = _tensor_manifest(policy, value_net)
    header = {
        "policy_sizes": policy.sizes,
        "value_sizes": value_net.sizes,
        "steps": int(steps),
        "train_config": train_config or {},
        "env_config": env_config or {},
        "tensors": [[name, list(arr.shape)] for name, arr in entries],
    }
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(json.dumps(header).encode() + b"\n")
        for _, arr in entries:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (policy, value_net, header dict)."""
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        try:
            header = json.loads(f.readline().decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{path}: unreadable header: {e}") from e
        policy = GaussianPolicy(header["policy_sizes"])
        value_net = ValueNetwork(header["value_sizes"])
        entries = _tensor_manifest(policy, value_net)
        declared = [(name, tuple(shape)) for name, shape in header["tensors"]]
        actual = [(name, arr.shape) for name, arr in entries]
        if declared != actual:
            raise CheckpointError(f"{path}: tensor manifest mismatch with declared sizes")
        for name, arr in entries:
            raw = f.read(arr.size * 4)
            if len(raw) != arr.size * 4:
                raise CheckpointError(f"{path}: truncated reading tensor {name}")
            arr[...] = np.frombuffer(raw, dtype="<f4").reshape(arr.shape)
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return policy, value_net, header
