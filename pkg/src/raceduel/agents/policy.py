"""Feedforward policy/value network in plain numpy.

Tanh hidden layers, a tanh output head scaled to the actuator ranges
(throttle in [-1,1], steer in [-delta_max, delta_max]), and a linear value
head sharing the trunk. Parameters live in one flat vector with a fixed
layout so checkpoints and finite-difference checks are straightforward.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"RDPL"
CHECKPOINT_VERSION = 1


class PolicyNet:
    """sizes = [input, hidden...]; the action head always has 2 outputs."""

    def __init__(self, sizes, delta_max: float = 0.4, seed: int = 0):
        if len(sizes) < 2:
            raise ValueError("need at least one hidden layer")
        self.sizes = [int(s) for s in sizes]
        self.delta_max = float(delta_max)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        dims = self.sizes + [2]
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))
        h_last = self.sizes[-1]
        self.value_w = rng.normal(0.0, 1.0 / np.sqrt(h_last), size=h_last)
        self.value_b = 0.0

    # -- flat parameter vector -------------------------------------------
    @property
    def n_params(self) -> int:
        n = sum(w.size + b.size for w, b in zip(self.weights, self.biases))
        return n + self.value_w.size + 1

    def get_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        parts.append(self.value_w)
        parts.append(np.array([self.value_b]))
        return np.concatenate(parts)

    def set_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params,):
            raise ValueError(
                f"parameter vector must have length {self.n_params}, "
                f"got {vec.shape}"
            )
        i = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = vec[i:i + w.size].reshape(w.shape)
            i += w.size
            b[...] = vec[i:i + b.size]
            i += b.size
        self.value_w[...] = vec[i:i + self.value_w.size]
        i += self.value_w.size
        self.value_b = float(vec[i])

    # -- forward / backward ------------------------------------------------
    def forward_batch(self, x: np.ndarray):
        """Returns (actions (N,2), values (N,), cache)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(
                f"observation size {x.shape[1]} != input size {self.sizes[0]}"
            )
        acts = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ w.T + b)
            acts.append(a)
        head = np.tanh(a @ self.weights[-1].T + self.biases[-1])
        mu = head * np.array([1.0, self.delta_max])
        v = a @ self.value_w + self.value_b
        return mu, v, (acts, head)

    def act(self, obs: np.ndarray) -> tuple[float, float]:
        mu, _, _ = self.forward_batch(obs)
        return float(mu[0, 0]), float(mu[0, 1])

    def value(self, obs: np.ndarray) -> float:
        _, v, _ = self.forward_batch(obs)
        return float(v[0])

    def backward(self, cache, dmu: np.ndarray, dv: np.ndarray) -> np.ndarray:
        """Gradient of a scalar loss w.r.t. the flat parameters, given its
        gradients at the (scaled) action head and the value head."""
        acts, head = cache
        a_last = acts[-1]
        dhead = dmu * np.array([1.0, self.delta_max])
        dz = dhead * (1.0 - head * head)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        grads_w[-1] = dz.T @ a_last
        grads_b[-1] = dz.sum(axis=0)
        dv = np.asarray(dv, dtype=float)
        da = dz @ self.weights[-1] + np.outer(dv, self.value_w)
        gv_w = a_last.T @ dv
        gv_b = float(dv.sum())
        for layer in range(len(self.weights) - 2, -1, -1):
            a_out = acts[layer + 1]
            dpre = da * (1.0 - a_out * a_out)
            grads_w[layer] = dpre.T @ acts[layer]
            grads_b[layer] = dpre.sum(axis=0)
            da = dpre @ self.weights[layer]
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        parts.append(gv_w)
        parts.append(np.array([gv_b]))
        return np.concatenate(parts)

    # -- checkpoint io -------------------------------------------------------
    def save(self, path) -> None:
        params = self.get_params()
        header = struct.pack(
            "<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(self.sizes)
        )
        header += struct.pack(f"<{len(self.sizes)}I", *self.sizes)
        header += struct.pack("<dQ", self.delta_max, params.size)
        Path(path).write_bytes(header + params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PolicyNet":
        raw = Path(path).read_bytes()
        magic, version, n_sizes = struct.unpack_from("<4sII", raw, 0)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a policy checkpoint (bad magic)")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        off = struct.calcsize("<4sII")
        sizes = struct.unpack_from(f"<{n_sizes}I", raw, off)
        off += struct.calcsize(f"<{n_sizes}I")
        delta_max, n_params = struct.unpack_from("<dQ", raw, off)
        off += struct.calcsize("<dQ")
        params = np.frombuffer(raw, dtype="<f8", count=n_params, offset=off)
        net = cls(sizes, delta_max=delta_max, seed=0)
        if params.size != net.n_params:
            raise ValueError("checkpoint parameter count mismatch")
        net.set_params(params.copy())
        return net
