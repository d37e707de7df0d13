"""Minimal dense networks with hand-rolled reverse-mode gradients.

Everything an actor or critic needs and nothing more: affine stacks with
rectifier hidden units, an identity or softmax head, exact batched backprop,
Adam, Polyak soft updates and a multiply-accumulate FLOP counter. float64
throughout by default so gradient checks and determinism tests are tight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def relu(x):
    return np.maximum(x, 0.0)


def softmax(x, axis=-1):
    """Shift-stable softmax; rows are positive and sum to 1 for finite input."""

    z = np.asarray(x, dtype=float)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_vjp(probs, grad):
    """Backprop through softmax: (diag(p) - p p^T) g, rowwise."""

    p = np.asarray(probs, dtype=float)
    g = np.asarray(grad, dtype=float)
    dot = np.sum(p * g, axis=-1, keepdims=True)
    return p * (g - dot)


HEADS = ("identity", "softmax")


@dataclass
class GradBundle:
    """Per-parameter gradients matching one Mlp."""

    d_weights: list
    d_biases: list

    def scaled(self, s: float) -> "GradBundle":
        return GradBundle([s * w for w in self.d_weights], [s * b for b in self.d_biases])


class Mlp:
    """Fully connected net: layer_dims[0] inputs, rectifier hidden layers,
    layer_dims[-1] raw scores passed through the head."""

    def __init__(self, layer_dims, head: str = "identity", seed: int = 0, dtype=np.float64):
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        if head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got '{head}'")
        self.layer_dims = tuple(int(d) for d in layer_dims)
        self.head = head
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))

    def _forward_full(self, x2d):
        acts = [x2d]
        z = x2d
        n = len(self.weights)
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            if li < n - 1:
                acts.append(relu(z))
        scores = z
        out = softmax(scores) if self.head == "softmax" else scores
        return out, scores, acts

    def forward(self, x):
        """Head output; accepts (d,) or (batch, d) and matches the shape."""

        x2d, single = _as_batch(x, self.dtype)
        out, _, _ = self._forward_full(x2d)
        return out[0] if single else out

    def forward_scores(self, x):
        """Pre-head scores, used for exploration noise injection."""

        x2d, single = _as_batch(x, self.dtype)
        _, scores, _ = self._forward_full(x2d)
        return scores[0] if single else scores

    def backward(self, x, grad_out, want_param_grads: bool = True):
        """Exact vector-Jacobian product for a batch.

        grad_out is the upstream gradient on the head output (same shape as
        forward(x)). Returns (GradBundle or None, gradient wrt x). Gradients
        are summed over the batch; scale the upstream gradient for means.
        """

        x2d, single = _as_batch(x, self.dtype)
        g2d, _ = _as_batch(grad_out, self.dtype)
        out, scores, acts = self._forward_full(x2d)
        if self.head == "softmax":
            dz = softmax_vjp(out, g2d)
        else:
            dz = g2d

        n = len(self.weights)
        d_w = [None] * n if want_param_grads else None
        d_b = [None] * n if want_param_grads else None
        for li in range(n - 1, -1, -1):
            if want_param_grads:
                d_w[li] = acts[li].T @ dz
                d_b[li] = dz.sum(axis=0)
            da = dz @ self.weights[li].T
            if li > 0:
                dz = da * (acts[li] > 0.0)
        grads = GradBundle(d_w, d_b) if want_param_grads else None
        din = da[0] if single else da
        return grads, din

    def clone(self) -> "Mlp":
        twin = Mlp(self.layer_dims, head=self.head, seed=0, dtype=self.dtype)
        twin.copy_from(self)
        return twin

    def copy_from(self, other: "Mlp") -> None:
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def param_arrays(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def load_param_arrays(self, arrays: dict) -> None:
        for i in range(len(self.weights)):
            self.weights[i] = np.array(arrays[f"w{i}"], dtype=self.dtype)
            self.biases[i] = np.array(arrays[f"b{i}"], dtype=self.dtype)


def _as_batch(x, dtype):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)


def adam_init(net: Mlp, lr: float = 1e-4) -> AdamState:
    st = AdamState(lr=lr)
    st.m_w = [np.zeros_like(w) for w in net.weights]
    st.v_w = [np.zeros_like(w) for w in net.weights]
    st.m_b = [np.zeros_like(b) for b in net.biases]
    st.v_b = [np.zeros_like(b) for b in net.biases]
    return st


def adam_step(net: Mlp, grads: GradBundle, st: AdamState) -> None:
    """One in-place Adam update with bias correction."""

    st.t += 1
    c1 = 1.0 - st.beta1 ** st.t
    c2 = 1.0 - st.beta2 ** st.t
    for params, gs, ms, vs in ((net.weights, grads.d_weights, st.m_w, st.v_w),
                               (net.biases, grads.d_biases, st.m_b, st.v_b)):
        for p, g, m, v in zip(params, gs, ms, vs):
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * np.square(g)
            p -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)


def soft_update(target: Mlp, source: Mlp, eps: float) -> None:
    """Polyak blend: target <- eps * source + (1 - eps) * target."""

    for tw, sw in zip(target.weights, source.weights):
        tw *= 1.0 - eps
        tw += eps * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= 1.0 - eps
        tb += eps * sb


def flop_count(layer_dims) -> int:
    """Multiply-accumulate count of one forward pass, 2 * in * out per affine
    layer; head and bias adds are free."""

    dims = [int(d) for d in layer_dims]
    return sum(2 * a * b for a, b in zip(dims[:-1], dims[1:]))
