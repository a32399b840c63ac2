"""Small evidential MLP: dense ReLU layers, softplus evidence head, manual
reverse-mode gradients and Adam.

The loss never goes through a general autodiff engine.  ``loss_grad_alpha``
differentiates the closed-form variational loss with respect to the Dirichlet
concentration, and since alpha = e + W a with W held constant, that gradient
is also dL/de and is fed straight into :func:`backward`.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import dirichlet, evidential
from .specfun import trigamma

__all__ = [
    "MlpModel",
    "GradientTape",
    "AdamState",
    "softplus",
    "sigmoid",
    "init_mlp",
    "forward",
    "backward",
    "loss_grad_alpha",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT",
]

CHECKPOINT_FORMAT = "gedl-mlp"
CHECKPOINT_VERSION = 1


def softplus(z):
    """ln(1 + exp(z)) without overflow: max(z, 0) + log1p(exp(-|z|))."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


@dataclass
class MlpModel:
    """Dense layers ``weights[i]`` of shape (out, in) with ``biases[i]`` of shape (out,).

    Hidden layers use ``activations[i]`` (``"relu"`` or ``"identity"``); the
    last layer feeds the softplus evidence head.
    """

    weights: list
    biases: list
    activations: list

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for i, (Wm, b) in enumerate(zip(self.weights, self.biases)):
            if Wm.ndim != 2 or b.shape != (Wm.shape[0],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match weight {Wm.shape}")
            if i and Wm.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim {Wm.shape[1]} does not chain")
        for act in self.activations:
            if act not in ("relu", "identity"):
                raise ValueError(f"unknown activation {act!r}")

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def K(self):
        return self.weights[-1].shape[0]

    @property
    def hidden_dims(self):
        return [Wm.shape[0] for Wm in self.weights[:-1]]

    def params(self):
        """Named views of every parameter array (updates write through)."""
        out = {}
        for i, (Wm, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{i}.weight"] = Wm
            out[f"layer{i}.bias"] = b
        return out

    def copy(self):
        return MlpModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


EVIDENCE_INIT_SCALE = 0.1


def init_mlp(input_dim, hidden_dims, K, rng):
    """He-style uniform initialisation, biases zero.

    The evidence layer is scaled down by ``EVIDENCE_INIT_SCALE`` so every
    class starts near softplus(0); a head initialised deep in the negative
    range gets vanishing sigmoid gradients and never collects evidence.
    """
    dims = [input_dim, *hidden_dims, K]
    weights, biases, acts = [], [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / fan_in)
        if i == len(dims) - 2:
            limit *= EVIDENCE_INIT_SCALE
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
        acts.append("relu" if i < len(dims) - 2 else "identity")
    return MlpModel(weights, biases, acts)


@dataclass
class GradientTape:
    """Layer inputs and pre-activations recorded by :func:`forward`."""

    inputs: list = field(default_factory=list)
    preacts: list = field(default_factory=list)


def forward(model, x, tape=None):
    """Evidence e(x) = softplus(f(x)) for a batch ``x`` of shape (N, d) or (d,).

    Pass a :class:`GradientTape` to record what :func:`backward` needs.
    """
    h = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError("input contains NaN or Inf")
    if h.shape[-1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} input features, got {h.shape[-1]}")
    for Wm, b, act in zip(model.weights, model.biases, model.activations):
        if tape is not None:
            tape.inputs.append(h)
        z = h @ Wm.T + b
        if tape is not None:
            tape.preacts.append(z)
        h = np.maximum(z, 0.0) if act == "relu" else z
    return softplus(h)


def backward(model, tape, grad_evidence):
    """Parameter gradients given dL/de for the batch recorded on ``tape``."""
    g = np.asarray(grad_evidence, dtype=float)
    if g.shape != tape.preacts[-1].shape:
        raise ValueError(f"gradient shape {g.shape} does not match evidence shape {tape.preacts[-1].shape}")
    last = len(model.weights) - 1
    g = g * sigmoid(tape.preacts[last])
    grads = {}
    for i in range(last, -1, -1):
        if i != last and model.activations[i] == "relu":
            g = g * (tape.preacts[i] > 0.0)
        h = tape.inputs[i]
        if g.ndim == 1:
            grads[f"layer{i}.weight"] = np.outer(g, h)
            grads[f"layer{i}.bias"] = g.copy()
        else:
            grads[f"layer{i}.weight"] = g.T @ h
            grads[f"layer{i}.bias"] = g.sum(axis=0)
        if i:
            g = g @ model.weights[i]
    return grads


def _data_grad(a, y, y1, likelihood):
    S = np.sum(a, axis=-1, keepdims=True)
    if likelihood == "nll":
        # d/da_k [psi(S) - psi(a_y)]
        return trigamma(S) - y1 * trigamma(a)
    p = a / S
    resid = y1 - p
    q = np.sum(p * p, axis=-1, keepdims=True)
    d_sq = (-2.0 / S) * (resid - np.sum(resid * p, axis=-1, keepdims=True))
    d_var = (-2.0 / S) * (p - q) / (S + 1.0) - (1.0 - q) / (S + 1.0) ** 2
    return d_sq + d_var


def _kl_grad(q, a0):
    Sq = np.sum(q, axis=-1, keepdims=True)
    S0 = np.sum(a0, axis=-1, keepdims=True)
    return (q - a0) * trigamma(q) - trigamma(Sq) * (Sq - S0)


def loss_grad_alpha(alpha, prior, y, tau, cfg):
    """Analytic dL/dalpha of :func:`gedl.evidential.variational_loss`.

    Masked components (the true class under ``misclassified_only``) receive
    no KL gradient.  ``tau`` may be per-sample; ``inf`` drops the KL term.
    """
    a = dirichlet.as_alpha(alpha)
    a0 = np.broadcast_to(dirichlet.as_alpha(prior), a.shape)
    K = a.shape[-1]
    y1 = evidential.one_hot(y, K)
    grad = _data_grad(a, y, y1, cfg.likelihood)
    lam = evidential.kl_weight_from_tau(tau)
    if np.any(lam > 0.0):
        if cfg.kl_masking == "misclassified_only":
            q = y1 + (1.0 - y1) * a
            gkl = _kl_grad(q, a0) * (1.0 - y1)
        else:
            gkl = _kl_grad(a, a0)
        grad = grad + np.asarray(lam)[..., None] * gkl
    return grad


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """In-place bias-corrected Adam update of ``params`` (dict of arrays)."""
    if set(params) != set(grads):
        raise ValueError("params and grads have different names")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def save_checkpoint(path, model, meta=None):
    """Write the model as JSON: a list of named tensors with explicit shapes.

    Layout::

        {"format": "gedl-mlp", "version": 1,
         "activations": ["relu", ..., "identity"],
         "tensors": [{"name": "layer0.weight", "shape": [64, 2],
                      "data": [... row-major floats ...]}, ...],
         "meta": {...}}
    """
    tensors = [
        {"name": name, "shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
        for name, arr in model.params().items()
    ]
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "activations": list(model.activations),
        "tensors": tensors,
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`; returns (model, meta)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
    named = {}
    for t in doc["tensors"]:
        arr = np.asarray(t["data"], dtype=float)
        if arr.size != int(np.prod(t["shape"])):
            raise ValueError(f"{path}: tensor {t['name']} has {arr.size} values for shape {t['shape']}")
        named[t["name"]] = arr.reshape(t["shape"])
    n = len(doc["activations"])
    model = MlpModel(
        [named[f"layer{i}.weight"] for i in range(n)],
        [named[f"layer{i}.bias"] for i in range(n)],
        list(doc["activations"]),
    )
    return model, doc.get("meta", {})
