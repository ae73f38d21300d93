"""Dense softmax classifier with hand-written gradients.

Everything here is plain float64 numpy: a small MLP (rectifier hidden
layers, softmax output), exact gradients for the joint objective
(soft-target cross-entropy over two views plus a signed symmetric-KL
consistency term), an adaptive-moment optimizer, and a flat binary
checkpoint format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import objective
from .errors import InvalidInputError, NumericFailureError

CHECKPOINT_MAGIC = b"JSRC"
CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    """Feed-forward classifier parameters.

    ``layer_dims`` is [input_dim, hidden..., class_count]; ``weights[l]``
    has shape (layer_dims[l], layer_dims[l+1]).
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise InvalidInputError("layer_dims needs at least input and output dims")
        if any(d <= 0 for d in self.layer_dims):
            raise InvalidInputError(f"layer_dims must be positive, got {self.layer_dims}")
        n = len(self.layer_dims) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise InvalidInputError("one weight matrix and bias vector per layer transition")
        for l in range(n):
            want = (self.layer_dims[l], self.layer_dims[l + 1])
            if self.weights[l].shape != want:
                raise InvalidInputError(f"weights[{l}] has shape {self.weights[l].shape}, want {want}")
            if self.biases[l].shape != (self.layer_dims[l + 1],):
                raise InvalidInputError(f"biases[{l}] has shape {self.biases[l].shape}")
        if self.activation != "relu":
            raise InvalidInputError(f"unsupported activation {self.activation!r}")

    @property
    def class_count(self) -> int:
        return self.layer_dims[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]


@dataclass
class Gradients:
    """Per-parameter gradients, shapes mirroring an MlpModel."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class OptimizerState:
    """Adaptive-moment optimizer state (first/second moment accumulators)."""

    learning_rate: float
    step_count: int
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_model(layer_dims: list[int], rng: np.random.Generator) -> MlpModel:
    """Fan-in scaled uniform init: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), b = 0."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_dims), weights, biases)


def clone_model(model: MlpModel) -> MlpModel:
    return MlpModel(
        list(model.layer_dims),
        [w.copy() for w in model.weights],
        [b.copy() for b in model.biases],
        model.activation,
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_trace(model: MlpModel, X: np.ndarray):
    """Forward pass keeping pre-activations and layer inputs for backprop."""
    n_layers = len(model.weights)
    pre = []
    inputs = [X]
    h = X
    for l in range(n_layers):
        z = h @ model.weights[l] + model.biases[l]
        if not np.isfinite(z).all():
            raise NumericFailureError(f"non-finite activations in layer {l}", layer_index=l)
        pre.append(z)
        h = np.maximum(z, 0.0) if l < n_layers - 1 else z
        inputs.append(h)
    return pre, inputs, _softmax(pre[-1])


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Softmax class probabilities for a single feature vector or a (B, D) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InvalidInputError(
            f"input dimension {x.shape} does not match model input dim {model.input_dim}"
        )
    _, _, probs = _forward_trace(model, X)
    return probs[0] if single else probs


def _backprop(model: MlpModel, pre, inputs, d_logits: np.ndarray):
    """Chain a gradient at the output logits back to all parameters."""
    n_layers = len(model.weights)
    g_w = [None] * n_layers
    g_b = [None] * n_layers
    delta = d_logits
    for l in reversed(range(n_layers)):
        g_w[l] = inputs[l].T @ delta
        g_b[l] = delta.sum(axis=0)
        if not (np.isfinite(g_w[l]).all() and np.isfinite(g_b[l]).all()):
            raise NumericFailureError(f"non-finite gradient in layer {l}", layer_index=l)
        if l > 0:
            delta = (delta @ model.weights[l].T) * (pre[l - 1] > 0)
    return g_w, g_b


def backward(
    model: MlpModel,
    v_batch: np.ndarray,
    v_prime_batch: np.ndarray,
    targets: np.ndarray,
    consistency_signs: np.ndarray,
    alpha: float,
) -> tuple[Gradients, objective.LossReport]:
    """Exact gradients of (1-alpha)*L_c + alpha*L_o over a two-view batch.

    L_c is the mean soft-target cross-entropy summed over both views; L_o is
    the mean signed symmetric KL between the views' predictions. Returns the
    parameter gradients together with the loss report for the same batch.
    """
    V = np.atleast_2d(np.asarray(v_batch, dtype=np.float64))
    Vp = np.atleast_2d(np.asarray(v_prime_batch, dtype=np.float64))
    T = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    rho = np.atleast_1d(np.asarray(consistency_signs, dtype=np.float64))
    if not (V.shape == Vp.shape and V.shape[0] == T.shape[0] == rho.shape[0]):
        raise InvalidInputError("batch arrays must have matching lengths")
    if V.shape[1] != model.input_dim or T.shape[1] != model.class_count:
        raise InvalidInputError("view/target dimensions do not match the model")
    if not np.all(np.isin(rho, (-1.0, 1.0))):
        raise InvalidInputError("consistency signs must be +1 or -1")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must be in [0, 1], got {alpha}")
    if np.any(T < 0) or np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-6):
        raise InvalidInputError("targets must be valid probability distributions")

    batch = V.shape[0]
    pre1, in1, P = _forward_trace(model, V)
    pre2, in2, Pp = _forward_trace(model, Vp)

    l_c = objective.classification_loss(P, Pp, T)
    l_o = objective.consistency_loss(P, Pp, rho)
    report = objective.joint_loss(l_c, l_o, alpha, batch_size=batch)

    # Soft-target CE through softmax: dL/dz = p - target, per view.
    d_z1 = (1.0 - alpha) / batch * (P - T)
    d_z2 = (1.0 - alpha) / batch * (Pp - T)

    if alpha > 0.0:
        log_p = np.log(np.clip(P, objective.PROB_FLOOR, None))
        log_pp = np.log(np.clip(Pp, objective.PROB_FLOOR, None))
        kl_fwd = np.sum(P * (log_p - log_pp), axis=1, keepdims=True)
        kl_bwd = np.sum(Pp * (log_pp - log_p), axis=1, keepdims=True)
        coef = (alpha / batch) * rho[:, None]
        d_z1 += coef * (P * (log_p - log_pp - kl_fwd) + (P - Pp))
        d_z2 += coef * (Pp * (log_pp - log_p - kl_bwd) + (Pp - P))

    gw1, gb1 = _backprop(model, pre1, in1, d_z1)
    gw2, gb2 = _backprop(model, pre2, in2, d_z2)
    grads = Gradients(
        [a + b for a, b in zip(gw1, gw2)],
        [a + b for a, b in zip(gb1, gb2)],
    )
    return grads, report


def init_optimizer(model: MlpModel, learning_rate: float) -> OptimizerState:
    if learning_rate <= 0:
        raise InvalidInputError(f"learning_rate must be positive, got {learning_rate}")
    return OptimizerState(
        learning_rate=learning_rate,
        step_count=0,
        m_weights=[np.zeros_like(w) for w in model.weights],
        v_weights=[np.zeros_like(w) for w in model.weights],
        m_biases=[np.zeros_like(b) for b in model.biases],
        v_biases=[np.zeros_like(b) for b in model.biases],
    )


def optimizer_step(
    model: MlpModel, state: OptimizerState, grads: Gradients
) -> tuple[MlpModel, OptimizerState]:
    """One bias-corrected adaptive-moment update; returns new model and state."""
    if len(grads.weights) != len(model.weights):
        raise InvalidInputError("gradient layer count does not match model")
    for gw, w in zip(grads.weights, model.weights):
        if gw.shape != w.shape:
            raise InvalidInputError(f"gradient shape {gw.shape} does not match weights {w.shape}")
    for gb, b in zip(grads.biases, model.biases):
        if gb.shape != b.shape:
            raise InvalidInputError(f"gradient shape {gb.shape} does not match biases {b.shape}")

    t = state.step_count + 1
    b1, b2, eps, lr = state.beta1, state.beta2, state.eps, state.learning_rate
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t

    def upd(params, grads_list, ms, vs):
        new_p, new_m, new_v = [], [], []
        for p, g, m, v in zip(params, grads_list, ms, vs):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            step = lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
            new_p.append(p - step)
            new_m.append(m)
            new_v.append(v)
        return new_p, new_m, new_v

    new_w, mw, vw = upd(model.weights, grads.weights, state.m_weights, state.v_weights)
    new_b, mb, vb = upd(model.biases, grads.biases, state.m_biases, state.v_biases)
    new_model = MlpModel(list(model.layer_dims), new_w, new_b, model.activation)
    new_state = replace(
        state, step_count=t, m_weights=mw, v_weights=vw, m_biases=mb, v_biases=vb
    )
    return new_model, new_state


def lr_schedule(epoch: int, total_epochs: int, decay_start_epoch: int, base_lr: float) -> float:
    """Constant at base_lr through decay_start_epoch, then linear to 0 at total_epochs."""
    epoch = min(max(epoch, 1), total_epochs)
    if epoch <= decay_start_epoch:
        return base_lr
    frac = (total_epochs - epoch) / (total_epochs - decay_start_epoch)
    return base_lr * max(frac, 0.0)


def save_checkpoint(model: MlpModel, path) -> None:
    """Flat binary dump: magic, version u32, layer count u32, dims u32[],
    then all weights and all biases as little-endian f64 row-major."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(model.layer_dims)))
        fh.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
        for w in model.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        for b in model.biases:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> MlpModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise InvalidInputError(f"bad checkpoint magic {magic!r}")
        version, n_dims = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {version}")
        dims = list(struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims)))
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            buf = fh.read(8 * fan_in * fan_out)
            weights.append(np.frombuffer(buf, dtype="<f8").reshape(fan_in, fan_out).copy())
        for fan_out in dims[1:]:
            buf = fh.read(8 * fan_out)
            biases.append(np.frombuffer(buf, dtype="<f8").copy())
    return MlpModel(dims, weights, biases)
