"""Recurrent future-link-status predictor with a from-scratch trainer.

Two stacked GRU layers separated by inverted dropout, a linear classifier
on the last hidden state, softmax over {LOS, NLOS}.  Gradients come from
manual backprop through time; optimization is Adam with bias correction.
Everything runs in float64 numpy so training is reproducible bit-for-bit
for a fixed seed.

Gate convention:
    z = sigmoid(x Wz^T + h U z^T + bz)
    r = sigmoid(x Wr^T + h Ur^T + br)
    c = tanh(x Wc^T + r * (h Uc^T) + bc)
    h' = (1 - z) * h + z * c
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .errors import DataError, NumericError

GATE_NAMES = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wc", "Uc", "bc")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def init_params(input_dim: int, hidden: int, layers: int = 2, classes: int = 2,
                seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng([seed, 7])
    params: dict[str, np.ndarray] = {}
    for layer in range(layers):
        in_dim = input_dim if layer == 0 else hidden
        wb = 1.0 / np.sqrt(in_dim)
        ub = 1.0 / np.sqrt(hidden)
        for gate in ("z", "r", "c"):
            params[f"l{layer}.W{gate}"] = rng.uniform(-wb, wb, size=(hidden, in_dim))
            params[f"l{layer}.U{gate}"] = rng.uniform(-ub, ub, size=(hidden, hidden))
            params[f"l{layer}.b{gate}"] = np.zeros(hidden)
    cb = 1.0 / np.sqrt(hidden)
    params["out.W"] = rng.uniform(-cb, cb, size=(classes, hidden))
    params["out.b"] = np.zeros(classes)
    return params


def gru_cell(x: np.ndarray, h_prev: np.ndarray, params: dict, layer: int):
    """One GRU step.  Inputs may be (dim,) vectors or (batch, dim) arrays.

    Returns the new hidden state plus the intermediates needed by the
    backward pass.
    """
    p = lambda name: params[f"l{layer}.{name}"]
    if x.shape[-1] != p("Wz").shape[1] or h_prev.shape[-1] != p("Uz").shape[1]:
        raise ValueError(
            f"shape mismatch: x {x.shape}, h {h_prev.shape} vs layer {layer} params"
        )
    z = sigmoid(x @ p("Wz").T + h_prev @ p("Uz").T + p("bz"))
    r = sigmoid(x @ p("Wr").T + h_prev @ p("Ur").T + p("br"))
    uh = h_prev @ p("Uc").T
    c = np.tanh(x @ p("Wc").T + r * uh + p("bc"))
    h = (1.0 - z) * h_prev + z * c
    return h, (x, h_prev, z, r, c, uh)


def _cell_backward(dh: np.ndarray, cache, params: dict, grads: dict, layer: int):
    """Backprop one GRU step; returns (dx, dh_prev) and accumulates grads."""
    x, h_prev, z, r, c, uh = cache
    p = lambda name: params[f"l{layer}.{name}"]
    g = lambda name: grads[f"l{layer}.{name}"]

    dz = dh * (c - h_prev)
    dc = dh * z
    dh_prev = dh * (1.0 - z)

    dac = dc * (1.0 - c * c)
    grads[f"l{layer}.Wc"] += dac.T @ x
    grads[f"l{layer}.bc"] += dac.sum(axis=0)
    dr = dac * uh
    duh = dac * r
    grads[f"l{layer}.Uc"] += duh.T @ h_prev
    dh_prev = dh_prev + duh @ p("Uc")
    dx = dac @ p("Wc")

    daz = dz * z * (1.0 - z)
    grads[f"l{layer}.Wz"] += daz.T @ x
    grads[f"l{layer}.Uz"] += daz.T @ h_prev
    grads[f"l{layer}.bz"] += daz.sum(axis=0)
    dx += daz @ p("Wz")
    dh_prev = dh_prev + daz @ p("Uz")

    dar = dr * r * (1.0 - r)
    grads[f"l{layer}.Wr"] += dar.T @ x
    grads[f"l{layer}.Ur"] += dar.T @ h_prev
    grads[f"l{layer}.br"] += dar.sum(axis=0)
    dx += dar @ p("Wr")
    dh_prev = dh_prev + dar @ p("Ur")
    return dx, dh_prev


class GruPredictor:
    """Two stacked GRU layers, inter-layer dropout, linear classifier."""

    def __init__(self, input_dim: int, hidden: int = 64, layers: int = 2,
                 classes: int = 2, dropout: float = 0.3, seed: int = 0,
                 params: dict | None = None):
        if layers < 1:
            raise ValueError("needs at least one recurrent layer")
        self.input_dim = input_dim
        self.hidden = hidden
        self.layers = layers
        self.classes = classes
        self.dropout = dropout
        self.params = params if params is not None else init_params(
            input_dim, hidden, layers, classes, seed)

    def _run(self, x: np.ndarray, train: bool, rng: np.random.Generator | None):
        """Forward pass over a (batch, T, input_dim) array with caches."""
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ValueError(f"expected (batch, steps, {self.input_dim}), got {x.shape}")
        batch, steps, _ = x.shape
        caches = [[] for _ in range(self.layers)]
        masks = []
        layer_input = x
        for layer in range(self.layers):
            h = np.zeros((batch, self.hidden))
            outputs = np.empty((batch, steps, self.hidden))
            for t in range(steps):
                h, cache = gru_cell(layer_input[:, t, :], h, self.params, layer)
                caches[layer].append(cache)
                outputs[:, t, :] = h
            if layer < self.layers - 1:
                if train and self.dropout > 0.0:
                    if rng is None:
                        raise ValueError("training forward pass needs an rng for dropout")
                    keep = 1.0 - self.dropout
                    mask = (rng.random(outputs.shape) < keep) / keep
                    outputs = outputs * mask
                    masks.append(mask)
                else:
                    masks.append(None)
            layer_input = outputs
        logits = layer_input[:, -1, :] @ self.params["out.W"].T + self.params["out.b"]
        return logits, layer_input[:, -1, :], caches, masks

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        """Class probabilities (batch, 2); single sequences are promoted."""
        single = x.ndim == 2
        if single:
            x = x[None, ...]
        logits, _, _, _ = self._run(x, train, rng)
        probs = softmax(logits)
        return probs[0] if single else probs

    def predict(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Argmax class per sample, evaluated in eval mode."""
        out = []
        for start in range(0, len(x), batch_size):
            probs = self.forward(x[start:start + batch_size])
            out.append(np.argmax(probs, axis=1))
        return np.concatenate(out) if out else np.empty(0, dtype=int)

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, train: bool = False,
                       rng: np.random.Generator | None = None):
        """Mean cross-entropy and gradients for every parameter."""
        if len(x) == 0:
            raise DataError("empty batch")
        logits, last_hidden, caches, masks = self._run(x, train, rng)
        batch = len(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-log_probs[np.arange(batch), y].mean())

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dlogits = softmax(logits)
        dlogits[np.arange(batch), y] -= 1.0
        dlogits /= batch
        grads["out.W"] += dlogits.T @ last_hidden
        grads["out.b"] += dlogits.sum(axis=0)

        steps = x.shape[1]
        top_dh = dlogits @ self.params["out.W"]
        dinput = None
        for layer in reversed(range(self.layers)):
            dh = top_dh if layer == self.layers - 1 else np.zeros((batch, self.hidden))
            dxs = np.empty((batch, steps, caches[layer][0][0].shape[-1]))
            for t in reversed(range(steps)):
                if layer < self.layers - 1:
                    extra = dinput[:, t, :]
                    if masks[layer] is not None:
                        extra = extra * masks[layer][:, t, :]
                    dh = dh + extra
                dx, dh = _cell_backward(dh, caches[layer][t], self.params, grads, layer)
                dxs[:, t, :] = dx
                # dh now carries the gradient flowing to step t-1
            dinput = dxs
        return loss, grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    for key, p in params.items():
        g = grads[key]
        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        m_hat = state.m[key] / (1.0 - beta1**t)
        v_hat = state.v[key] / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: dict[str, np.ndarray]          # best-validation parameters
    final_params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_top1: float = 0.0


def train_model(
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    cfg: TrainConfig,
) -> TrainResult:
    """Seeded minibatch training; keeps the best-validation checkpoint.

    Raises NumericError when the loss goes non-finite.
    """
    if len(train_x) == 0:
        raise DataError("empty training dataset")
    if len(val_x) == 0:
        raise DataError("empty validation dataset")
    model = GruPredictor(input_dim=train_x.shape[2], hidden=cfg.hidden,
                         layers=cfg.layers, dropout=cfg.dropout, seed=cfg.seed)
    state = AdamState.for_params(model.params)
    rng = np.random.default_rng([cfg.seed, 23])

    result = TrainResult(params=copy.deepcopy(model.params),
                         final_params=model.params, best_val_top1=-1.0)
    n = len(train_x)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(train_x[idx], train_y[idx],
                                               train=True, rng=rng)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            adam_step(model.params, grads, state, cfg.learning_rate)
            losses.append(loss)
        val_pred = model.predict(val_x)
        val_top1 = float(np.mean(val_pred == val_y))
        val_loss = _eval_loss(model, val_x, val_y)
        train_pred = model.predict(train_x)
        row = {
            "epoch": epoch + 1,
            "train_loss": float(np.mean(losses)),
            "train_top1": float(np.mean(train_pred == train_y)),
            "val_loss": val_loss,
            "val_top1": val_top1,
        }
        result.history.append(row)
        if val_top1 > result.best_val_top1:
            result.best_val_top1 = val_top1
            result.best_epoch = epoch + 1
            result.params = copy.deepcopy(model.params)
    result.final_params = model.params
    return result


def _eval_loss(model: GruPredictor, x: np.ndarray, y: np.ndarray,
               batch_size: int = 512) -> float:
    total, count = 0.0, 0
    for start in range(0, len(x), batch_size):
        xb, yb = x[start:start + batch_size], y[start:start + batch_size]
        loss, _ = model.loss_and_grads(xb, yb, train=False)
        total += loss * len(xb)
        count += len(xb)
    return total / count


# ---------------------------------------------------------------------------
# Checkpoint format (versioned binary)
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"BSCK"
_CKPT_VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict) -> None:
    """Header JSON (shapes, embedding seed, config echo) + float64 LE arrays."""
    names = sorted(params)
    header = {
        "meta": meta,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IQ", _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise DataError(f"not a checkpoint file: {path}")
        version, header_len = struct.unpack("<IQ", fh.read(12))
        if version != _CKPT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode())
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return params, header["meta"]


def model_from_checkpoint(path) -> tuple[GruPredictor, dict]:
    params, meta = load_checkpoint(path)
    model = GruPredictor(
        input_dim=meta["input_dim"], hidden=meta["hidden"],
        layers=meta["layers"], classes=meta.get("classes", 2),
        dropout=meta.get("dropout", 0.0), params=params,
    )
    return model, meta
