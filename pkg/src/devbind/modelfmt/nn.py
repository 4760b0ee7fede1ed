"""Dense networks: plaintext and encrypted containers, inference, training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..chaos import SecretKey
from ..cipher import CipherConfig, LayerCiphertext, ciphertext_as_weights, decrypt_layer, encrypt_layer
from ..errors import ParameterError
from .data import Dataset

ACTIVATIONS = ("none", "relu", "softmax")
FORMAT_VERSION = 1


class KeyRequiredError(ParameterError):
    """An encrypted model was used without a key."""


@dataclass
class Layer:
    name: str
    weight: np.ndarray  # (L_j, L_{j-1})
    bias: np.ndarray  # (L_j,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ParameterError(f"layer {self.name!r}: weight {self.weight.shape} / bias {self.bias.shape}")

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class ModelWeights:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.weight.shape[1] != prev.weight.shape[0]:
                raise ParameterError(f"layer {cur.name!r} expects {cur.weight.shape[1]} inputs, "
                                     f"{prev.name!r} gives {prev.weight.shape[0]}")
        for layer in self.layers:
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise ParameterError(f"layer {layer.name!r} has non-finite values")

    def __len__(self):
        return len(self.layers)

    @property
    def input_width(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.input_width] + [l.weight.shape[0] for l in self.layers]

    def __eq__(self, other):
        if not isinstance(other, ModelWeights) or len(self) != len(other):
            return False
        return all(a.name == b.name and a.activation == b.activation
                   and np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
                   for a, b in zip(self.layers, other.layers))


@dataclass
class EncryptedLayer:
    name: str
    activation: str
    weight: object  # LayerCiphertext or plain ndarray
    bias: object

    @property
    def weight_encrypted(self) -> bool:
        return isinstance(self.weight, LayerCiphertext)

    @property
    def bias_encrypted(self) -> bool:
        return isinstance(self.bias, LayerCiphertext)

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class EncryptedModel:
    layers: list
    config: CipherConfig
    challenge_id: bytes = bytes(16)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.challenge_id) != 16:
            raise ParameterError("challenge id must be 16 bytes")

    def __len__(self):
        return len(self.layers)

    @property
    def input_width(self) -> int:
        return self.layers[0].shape[1]


def encrypt_model(model: ModelWeights, key: SecretKey, cfg: CipherConfig, layers=None,
                  challenge_id: bytes = bytes(16)) -> EncryptedModel:
    """Encrypt the weight matrices listed in ``layers`` (default: all).

    Biases are encrypted only with ``cfg.encrypt_biases``.
    """
    if len(model) == 0:
        raise ParameterError("model has no layers")
    chosen = set(range(len(model))) if layers is None else set(layers)
    if not chosen <= set(range(len(model))):
        raise ParameterError(f"layer indices {sorted(chosen)} out of range")
    out = []
    for j, layer in enumerate(model.layers):
        w, b = layer.weight, layer.bias
        if j in chosen:
            w = encrypt_layer(layer.weight, key, cfg, j, "weight")
            if cfg.encrypt_biases:
                b = encrypt_layer(layer.bias, key, cfg, j, "bias")
        out.append(EncryptedLayer(layer.name, layer.activation, w, b.copy() if isinstance(b, np.ndarray) else b))
    return EncryptedModel(out, cfg, bytes(challenge_id))


def _open(part, key, cfg) -> np.ndarray:
    if isinstance(part, LayerCiphertext):
        if key is None:
            raise KeyRequiredError("encrypted layer needs a key")
        return np.asarray(decrypt_layer(part, key, cfg), dtype=np.float32)
    return part


def decrypt_model(enc: EncryptedModel, key: SecretKey) -> ModelWeights:
    return ModelWeights([Layer(l.name, _open(l.weight, key, enc.config), _open(l.bias, key, enc.config),
                               l.activation) for l in enc.layers])


def keyless_view(enc: EncryptedModel) -> ModelWeights:
    """The model as loaded by someone holding only the ciphertext."""
    def view(part):
        return ciphertext_as_weights(part) if isinstance(part, LayerCiphertext) else part
    return ModelWeights([Layer(l.name, view(l.weight), view(l.bias), l.activation) for l in enc.layers])


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softmax":
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    return z


def _iter_layers(model, key):
    """Yield ``(weight, bias, activation)``; encrypted layers are decrypted on demand."""
    if isinstance(model, EncryptedModel):
        for l in model.layers:
            yield _open(l.weight, key, model.config), _open(l.bias, key, model.config), l.activation
    else:
        for l in model.layers:
            yield l.weight, l.bias, l.activation


def forward(model, x, key: SecretKey | None = None) -> np.ndarray:
    """Run a plain or encrypted model on one input vector or a batch of rows.

    Encrypted layers are decrypted one at a time, immediately before use,
    and the plaintext is dropped before the next layer is opened.
    """
    if len(model) == 0:
        raise ParameterError("model has no layers")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_width:
        raise ParameterError(f"input width {x.shape[-1]} != model input width {model.input_width}")
    if isinstance(model, EncryptedModel) and key is None and any(
            l.weight_encrypted or l.bias_encrypted for l in model.layers):
        raise KeyRequiredError("encrypted model needs a key; use keyless_view() for the attacker view")
    with np.errstate(over="ignore", invalid="ignore"):
        for w, b, act in _iter_layers(model, key):
            x = _activate(x @ w.T.astype(np.float64) + b, act)
            del w, b
    return x


@dataclass
class EvalReport:
    accuracy: float
    per_class_total: np.ndarray
    per_class_correct: np.ndarray
    config: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"accuracy={self.accuracy:.6f}", f"samples={int(self.per_class_total.sum())}"]
        for c, (t, k) in enumerate(zip(self.per_class_total, self.per_class_correct)):
            lines.append(f"class{c}={int(k)}/{int(t)}")
        lines.extend(f"{k}={v}" for k, v in self.config.items())
        return "\n".join(lines) + "\n"


def predict(model, x, key: SecretKey | None = None) -> np.ndarray:
    out = forward(model, x, key)
    # NaN logits (overflowing ciphertext weights) never win the argmax
    out = np.where(np.isnan(out), -np.inf, out)
    return np.argmax(out, axis=-1)


def evaluate(model, ds: Dataset, key: SecretKey | None = None, **config) -> EvalReport:
    if len(ds) == 0:
        raise ParameterError("cannot evaluate on an empty dataset")
    if ds.width != model.input_width:
        raise ParameterError(f"dataset width {ds.width} != model input width {model.input_width}")
    pred = predict(model, ds.features, key)
    total = np.bincount(ds.labels, minlength=ds.classes)
    correct = np.bincount(ds.labels[pred == ds.labels], minlength=ds.classes)
    return EvalReport(float(correct.sum() / len(ds)), total, correct, dict(config))


# -- training ----------------------------------------------------------------

def init_params(sizes, rng: np.random.Generator):
    """He-normal weights, zero biases, float64."""
    return [(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in)), np.zeros(n_out))
            for n_in, n_out in zip(sizes[:-1], sizes[1:])]


def params_from_model(model: ModelWeights):
    return [(l.weight.astype(np.float64), l.bias.astype(np.float64)) for l in model.layers]


def model_from_params(params) -> ModelWeights:
    n = len(params)
    return ModelWeights([Layer(f"dense{j + 1}", w, b, "softmax" if j == n - 1 else "relu")
                         for j, (w, b) in enumerate(params)])


def loss_and_grads(params, x, y):
    """Mean cross-entropy of a ReLU MLP with softmax output, and its gradients."""
    acts = [np.asarray(x, dtype=np.float64)]
    pre = []
    for j, (w, b) in enumerate(params):
        z = acts[-1] @ w.T + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if j < len(params) - 1 else z)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(y)
    loss = -logp[np.arange(n), y].mean()
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for j in range(len(params) - 1, -1, -1):
        w, _ = params[j]
        grads[j] = (delta.T @ acts[j], delta.sum(axis=0))
        if j:
            delta = (delta @ w) * (pre[j - 1] > 0)
    return loss, grads


def sgd(params, ds: Dataset, epochs: int, lr: float, rng: np.random.Generator,
        batch_size: int = 32, clip: float = 5.0):
    """Plain minibatch SGD with global-norm gradient clipping."""
    params = [(w.copy(), b.copy()) for w, b in params]
    x, y = ds.features.astype(np.float64), ds.labels
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            rows = order[start:start + batch_size]
            _, grads = loss_and_grads(params, x[rows], y[rows])
            norm = np.sqrt(sum((gw**2).sum() + (gb**2).sum() for gw, gb in grads))
            scale = lr * (min(1.0, clip / norm) if norm > 0 else 1.0)
            params = [(w - scale * gw, b - scale * gb) for (w, b), (gw, gb) in zip(params, grads)]
    return params


def train_tiny(ds: Dataset, arch, epochs: int = 30, lr: float = 0.05, seed: int = 0,
               batch_size: int = 32) -> ModelWeights:
    """Train a ReLU MLP with softmax output by minibatch SGD.

    ``arch`` lists every layer width, input and class count included, e.g.
    ``[64, 32, 32, 10]``.
    """
    sizes = [int(s) for s in arch]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ParameterError(f"bad architecture {sizes}")
    if sizes[0] != ds.width or sizes[-1] != ds.classes:
        raise ParameterError(f"architecture {sizes} does not chain with dataset "
                             f"width {ds.width} and {ds.classes} classes")
    rng = np.random.default_rng(seed)
    params = sgd(init_params(sizes, rng), ds, epochs, lr, rng, batch_size)
    return model_from_params(params)


def finetune_attack(enc: EncryptedModel, fraction: float, ds: Dataset, epochs: int = 20,
                    seed: int = 0, test: Dataset | None = None, lr: float = 0.05,
                    batch_size: int = 16) -> EvalReport:
    """Fine-tune the ciphertext weights (no key) on a fraction of ``ds``.

    Returns the post-attack accuracy on ``test`` (``ds`` when omitted).
    """
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
    part = ds.sample_fraction(fraction, seed)
    rng = np.random.default_rng(seed)
    params = sgd(params_from_model(keyless_view(enc)), part, epochs, lr, rng, batch_size)
    return evaluate(model_from_params(params), test if test is not None else ds,
                    fraction=fraction, epochs=epochs, rows=len(part))
