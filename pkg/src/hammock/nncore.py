"""A small fully connected network trained with backprop and AdaDelta.

One class covers the three model families compared in the experiments:

* Hammock: quantile-binned, one-hot inputs -> one hidden layer -> output
* LR-NN: standardized raw inputs -> output (multinomial logistic regression)
* NN-1L: standardized raw inputs -> one hidden layer -> output

For one-hot inputs the first layer never materializes the one-hot matrix; it
gathers and sums the weight rows of the active bins (see ``kernels``).
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .binning import BinningSpec, fit_binning, onehot_rows, quantize
from .errors import InputError, NumericOverflowError, ParseError

FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "identity")
OUTPUT_LINKS = ("softmax", "sigmoid", "identity")


@dataclass(frozen=True, eq=False)
class RawEncoding:
    """Per-feature standardization ``(x - mean) / scale`` for raw inputs."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "RawEncoding":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    @classmethod
    def identity(cls, num_features: int) -> "RawEncoding":
        return cls(np.zeros(num_features), np.ones(num_features))

    @property
    def num_features(self) -> int:
        return len(self.mean)

    @property
    def width(self) -> int:
        return len(self.mean)

    def to_dict(self) -> dict:
        return {"kind": "raw", "mean": self.mean.tolist(), "scale": self.scale.tolist()}


@dataclass
class Dense:
    weights: np.ndarray  # (in, out)
    bias: np.ndarray
    activation: str = "identity"

    def to_dict(self) -> dict:
        return {"rows": int(self.weights.shape[0]), "cols": int(self.weights.shape[1]),
                "weights": self.weights.ravel().tolist(), "bias": self.bias.tolist(),
                "activation": self.activation}


@dataclass
class MlpModel:
    encoding: RawEncoding | BinningSpec
    layers: list
    output_link: str = "softmax"
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def onehot(self) -> bool:
        return isinstance(self.encoding, BinningSpec)

    @property
    def num_features(self) -> int:
        return self.encoding.num_features

    @property
    def input_width(self) -> int:
        if self.onehot:
            return self.encoding.total_onehot_width
        return self.encoding.width

    @property
    def num_outputs(self) -> int:
        return self.layers[-1].weights.shape[1]

    @property
    def num_classes(self) -> int:
        return 2 if self.output_link == "sigmoid" else self.num_outputs

    def params(self) -> list:
        """Flat parameter list ``[W0, b0, W1, b1, ...]``; arrays are live views."""
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def copy(self) -> "MlpModel":
        layers = [Dense(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return MlpModel(self.encoding, layers, self.output_link, self.seed, dict(self.metadata))

    def encode(self, X) -> np.ndarray:
        """Dense standardized matrix for raw models, one-hot row indices otherwise."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise InputError(f"model expects {self.num_features} features, got shape {X.shape}")
        if not np.isfinite(X).all():
            raise InputError("non-finite feature value")
        if self.onehot:
            return onehot_rows(quantize(X, self.encoding), self.encoding)
        return (X - self.encoding.mean) / self.encoding.scale

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "encoding": self.encoding.to_dict(),
                "layers": [l.to_dict() for l in self.layers],
                "output_link": self.output_link,
                "metadata": {"seed": self.seed, **self.metadata}}


def _check_chain(layers, input_width):
    width = input_width
    for i, layer in enumerate(layers):
        if layer.weights.ndim != 2 or layer.weights.shape[0] != width:
            raise InputError(f"layer {i} expects {layer.weights.shape[0]} inputs, gets {width}")
        if layer.bias.shape != (layer.weights.shape[1],):
            raise InputError(f"layer {i} bias shape {layer.bias.shape} does not match")
        if layer.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {layer.activation!r}")
        width = layer.weights.shape[1]


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------


def init_model(encoding, hidden: list, num_outputs: int, output_link="softmax",
               seed: int = 0, activation="relu") -> MlpModel:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    if output_link not in OUTPUT_LINKS:
        raise InputError(f"unknown output link {output_link!r}")
    if activation not in ACTIVATIONS:
        raise InputError(f"unknown activation {activation!r}")
    sizes = [encoding.total_onehot_width if isinstance(encoding, BinningSpec)
             else encoding.width] + list(hidden) + [num_outputs]
    if min(sizes) < 1:
        raise InputError(f"layer sizes must be positive, got {sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        act = activation if i < len(sizes) - 2 else "identity"
        layers.append(Dense(W, np.zeros(fan_out), act))
    return MlpModel(encoding, layers, output_link, seed)


def _output_spec(num_classes):
    if num_classes < 2:
        raise InputError(f"need at least 2 classes, got {num_classes}")
    return (1, "sigmoid") if num_classes == 2 else (num_classes, "softmax")


def hammock(binning: BinningSpec, num_classes: int, hidden: int = 1000, seed: int = 0,
            activation="relu") -> MlpModel:
    n_out, link = _output_spec(num_classes)
    return init_model(binning, [hidden], n_out, link, seed, activation)


def lr_nn(encoding: RawEncoding, num_classes: int, seed: int = 0) -> MlpModel:
    n_out, link = _output_spec(num_classes)
    return init_model(encoding, [], n_out, link, seed)


def nn_1l(encoding: RawEncoding, num_classes: int, hidden: int = 1000, seed: int = 0,
          activation="relu") -> MlpModel:
    n_out, link = _output_spec(num_classes)
    return init_model(encoding, [hidden], n_out, link, seed, activation)


ARCHITECTURES = ("hammock", "lr-nn", "nn-1l")


def build_model(arch: str, X_train, num_classes: int, hidden: int = 1000, bins: int = 50,
                seed: int = 0, standardize: bool = True) -> MlpModel:
    """Fit the input encoding on training features and initialize ``arch``."""
    if arch == "hammock":
        model = hammock(fit_binning(X_train, bins), num_classes, hidden, seed)
    elif arch in ("lr-nn", "nn-1l"):
        X_train = np.asarray(X_train, dtype=np.float64)
        enc = RawEncoding.fit(X_train) if standardize else RawEncoding.identity(X_train.shape[1])
        model = (lr_nn(enc, num_classes, seed) if arch == "lr-nn"
                 else nn_1l(enc, num_classes, hidden, seed))
    else:
        raise InputError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    model.metadata["arch"] = arch
    return model


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------


def _first_layer(model, E, layer):
    if model.onehot:
        return kernels.onehot_matmul(E, layer.weights, layer.bias)
    return E @ layer.weights + layer.bias


def _forward_encoded(model, E, rng=None, dropout=0.0):
    """Logits plus the cache needed for backprop.

    Inverted dropout is applied to hidden-layer outputs when ``rng`` is given.
    """
    if rng is not None and not 0.0 <= dropout < 1.0:
        raise InputError(f"dropout rate must be in [0, 1), got {dropout}")
    inputs, pre, masks = [E], [], []
    a = E
    last = len(model.layers) - 1
    with np.errstate(over="ignore", invalid="ignore"):
        logits = _layers_forward(model, a, last, inputs, pre, masks, rng, dropout)
    if not np.isfinite(logits).all():
        raise NumericOverflowError("non-finite activations in forward pass")
    return logits, (inputs, pre, masks)


def _layers_forward(model, a, last, inputs, pre, masks, rng, dropout):
    for i, layer in enumerate(model.layers):
        z = _first_layer(model, a, layer) if i == 0 else a @ layer.weights + layer.bias
        pre.append(z)
        if i == last:
            break
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        if rng is not None and dropout > 0.0:
            mask = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
            a = a * mask
        else:
            mask = None
        masks.append(mask)
        inputs.append(a)
    return pre[-1]


def forward(model: MlpModel, x, mode="infer", rng=None, dropout=0.0):
    """Logits for ``x``.

    In ``"train"`` mode a seeded ``numpy.random.Generator`` supplies dropout
    masks and the backprop cache is returned as a second value.
    """
    E = model.encode(x)
    if mode == "infer":
        return _forward_encoded(model, E)[0]
    if mode != "train":
        raise InputError(f"mode must be 'train' or 'infer', got {mode!r}")
    if rng is None:
        raise InputError("train mode needs an rng for dropout masks")
    return _forward_encoded(model, E, rng, dropout)


def predict_proba(model: MlpModel, x) -> np.ndarray:
    z = forward(model, x)
    if model.output_link == "softmax":
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    if model.output_link == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z[:, 0]))
    return z[:, 0]


def _predict_from_logits(model, z):
    if model.output_link == "softmax":
        return np.argmax(z, axis=1)
    if model.output_link == "sigmoid":
        return (z[:, 0] > 0.0).astype(np.int64)  # p > 0.5
    return z[:, 0]


def predict(model: MlpModel, x) -> np.ndarray:
    return _predict_from_logits(model, forward(model, x))


def _check_labels(model, y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {y.shape}")
    if model.output_link == "identity":
        return y.astype(np.float64)
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise InputError("class labels must be integers")
        y = y.astype(np.int64)
    k = model.num_classes
    if y.size and (y.min() < 0 or y.max() >= k):
        bad = y[(y < 0) | (y >= k)][0]
        raise InputError(f"label {bad} invalid for a {k}-class model")
    return y


def _data_loss(model, z, y):
    """Mean loss and its gradient with respect to the logits."""
    n = z.shape[0]
    if model.output_link == "softmax":
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        loss = float(np.mean(lse - z[np.arange(n), y]))
        dz = np.exp(z - lse[:, None])
        dz[np.arange(n), y] -= 1.0
    elif model.output_link == "sigmoid":
        s = z[:, 0]
        loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
        p = np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))),
                     np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))
        dz = (p - y)[:, None]
    else:
        r = z[:, 0] - y
        loss = float(0.5 * np.mean(r * r))
        dz = r[:, None].copy()
    return loss, dz / n


def _loss_and_grad_encoded(model, E, y, rng=None, dropout=0.0, l1=0.0, l2=0.0):
    logits, (inputs, pre, masks) = _forward_encoded(model, E, rng, dropout)
    loss, dz = _data_loss(model, logits, y)
    grads = [None] * (2 * len(model.layers))
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if i == 0 and model.onehot:
            dW = kernels.onehot_grad(inputs[0], dz, layer.weights.shape[0])
        else:
            dW = inputs[i].T @ dz
        grads[2 * i] = dW
        grads[2 * i + 1] = dz.sum(axis=0)
        if i == 0:
            break
        da = dz @ layer.weights.T
        if masks[i - 1] is not None:
            da = da * masks[i - 1]
        if model.layers[i - 1].activation == "relu":
            da = da * (pre[i - 1] > 0.0)
        dz = da
    if l1 or l2:
        for i, layer in enumerate(model.layers):
            W = layer.weights
            if l1:
                loss += l1 * float(np.abs(W).sum())
                grads[2 * i] = grads[2 * i] + l1 * np.sign(W)
            if l2:
                loss += l2 * float((W * W).sum())
                grads[2 * i] = grads[2 * i] + 2.0 * l2 * W
    return loss, grads


def loss_and_grad(model: MlpModel, X, y, rng=None, dropout=0.0, l1=0.0, l2=0.0):
    """Mean cross-entropy (plus weight penalties) and exact parameter gradients.

    Gradients come back in ``model.params()`` order.  With ``rng`` set, one
    dropout mask is sampled and the gradient is exact for that mask.
    """
    E = model.encode(X)
    y = _check_labels(model, y, E.shape[0])
    return _loss_and_grad_encoded(model, E, y, rng, dropout, l1, l2)


# --------------------------------------------------------------------------
# AdaDelta
# --------------------------------------------------------------------------


@dataclass
class AdaDeltaState:
    avg_sq_grad: list
    avg_sq_update: list

    @classmethod
    def zeros_like(cls, params) -> "AdaDeltaState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adadelta_step(params, grads, state: AdaDeltaState, rho=0.95, eps=1e-6):
    """One AdaDelta update, applied in place; returns ``(params, state)``."""
    if not (len(params) == len(grads) == len(state.avg_sq_grad) == len(state.avg_sq_update)):
        raise InputError("params, grads and optimizer state differ in length")
    for p, g, eg, ex in zip(params, grads, state.avg_sq_grad, state.avg_sq_update):
        if not (p.shape == g.shape == eg.shape == ex.shape):
            raise InputError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
        ex *= rho
        ex += (1.0 - rho) * delta * delta
        p += delta
    return params, state


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    dropout_rate: float = 0.5
    rho: float = 0.95
    eps: float = 1e-6
    l1_weight: float = 0.0
    l2_weight: float = 0.0
    shuffle_seed: int = 0
    validation_fraction: float = 0.0
    patience: int = 20

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InputError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0.0 < self.rho < 1.0:
            raise InputError(f"rho must be in (0, 1), got {self.rho}")
        if self.eps <= 0:
            raise InputError("eps must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise InputError("batch_size and epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise InputError("validation_fraction must be in [0, 1)")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return asdict(self)


def _accuracy(model, logits, y):
    return float(np.mean(_predict_from_logits(model, logits) == y))


def train(model: MlpModel, X, y, config: TrainConfig | None = None, log=None):
    """Minibatch AdaDelta with dropout; returns the trained model and a report.

    With ``validation_fraction > 0`` a held-out slice of the training rows
    drives early stopping: training halts after ``patience`` epochs without a
    new best validation accuracy and the best weights are restored.
    Everything random flows from ``model.seed`` (init) and
    ``config.shuffle_seed`` (splits, shuffles, dropout masks).
    """
    config = config or TrainConfig()
    E = model.encode(X)
    n = E.shape[0]
    if n == 0:
        raise InputError("cannot train on an empty dataset")
    y = _check_labels(model, y, n)
    rng = np.random.default_rng(config.shuffle_seed)

    E_val = y_val = None
    if config.validation_fraction > 0:
        perm = rng.permutation(n)
        n_val = int(round(n * config.validation_fraction))
        if not 0 < n_val < n:
            raise InputError(f"validation_fraction {config.validation_fraction} leaves an "
                             f"empty split for {n} rows")
        E_val, y_val = E[perm[:n_val]], y[perm[:n_val]]
        E, y = E[perm[n_val:]], y[perm[n_val:]]
        n = E.shape[0]

    params = model.params()
    state = AdaDeltaState.zeros_like(params)
    report = TrainReport()
    best_val, best_params, since_best = -1.0, None, 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = _loss_and_grad_encoded(
                    model, E[idx], y[idx], rng, config.dropout_rate,
                    config.l1_weight, config.l2_weight)
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise NumericOverflowError(f"non-finite loss or gradient in epoch {epoch}")
            with np.errstate(over="ignore", invalid="ignore"):
                adadelta_step(params, grads, state, config.rho, config.eps)
            if not all(np.isfinite(a).all() for a in state.avg_sq_grad):
                raise NumericOverflowError(f"non-finite optimizer state in epoch {epoch}")
            total += loss * len(idx)
        logits = _forward_encoded(model, E)[0]
        report.train_loss.append(total / n)
        report.train_accuracy.append(_accuracy(model, logits, y))
        if E_val is not None:
            acc = _accuracy(model, _forward_encoded(model, E_val)[0], y_val)
            report.val_accuracy.append(acc)
            if acc > best_val:
                best_val, since_best = acc, 0
                best_params = [p.copy() for p in params]
                report.best_epoch = epoch
            else:
                since_best += 1
        else:
            report.val_accuracy.append(float("nan"))
            report.best_epoch = epoch
        report.epoch_seconds.append(time.perf_counter() - t0)
        if log is not None:
            log(epoch, report)
        if E_val is not None and since_best >= config.patience:
            break
    if best_params is not None:
        for p, b in zip(params, best_params):
            p[...] = b
    model.metadata["train_config"] = asdict(config)
    return model, report


def evaluate(model: MlpModel, X, y):
    """Return ``(accuracy, mean_loss)``; argmax ties go to the lowest class."""
    E = model.encode(X)
    if E.shape[0] == 0:
        raise InputError("cannot evaluate on an empty dataset")
    y = _check_labels(model, y, E.shape[0])
    logits = _forward_encoded(model, E)[0]
    loss, _ = _data_loss(model, logits, y)
    if model.output_link == "identity":
        return float("nan"), loss
    return _accuracy(model, logits, y), loss


# --------------------------------------------------------------------------
# model files
# --------------------------------------------------------------------------


def model_from_dict(doc):
    """Rebuild an MlpModel, or a StepNetwork for ``"indicator"`` encodings."""
    if not isinstance(doc, dict):
        raise ParseError("model file must hold a JSON object", "$")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {doc.get('format_version')!r}",
                         "$.format_version")
    enc = doc.get("encoding")
    kind = enc.get("kind") if isinstance(enc, dict) else enc
    if kind == "indicator":
        from .netconvert import StepNetwork
        return StepNetwork.from_dict(doc)
    try:
        if kind == "raw":
            if isinstance(enc, dict):
                encoding = RawEncoding(np.array(enc["mean"], dtype=np.float64),
                                       np.array(enc["scale"], dtype=np.float64))
            else:
                n_in = int(doc["layers"][0]["rows"])
                encoding = RawEncoding.identity(n_in)
        elif kind == "quantized_onehot":
            encoding = BinningSpec.from_dict(enc)
        else:
            raise ParseError(f"unknown encoding {kind!r}", "$.encoding")
        layers = []
        for i, ld in enumerate(doc["layers"]):
            rows, cols = int(ld["rows"]), int(ld["cols"])
            W = np.array(ld["weights"], dtype=np.float64)
            if W.size != rows * cols:
                raise ParseError(f"expected {rows * cols} weights, found {W.size}",
                                 f"$.layers[{i}]")
            layers.append(Dense(W.reshape(rows, cols), np.array(ld["bias"], dtype=np.float64),
                                ld.get("activation", "identity")))
        meta = dict(doc.get("metadata", {}))
        seed = int(meta.pop("seed", 0))
        model = MlpModel(encoding, layers, doc["output_link"], seed, meta)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise ParseError(f"malformed model file: {exc!r}", "$") from None
    if model.output_link not in OUTPUT_LINKS:
        raise ParseError(f"unknown output link {model.output_link!r}", "$.output_link")
    _check_chain(model.layers, model.input_width)
    return model


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()), encoding="utf-8")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{path}: line {exc.lineno}") from None
    return model_from_dict(doc)
