"""Small differentiable classifiers with hand-written backprop.

Three encoders are available:

* ``linear`` - a single dense layer ``N -> C``
* ``mlp``    - dense ``N -> 32``, ReLU, dense ``32 -> C``
* ``cnn``    - conv(1->8, k=7) ReLU, conv(8->16, k=7) ReLU, global average
  pooling, dense ``16 -> C``; convolutions use zero "same" padding

A model also carries its defense layer. ``gaussian`` smooths every input
(training and inference) so gradients flow through the filter; ``noise``
adds fresh white noise to training batches only.
"""

from dataclasses import dataclass, field
import io
import json

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError, TrainingDivergedError
from .seeding import derive_seed, rng_for
from .spectral import gaussian_matrix

ARCHITECTURES = ("linear", "mlp", "cnn")
DEFENSES = ("none", "noise", "gaussian")
CHECKPOINT_VERSION = 1

MLP_WIDTH = 32
CNN_KERNEL = 7
CNN_CHANNELS = (8, 16)


@dataclass(frozen=True)
class Defense:
    mode: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.mode not in DEFENSES:
            raise ConfigError(f"unknown defense {self.mode!r}; choose from {DEFENSES}")
        if self.mode == "none" and self.sigma != 0.0:
            object.__setattr__(self, "sigma", 0.0)
        if self.mode == "gaussian" and not self.sigma > 0:
            raise ConfigError("gaussian defense needs sigma > 0")
        if self.mode == "noise" and not self.sigma >= 0:
            raise ConfigError("noise defense needs sigma >= 0")

    def describe(self):
        return self.mode if self.mode == "none" else f"{self.mode}({self.sigma!r})"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-2
    optimizer: str = "sgd"
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (self.lr >= 0 and np.isfinite(self.lr)):
            raise ConfigError("learning rate must be finite and >= 0")
        if self.optimizer not in ("sgd", "momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(arch, n, num_classes, seed=0, zero=False):
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    rng = rng_for(seed, "init")
    if arch == "linear":
        shapes = {"W": ((num_classes, n), n), "b": ((num_classes,), n)}
    elif arch == "mlp":
        shapes = {
            "W1": ((MLP_WIDTH, n), n),
            "b1": ((MLP_WIDTH,), n),
            "W2": ((num_classes, MLP_WIDTH), MLP_WIDTH),
            "b2": ((num_classes,), MLP_WIDTH),
        }
    else:
        c1, c2 = CNN_CHANNELS
        k = CNN_KERNEL
        shapes = {
            "K1": ((c1, 1, k), k),
            "c1": ((c1,), k),
            "K2": ((c2, c1, k), c1 * k),
            "c2": ((c2,), c1 * k),
            "W": ((num_classes, c2), c2),
            "b": ((num_classes,), c2),
        }
    params = {}
    for name, (shape, fan_in) in shapes.items():
        params[name] = np.zeros(shape) if zero else _uniform(rng, shape, fan_in)
    return params


def _conv_forward(x, kernel, bias):
    # x: (B, Cin, N); kernel: (Cout, Cin, K) -> (B, Cout, N)
    k = kernel.shape[-1]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, k - 1 - pad)))
    patches = sliding_window_view(xp, k, axis=2)  # (B, Cin, N, K)
    b, cin, n, _ = patches.shape
    cols = patches.transpose(0, 2, 1, 3).reshape(b, n, cin * k)
    out = cols @ kernel.reshape(kernel.shape[0], -1).T + bias
    return out.transpose(0, 2, 1), cols


def _conv_backward(dout, cols, kernel, in_shape):
    cout, cin, k = kernel.shape
    b, _, n = in_shape
    dout_t = dout.transpose(0, 2, 1)  # (B, N, Cout)
    dkernel = np.einsum("bno,bnk->ok", dout_t, cols).reshape(kernel.shape)
    dbias = dout_t.sum(axis=(0, 1))
    dcols = (dout_t @ kernel.reshape(cout, -1)).reshape(b, n, cin, k)
    pad = k // 2
    dxp = np.zeros((b, cin, n + k - 1))
    for j in range(k):
        dxp[:, :, j : j + n] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, pad : pad + n], dkernel, dbias


def _encode(arch, p, X):
    """Logits for a batch ``X`` of shape (B, N), plus a cache for backprop."""
    if arch == "linear":
        return X @ p["W"].T + p["b"], (X,)
    if arch == "mlp":
        h = X @ p["W1"].T + p["b1"]
        a = np.maximum(h, 0.0)
        return a @ p["W2"].T + p["b2"], (X, h, a)
    x3 = X[:, None, :]
    h1, cols1 = _conv_forward(x3, p["K1"], p["c1"])
    a1 = np.maximum(h1, 0.0)
    h2, cols2 = _conv_forward(a1, p["K2"], p["c2"])
    a2 = np.maximum(h2, 0.0)
    pooled = a2.mean(axis=2)
    return pooled @ p["W"].T + p["b"], (x3, h1, cols1, a1, h2, cols2, pooled)


def _decode_backward(arch, p, cache, dZ):
    """Reverse pass: returns (param grads, input grads) for upstream ``dZ``."""
    if arch == "linear":
        (X,) = cache
        return {"W": dZ.T @ X, "b": dZ.sum(axis=0)}, dZ @ p["W"]
    if arch == "mlp":
        X, h, a = cache
        da = dZ @ p["W2"]
        dh = da * (h > 0)
        grads = {
            "W1": dh.T @ X,
            "b1": dh.sum(axis=0),
            "W2": dZ.T @ a,
            "b2": dZ.sum(axis=0),
        }
        return grads, dh @ p["W1"]
    x3, h1, cols1, a1, h2, cols2, pooled = cache
    n = x3.shape[2]
    dpooled = dZ @ p["W"]
    da2 = np.repeat(dpooled[:, :, None], n, axis=2) / n
    dh2 = da2 * (h2 > 0)
    da1, dK2, dc2 = _conv_backward(dh2, cols2, p["K2"], a1.shape)
    dh1 = da1 * (h1 > 0)
    dx3, dK1, dc1 = _conv_backward(dh1, cols1, p["K1"], x3.shape)
    grads = {"K1": dK1, "c1": dc1, "K2": dK2, "c2": dc2, "W": dZ.T @ pooled, "b": dZ.sum(axis=0)}
    return grads, dx3[:, 0, :]


@dataclass
class ClassifierModel:
    arch: str
    n: int
    num_classes: int
    params: dict
    defense: Defense = field(default_factory=Defense)

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")

    @classmethod
    def create(cls, arch, n, num_classes, defense=None, seed=0, zero=False):
        return cls(arch, n, num_classes, init_params(arch, n, num_classes, seed, zero), defense or Defense())

    def copy(self):
        return ClassifierModel(
            self.arch, self.n, self.num_classes, {k: v.copy() for k, v in self.params.items()}, self.defense
        )

    def bare(self):
        """Same parameters without a defense layer."""
        return ClassifierModel(self.arch, self.n, self.num_classes, self.params, Defense())

    def _filter(self):
        if self.defense.mode == "gaussian":
            return gaussian_matrix(self.n, self.defense.sigma)
        return None

    def logits_batch(self, X, with_cache=False):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n:
            raise ShapeError(f"expected inputs of length {self.n}, got shape {X.shape}")
        M = self._filter()
        if M is not None:
            X = X @ M.T
        Z, cache = _encode(self.arch, self.params, X)
        return (Z, cache) if with_cache else Z

    def backward(self, cache, dZ):
        grads, dX = _decode_backward(self.arch, self.params, cache, dZ)
        M = self._filter()
        if M is not None:
            dX = dX @ M
        return grads, dX

    def predict_batch(self, X):
        return np.argmax(self.logits_batch(X), axis=1)


def _check_input(m, x):
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.ndim != 1 or len(x) != m.n:
        raise ShapeError(f"model expects length {m.n}, got shape {x.shape}")
    return x


def forward(m, x):
    return m.logits_batch(_check_input(m, x)[None, :])[0]


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def predict_proba(m, x):
    return softmax(forward(m, x))


def predict(m, x):
    return int(np.argmax(forward(m, x)))


def input_gradient(m, x, logit_loss):
    """Gradient of ``logit_loss(forward(m, x))`` with respect to ``x``.

    ``logit_loss`` maps a logit vector to ``(value, d value / d logits)``.
    The reverse pass runs through the defense filter when there is one.
    Returns ``(value, gradient)``.
    """
    x = _check_input(m, x)
    Z, cache = m.logits_batch(x[None, :], with_cache=True)
    value, dz = logit_loss(Z[0])
    _, dX = m.backward(cache, np.asarray(dz, dtype=np.float64)[None, :])
    return value, dX[0]


def _cross_entropy(m, X, y):
    logp = log_softmax(m.logits_batch(X))
    return float(-logp[np.arange(len(y)), y].mean())


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)


def train(m, data, cfg=TrainConfig()):
    """Mini-batch gradient descent on mean cross-entropy.

    Returns ``(trained_model, history)``; the input model is not modified.
    History entries are full-train-set loss and accuracy after each epoch.
    """
    X, y = data.arrays("train")
    if X.shape[1] != m.n:
        raise ShapeError(f"model length {m.n} does not match dataset length {X.shape[1]}")
    if len(np.unique(y)) < 2:
        raise ConfigError("training data contains a single class")
    if y.max() >= m.num_classes:
        raise ConfigError("dataset labels exceed the model's class count")
    model = m.copy()
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    history = TrainHistory()
    count = len(y)
    batches_per_epoch = (count + cfg.batch_size - 1) // cfg.batch_size
    for epoch in range(cfg.epochs):
        order = rng_for(cfg.seed, "shuffle", epoch).permutation(count)
        for b in range(batches_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            xb, yb = X[idx], y[idx]
            if model.defense.mode == "noise" and model.defense.sigma > 0:
                noise_seed = derive_seed(cfg.seed, "train_noise", epoch * batches_per_epoch + b)
                xb = xb + model.defense.sigma * np.random.default_rng(noise_seed).standard_normal(xb.shape)
            Z, cache = model.logits_batch(xb, with_cache=True)
            dZ = softmax(Z)
            dZ[np.arange(len(yb)), yb] -= 1.0
            dZ /= len(yb)
            grads, _ = model.backward(cache, dZ)
            for name, g in grads.items():
                if cfg.optimizer == "momentum":
                    velocity[name] = cfg.momentum * velocity[name] + g
                    g = velocity[name]
                model.params[name] -= cfg.lr * g
        loss = _cross_entropy(model, X, y)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(v)) for v in model.params.values()):
            raise TrainingDivergedError(epoch, loss)
        history.loss.append(loss)
        history.accuracy.append(float(np.mean(model.predict_batch(X) == y)))
    return model, history


def accuracy(m, series):
    X = np.stack([ts.values for ts in series])
    y = np.array([ts.label for ts in series])
    return float(np.mean(m.predict_batch(X) == y))


def save_checkpoint(m, path, extra=None):
    """Write an ``.npz`` container: JSON metadata plus little-endian float64 arrays."""
    meta = {
        "format": "corrattack-checkpoint",
        "version": CHECKPOINT_VERSION,
        "arch": m.arch,
        "n": m.n,
        "num_classes": m.num_classes,
        "defense": {"mode": m.defense.mode, "sigma": m.defense.sigma},
        "params": sorted(m.params),
        "endianness": "little",
        "extra": extra or {},
    }
    arrays = {f"param_{k}": np.asarray(v, dtype="<f8") for k, v in m.params.items()}
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("format") != "corrattack-checkpoint":
            raise ConfigError(f"{path} is not a corrattack checkpoint")
        if meta["version"] != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {meta['version']}")
        params = {k: z[f"param_{k}"].astype(np.float64) for k in meta["params"]}
    defense = Defense(meta["defense"]["mode"], meta["defense"]["sigma"])
    return ClassifierModel(meta["arch"], meta["n"], meta["num_classes"], params, defense)
