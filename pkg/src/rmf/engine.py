"""Small deterministic neural-network engine.

Tensors are NHWC float64 numpy arrays. Layer kinds: conv2d (valid padding,
stride 1), maxpool2d (kernel == stride, trailing rows/cols dropped),
dropout (inverted scaling), flatten, dense. Activations: none, relu, and
softmax on the output layer only.

Every stochastic choice (weight init, batch shuffling, dropout masks) is
derived from explicit integer seeds, so a (seed, data, config) triple maps
to bitwise-identical weights across runs on one platform. Dropout masks are
keyed by (model seed, epoch, batch index, layer index) rather than drawn
from a shared stream, which keeps gradients reproducible for any individual
step.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np

LAYER_KINDS = ("conv2d", "maxpool2d", "dropout", "flatten", "dense")
ACTIVATIONS = ("none", "relu", "softmax")

CHECKPOINT_VERSION = 1


class EngineDivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the stack; unused size fields stay at their zero default."""

    kind: str
    activation: str = "none"
    filters: int = 0
    kernel: int = 0
    units: int = 0
    pool: int = 0
    rate: float = 0.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0


@dataclass(eq=False)
class Model:
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    num_classes: int
    rng_seed: int
    weights: list[list[np.ndarray]]


@dataclass(eq=False)
class TrainResult:
    model: Model
    elapsed_s: float
    epoch_losses: list[float]


def _validate_layer(spec: LayerSpec) -> None:
    if spec.kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind '{spec.kind}'")
    if spec.activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation '{spec.activation}'")
    if spec.kind == "conv2d" and (spec.filters < 1 or spec.kernel < 1):
        raise ValueError("conv2d needs positive filters and kernel")
    if spec.kind == "maxpool2d" and spec.pool < 1:
        raise ValueError("maxpool2d needs positive pool size")
    if spec.kind == "dense" and spec.units < 1:
        raise ValueError("dense needs positive units")
    if spec.kind == "dropout" and not 0.0 <= spec.rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")


def layer_output_shape(spec: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    """Output shape as a pure function of the input shape and layer params."""
    _validate_layer(spec)
    if spec.kind == "conv2d":
        h, w, _ = shape
        oh, ow = h - spec.kernel + 1, w - spec.kernel + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"input {shape} too small for {spec.kernel}x{spec.kernel} conv")
        return (oh, ow, spec.filters)
    if spec.kind == "maxpool2d":
        h, w, c = shape
        oh, ow = h // spec.pool, w // spec.pool
        if oh < 1 or ow < 1:
            raise ValueError(f"input {shape} too small for {spec.pool}x{spec.pool} pooling")
        return (oh, ow, c)
    if spec.kind == "flatten":
        return (int(np.prod(shape)),)
    if spec.kind == "dense":
        if len(shape) != 1:
            raise ValueError("dense expects flattened input")
        return (spec.units,)
    return shape  # dropout


def output_shapes(layers: tuple[LayerSpec, ...], input_shape: tuple[int, int, int]) -> list[tuple[int, ...]]:
    """Per-layer output shapes for a sample (batch dimension excluded)."""
    shapes = []
    shape: tuple[int, ...] = tuple(input_shape)
    for spec in layers:
        shape = layer_output_shape(spec, shape)
        shapes.append(shape)
    return shapes


def default_layers(num_classes: int) -> tuple[LayerSpec, ...]:
    """The stock stack: conv32 -> conv64 -> pool -> dropout -> flatten -> dense128 -> dropout -> softmax head."""
    return (
        LayerSpec("conv2d", "relu", filters=32, kernel=3),
        LayerSpec("conv2d", "relu", filters=64, kernel=3),
        LayerSpec("maxpool2d", pool=2),
        LayerSpec("dropout", rate=0.25),
        LayerSpec("flatten"),
        LayerSpec("dense", "relu", units=128),
        LayerSpec("dropout", rate=0.5),
        LayerSpec("dense", "softmax", units=num_classes),
    )


def _glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_weights(
    layers: tuple[LayerSpec, ...], input_shape: tuple[int, int, int], seed: int
) -> list[list[np.ndarray]]:
    rng = np.random.default_rng(seed)
    weights: list[list[np.ndarray]] = []
    shape: tuple[int, ...] = tuple(input_shape)
    for spec in layers:
        if spec.kind == "conv2d":
            cin = shape[-1]
            k, f = spec.kernel, spec.filters
            w = _glorot_uniform(rng, (k, k, cin, f), fan_in=k * k * cin, fan_out=k * k * f)
            weights.append([w, np.zeros(f)])
        elif spec.kind == "dense":
            din = shape[0]
            w = _glorot_uniform(rng, (din, spec.units), fan_in=din, fan_out=spec.units)
            weights.append([w, np.zeros(spec.units)])
        else:
            weights.append([])
        shape = layer_output_shape(spec, shape)
    return weights


def make_model(
    layers: tuple[LayerSpec, ...] | list[LayerSpec],
    input_shape: tuple[int, int, int],
    num_classes: int,
    seed: int,
) -> Model:
    """Validate a layer stack and initialize its weights from the seed."""
    layers = tuple(layers)
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    for i, spec in enumerate(layers):
        _validate_layer(spec)
        if spec.activation == "softmax" and i != len(layers) - 1:
            raise ValueError("softmax is permitted only on the final layer")
    last = layers[-1]
    if last.kind != "dense" or last.activation != "softmax" or last.units != num_classes:
        raise ValueError("final layer must be dense(num_classes) with softmax")
    shapes = output_shapes(layers, input_shape)  # raises if any layer underflows
    assert shapes[-1] == (num_classes,)
    return Model(
        layers=layers,
        input_shape=tuple(input_shape),
        num_classes=num_classes,
        rng_seed=int(seed),
        weights=init_weights(layers, input_shape, seed),
    )


def build_model(num_classes: int, input_shape: tuple[int, int, int], seed: int) -> Model:
    """Build the stock classifier for the given input shape and class count."""
    h, w, c = input_shape
    if h < 8 or w < 8 or c < 1:
        raise ValueError(
            f"input shape {input_shape} too small: two 3x3 convolutions plus 2x2 pooling need at least 8x8x1"
        )
    return make_model(default_layers(num_classes), input_shape, num_classes, seed)


def _dropout_scale(model: Model, layer_index: int, shape: tuple[int, ...], rate: float,
                   epoch: int, batch_index: int) -> np.ndarray:
    rng = np.random.default_rng([model.rng_seed, epoch, batch_index, layer_index])
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    n, h, w, c = x.shape
    oh, ow = h - k + 1, w - k + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, shape=(n, oh, ow, k, k, c), strides=(s0, s1, s2, s1, s2, s3)
    )
    return view.reshape(n * oh * ow, k * k * c)


def _col2im(dcols: np.ndarray, x_shape: tuple[int, ...], k: int) -> np.ndarray:
    n, h, w, c = x_shape
    oh, ow = h - k + 1, w - k + 1
    dview = dcols.reshape(n, oh, ow, k, k, c)
    dx = np.zeros(x_shape)
    for di in range(k):
        for dj in range(k):
            dx[:, di:di + oh, dj:dj + ow, :] += dview[:, :, :, di, dj, :]
    return dx


def _forward_pass(model: Model, x: np.ndarray, training: bool, epoch: int, batch_index: int):
    """Run the stack up to the logits; softmax is folded into the loss."""
    caches: list[tuple] = []
    for i, (spec, wts) in enumerate(zip(model.layers, model.weights)):
        if spec.kind == "conv2d":
            w, b = wts
            k = spec.kernel
            cols = _im2col(x, k)
            n, h, wd, _ = x.shape
            z = (cols @ w.reshape(-1, spec.filters) + b).reshape(n, h - k + 1, wd - k + 1, spec.filters)
            caches.append(("conv2d", x.shape, cols, z if spec.activation == "relu" else None))
            x = np.maximum(z, 0.0) if spec.activation == "relu" else z
        elif spec.kind == "dense":
            w, b = wts
            z = x @ w + b
            caches.append(("dense", x, z if spec.activation == "relu" else None))
            x = np.maximum(z, 0.0) if spec.activation == "relu" else z
        elif spec.kind == "maxpool2d":
            p = spec.pool
            n, h, wd, c = x.shape
            oh, ow = h // p, wd // p
            windows = (
                x[:, : oh * p, : ow * p, :]
                .reshape(n, oh, p, ow, p, c)
                .transpose(0, 1, 3, 5, 2, 4)
                .reshape(n, oh, ow, c, p * p)
            )
            idx = windows.argmax(axis=4)
            caches.append(("maxpool2d", x.shape, idx))
            x = np.take_along_axis(windows, idx[..., None], axis=4)[..., 0]
        elif spec.kind == "dropout":
            if training and spec.rate > 0.0:
                scale = _dropout_scale(model, i, x.shape, spec.rate, epoch, batch_index)
                caches.append(("dropout", scale))
                x = x * scale
            else:
                caches.append(("dropout", None))
        elif spec.kind == "flatten":
            caches.append(("flatten", x.shape))
            x = x.reshape(x.shape[0], -1)
    return x, caches


def _backward_pass(model: Model, caches: list[tuple], dlogits: np.ndarray):
    grads: list[list[np.ndarray]] = [[] for _ in model.layers]
    d = dlogits
    for i in range(len(model.layers) - 1, -1, -1):
        spec = model.layers[i]
        cache = caches[i]
        if spec.activation == "relu":
            z = cache[-1]
            d = d * (z > 0.0)
        if spec.kind == "conv2d":
            _, x_shape, cols, _ = cache
            w, _b = model.weights[i]
            dout2 = d.reshape(-1, spec.filters)
            dw = (cols.T @ dout2).reshape(w.shape)
            db = dout2.sum(axis=0)
            grads[i] = [dw, db]
            d = _col2im(dout2 @ w.reshape(-1, spec.filters).T, x_shape, spec.kernel)
        elif spec.kind == "dense":
            _, x_in, _ = cache
            w, _b = model.weights[i]
            grads[i] = [x_in.T @ d, d.sum(axis=0)]
            d = d @ w.T
        elif spec.kind == "maxpool2d":
            _, x_shape, idx = cache
            p = spec.pool
            n, h, wd, c = x_shape
            oh, ow = h // p, wd // p
            dwin = np.zeros((n, oh, ow, c, p * p))
            np.put_along_axis(dwin, idx[..., None], d[..., None], axis=4)
            dx = np.zeros(x_shape)
            dx[:, : oh * p, : ow * p, :] = (
                dwin.reshape(n, oh, ow, c, p, p).transpose(0, 1, 4, 2, 5, 3).reshape(n, oh * p, ow * p, c)
            )
            d = dx
        elif spec.kind == "dropout":
            scale = cache[1]
            if scale is not None:
                d = d * scale
        elif spec.kind == "flatten":
            d = d.reshape(cache[1])
    return grads, d


def _check_batch(model: Model, batch: np.ndarray) -> None:
    if batch.ndim != 4 or tuple(batch.shape[1:]) != model.input_shape:
        raise ValueError(f"batch shape {batch.shape} does not match model input {model.input_shape}")


def _check_labels(model: Model, labels: np.ndarray) -> None:
    if len(labels) and (labels.min() < 0 or labels.max() >= model.num_classes):
        raise ValueError("label out of range")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(model: Model, batch: np.ndarray, training: bool = False,
            epoch: int = 0, batch_index: int = 0) -> np.ndarray:
    """Class probabilities for a batch; rows sum to 1."""
    _check_batch(model, batch)
    logits, _ = _forward_pass(model, np.asarray(batch, dtype=np.float64), training, epoch, batch_index)
    return np.exp(_log_softmax(logits))


def training_loss(model: Model, batch: np.ndarray, labels: np.ndarray,
                  epoch: int = 0, batch_index: int = 0, training: bool = True) -> float:
    """Mean cross-entropy via the forward pass only (no gradient code path)."""
    _check_batch(model, batch)
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(model, labels)
    logits, _ = _forward_pass(model, np.asarray(batch, dtype=np.float64), training, epoch, batch_index)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_gradients(model: Model, batch: np.ndarray, labels: np.ndarray, *,
                       training: bool = True, epoch: int = 0, batch_index: int = 0,
                       want_input_grad: bool = False):
    """Mean cross-entropy plus analytic gradients (per-layer, mirroring weights).

    With want_input_grad the gradient of the loss w.r.t. the input batch is
    returned as a third element.
    """
    _check_batch(model, batch)
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(model, labels)
    x = np.asarray(batch, dtype=np.float64)
    logits, caches = _forward_pass(model, x, training, epoch, batch_index)
    logp = _log_softmax(logits)
    n = len(labels)
    loss = float(-logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads, dx = _backward_pass(model, caches, dlogits)
    if want_input_grad:
        return loss, grads, dx
    return loss, grads


def backward(model: Model, batch: np.ndarray, labels: np.ndarray,
             epoch: int = 0, batch_index: int = 0):
    """Training-mode loss and weight gradients for one batch."""
    return loss_and_gradients(model, batch, labels, training=True, epoch=epoch, batch_index=batch_index)


def input_gradient(model: Model, batch: np.ndarray, labels: np.ndarray):
    """Evaluation-mode loss and its gradient w.r.t. the input images."""
    loss, _, dx = loss_and_gradients(model, batch, labels, training=False, want_input_grad=True)
    return loss, dx


def _clone_weights(weights: list[list[np.ndarray]]) -> list[list[np.ndarray]]:
    return [[w.copy() for w in lw] for lw in weights]


def train(model: Model, data, cfg: TrainConfig) -> TrainResult:
    """Plain SGD over shuffled minibatches; deterministic per (seed, data, cfg).

    Epoch 0 is legal and returns the weights unchanged. A non-finite loss
    aborts with EngineDivergenceError naming the epoch and batch.
    """
    n = len(data)
    if n == 0:
        raise ValueError("training dataset is empty")
    if cfg.epochs < 0:
        raise ValueError("epochs must be non-negative")
    if cfg.batch_size < 1 or cfg.batch_size > n:
        raise ValueError(f"batch_size must lie in [1, {n}]")
    if cfg.learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    _check_labels(model, data.labels)

    out = replace(model, weights=_clone_weights(model.weights))
    start = time.perf_counter()
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        batch_losses = []
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = loss_and_gradients(
                out, data.images[idx], data.labels[idx], training=True, epoch=epoch, batch_index=b
            )
            if not np.isfinite(loss):
                raise EngineDivergenceError(
                    f"non-finite loss {loss} at epoch {epoch} batch {b}; lower the learning rate"
                )
            for lw, lg in zip(out.weights, grads):
                for w, g in zip(lw, lg):
                    w -= cfg.learning_rate * g
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))
    return TrainResult(model=out, elapsed_s=time.perf_counter() - start, epoch_losses=epoch_losses)


def predict_probabilities(model: Model, images: np.ndarray, chunk: int = 64) -> np.ndarray:
    parts = [forward(model, images[lo:lo + chunk]) for lo in range(0, len(images), chunk)]
    if not parts:
        return np.zeros((0, model.num_classes))
    return np.concatenate(parts, axis=0)


def predict_labels(model: Model, data) -> np.ndarray:
    """Argmax over class probabilities; ties resolve to the lowest class index."""
    probs = predict_probabilities(model, data.images)
    return probs.argmax(axis=1).astype(np.int64)


def models_equal(a: Model, b: Model) -> bool:
    """Bitwise equality of specs and weights."""
    if a.layers != b.layers or a.input_shape != b.input_shape:
        return False
    if a.num_classes != b.num_classes or a.rng_seed != b.rng_seed:
        return False
    for lw_a, lw_b in zip(a.weights, b.weights):
        if len(lw_a) != len(lw_b):
            return False
        for wa, wb in zip(lw_a, lw_b):
            if wa.shape != wb.shape or not np.array_equal(wa, wb):
                return False
    return True


def save_model(model: Model, path) -> None:
    """Checkpoint: npz container with a JSON header plus raw float64 arrays."""
    header = {
        "version": CHECKPOINT_VERSION,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "rng_seed": model.rng_seed,
        "layers": [vars(spec) for spec in model.layers],
    }
    arrays = {}
    for i, lw in enumerate(model.weights):
        for j, w in enumerate(lw):
            arrays[f"w{i}_{j}"] = w
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8), **arrays)


def load_model(path) -> Model:
    with np.load(path) as npz:
        header = json.loads(bytes(npz["header"]).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        layers = tuple(LayerSpec(**spec) for spec in header["layers"])
        weights: list[list[np.ndarray]] = []
        for i in range(len(layers)):
            lw = []
            for j in range(2):
                key = f"w{i}_{j}"
                if key in npz:
                    lw.append(npz[key])
            weights.append(lw)
    return Model(
        layers=layers,
        input_shape=tuple(header["input_shape"]),
        num_classes=header["num_classes"],
        rng_seed=header["rng_seed"],
        weights=weights,
    )
