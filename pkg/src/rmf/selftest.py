"""Built-in checks: gradient oracles and metric oracles.

The finite-difference routines only touch the forward/loss code path, so
they stay independent of the analytic backward pass they validate. The
metric reference is a deliberately plain per-class loop, independent of the
vectorized implementation.
"""

from __future__ import annotations

import numpy as np

from . import engine, metrics, pipeline

GRAD_TOLERANCE = 1e-4
METRIC_TOLERANCE = 1e-12


def finite_difference_gradients(model: engine.Model, batch, labels, eps: float = 1e-5):
    """Central-difference weight gradients of the training-mode loss."""
    grads = []
    for li, layer_weights in enumerate(model.weights):
        layer_grads = []
        for w in layer_weights:
            g = np.zeros_like(w)
            flat_w = w.ravel()
            flat_g = g.ravel()
            for idx in range(flat_w.size):
                orig = flat_w[idx]
                flat_w[idx] = orig + eps
                lp = engine.training_loss(model, batch, labels)
                flat_w[idx] = orig - eps
                lm = engine.training_loss(model, batch, labels)
                flat_w[idx] = orig
                flat_g[idx] = (lp - lm) / (2.0 * eps)
            layer_grads.append(g)
        grads.append(layer_grads)
    return grads


def finite_difference_input_gradient(model: engine.Model, batch, labels, eps: float = 1e-5,
                                     sample_positions: int = 64, seed: int = 0):
    """Central differences of the eval-mode loss at sampled input pixels."""
    batch = np.array(batch, dtype=np.float64)
    rng = np.random.default_rng(seed)
    flat = batch.ravel()
    positions = rng.choice(flat.size, size=min(sample_positions, flat.size), replace=False)
    grad = np.zeros(len(positions))
    for i, idx in enumerate(positions):
        orig = flat[idx]
        flat[idx] = orig + eps
        lp = engine.training_loss(model, batch, labels, training=False)
        flat[idx] = orig - eps
        lm = engine.training_loss(model, batch, labels, training=False)
        flat[idx] = orig
        grad[i] = (lp - lm) / (2.0 * eps)
    return positions, grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float((np.abs(analytic - numeric) / denom).max()) if analytic.size else 0.0


def gradcheck_layers(num_classes: int = 3, seed: int = 5) -> dict[str, float]:
    """Max relative error per parametric layer of a stack with every layer kind.

    Dropout is active (training mode) with its deterministic step-0 mask, so
    the check also exercises the dropout and pooling backward paths.
    """
    layers = (
        engine.LayerSpec("conv2d", "relu", filters=4, kernel=3),
        engine.LayerSpec("conv2d", "relu", filters=4, kernel=3),
        engine.LayerSpec("maxpool2d", pool=2),
        engine.LayerSpec("dropout", rate=0.25),
        engine.LayerSpec("flatten"),
        engine.LayerSpec("dense", "relu", units=8),
        engine.LayerSpec("dropout", rate=0.5),
        engine.LayerSpec("dense", "softmax", units=num_classes),
    )
    model = engine.make_model(layers, (8, 8, 1), num_classes, seed=seed)
    rng = np.random.default_rng(seed + 1)
    batch = rng.random((4, 8, 8, 1))
    labels = rng.integers(0, num_classes, size=4)

    _, analytic = engine.backward(model, batch, labels)
    numeric = finite_difference_gradients(model, batch, labels)

    errors: dict[str, float] = {}
    for li, (spec, a_layer, n_layer) in enumerate(zip(model.layers, analytic, numeric)):
        for wi, (a, n) in enumerate(zip(a_layer, n_layer)):
            errors[f"layer{li}-{spec.kind}-w{wi}"] = relative_error(a, n)
    return errors


def input_gradcheck(seed: int = 5) -> float:
    layers = (
        engine.LayerSpec("conv2d", "relu", filters=4, kernel=3),
        engine.LayerSpec("maxpool2d", pool=2),
        engine.LayerSpec("flatten"),
        engine.LayerSpec("dense", "softmax", units=3),
    )
    model = engine.make_model(layers, (8, 8, 1), 3, seed=seed)
    rng = np.random.default_rng(seed + 2)
    batch = rng.random((2, 8, 8, 1))
    labels = rng.integers(0, 3, size=2)
    _, dx = engine.input_gradient(model, batch, labels)
    positions, numeric = finite_difference_input_gradient(model, batch, labels, seed=seed)
    return relative_error(dx.ravel()[positions], numeric)


def reference_metrics_from_counts(counts) -> metrics.MetricsBundle:
    """Loop-based metric reference used as the oracle for compute_metrics."""
    c = len(counts)
    total = 0
    correct = 0
    for i in range(c):
        for j in range(c):
            total += counts[i][j]
        correct += counts[i][i]
    precisions, recalls = [], []
    for i in range(c):
        row_sum = sum(counts[i][j] for j in range(c))
        if row_sum == 0:
            continue  # class absent from the true labels
        col_sum = sum(counts[j][i] for j in range(c))
        precisions.append(counts[i][i] / col_sum if col_sum else 0.0)
        recalls.append(counts[i][i] / row_sum)
    avg_p = sum(precisions) / len(precisions)
    avg_r = sum(recalls) / len(recalls)
    f1 = 2 * avg_p * avg_r / (avg_p + avg_r) if avg_p + avg_r > 0 else 0.0
    return metrics.MetricsBundle(accuracy=correct / total, avg_precision=avg_p,
                                 avg_recall=avg_r, f1=f1)


def random_confusion_counts(rng: np.random.Generator, max_classes: int = 8,
                            max_samples: int = 200) -> np.ndarray:
    c = int(rng.integers(2, max_classes + 1))
    n = int(rng.integers(1, max_samples + 1))
    true = rng.integers(0, c, size=n)
    pred = rng.integers(0, c, size=n)
    return metrics.confusion(true, pred, c).counts


def metrics_oracle_check(trials: int = 100, seed: int = 99) -> float:
    """Max absolute deviation between compute_metrics and the loop reference."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        counts = random_confusion_counts(rng)
        got = metrics.compute_metrics(metrics.ConfusionMatrix(counts, len(counts)))
        want = reference_metrics_from_counts(counts.tolist())
        for key, value in got.as_dict().items():
            worst = max(worst, abs(value - getattr(want, key)))
    return worst


def run_selftest(emit=print) -> bool:
    """Gradient and metric oracles with one pass/fail line each."""
    ok = True

    errors = gradcheck_layers()
    worst_key = max(errors, key=errors.get)
    grad_ok = errors[worst_key] < GRAD_TOLERANCE
    ok &= grad_ok
    emit(f"[{'PASS' if grad_ok else 'FAIL'}] weight gradients vs central differences: "
         f"max rel err {errors[worst_key]:.2e} at {worst_key} (tolerance {GRAD_TOLERANCE:.0e})")

    input_err = input_gradcheck()
    input_ok = input_err < GRAD_TOLERANCE
    ok &= input_ok
    emit(f"[{'PASS' if input_ok else 'FAIL'}] input gradient vs central differences: "
         f"max rel err {input_err:.2e} (tolerance {GRAD_TOLERANCE:.0e})")

    metric_err = metrics_oracle_check()
    metric_ok = metric_err < METRIC_TOLERANCE
    ok &= metric_ok
    emit(f"[{'PASS' if metric_ok else 'FAIL'}] compute_metrics vs loop reference (100 matrices): "
         f"max abs dev {metric_err:.2e} (tolerance {METRIC_TOLERANCE:.0e})")

    rng = np.random.default_rng(3)
    xs = rng.random(100)
    involution_ok = all(pipeline.invert_metric(pipeline.invert_metric(x)) == x for x in xs)
    ok &= involution_ok
    emit(f"[{'PASS' if involution_ok else 'FAIL'}] invert_metric is an involution on [0, 1]")

    model = engine.build_model(4, (8, 8, 1), seed=1)
    probs = engine.forward(model, rng.random((6, 8, 8, 1)))
    softmax_ok = bool(np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-9))
    ok &= softmax_ok
    emit(f"[{'PASS' if softmax_ok else 'FAIL'}] softmax rows sum to 1 within 1e-9")

    return ok
