"""Numpy training loops for both network stages.

Small enough models that full numpy batches and a hand-rolled Adam are all
that is needed; a fixed seed makes every run (and the exported file)
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_MFCC = 16
N_CLASSES = 8
CONV_FILTERS = 8
CONV_TAPS = 3
CONV_BLOCKS = 3
CONV_OUT = N_MFCC - CONV_TAPS + 1


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-2):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainingConfig:
    epochs: int = 60
    learning_rate: float = 2e-2
    batch_size: int = 256
    validation_split: float = 0.2
    calibration_samples: int = 512
    seed: int = 0
    weight_decay: float = 1e-4
    detector_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.validation_split < 1.0:
            raise ValueError("validation split must be in (0, 1)")
        if self.calibration_samples < 100:
            raise ValueError("need at least 100 calibration samples")
        if not 0.0 < self.detector_threshold < 1.0:
            raise ValueError("detector threshold must be in (0, 1)")


@dataclass
class FloatDetector:
    weights: np.ndarray   # (16,)
    bias: float
    threshold: float = 0.5

    def scores(self, x: np.ndarray) -> np.ndarray:
        logits = x @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-np.clip(logits, -60, 60)))


@dataclass
class FloatClassifier:
    conv_w: np.ndarray    # (8, 3, 3)
    conv_b: np.ndarray    # (8,)
    fc_w: np.ndarray      # (8, 112)
    fc_b: np.ndarray      # (8,)

    def conv_activations(self, x: np.ndarray) -> np.ndarray:
        """(B, 3, 16) -> post-ReLU (B, 8, 14)."""
        windows = np.stack([x[:, :, k:k + CONV_OUT] for k in range(CONV_TAPS)],
                           axis=-1)                      # (B, 3, 14, 3)
        acc = np.einsum("fck,bcpk->bfp", self.conv_w, windows)
        return np.maximum(acc + self.conv_b[None, :, None], 0.0)

    def logits(self, x: np.ndarray) -> np.ndarray:
        act = self.conv_activations(x)
        return act.reshape(len(x), -1) @ self.fc_w.T + self.fc_b

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


def _split(n: int, split: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_val = max(1, int(round(n * split)))
    return order[n_val:], order[:n_val]


def train_detector(features: np.ndarray, voiced: np.ndarray,
                   config: TrainingConfig) -> tuple[FloatDetector, dict]:
    """Logistic regression on block MFCCs; returns model + metrics."""
    rng = np.random.default_rng(config.seed)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(voiced, dtype=np.float64)
    train_idx, val_idx = _split(len(x), config.validation_split, rng)
    params = {"w": np.zeros(N_MFCC), "b": np.zeros(1)}
    opt = Adam(params, lr=config.learning_rate)
    for _ in range(config.epochs):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            xb, yb = x[batch], y[batch]
            logits = xb @ params["w"] + params["b"][0]
            probs = 1.0 / (1.0 + np.exp(-np.clip(logits, -60, 60)))
            err = probs - yb
            grads = {
                "w": xb.T @ err / len(xb) + config.weight_decay * params["w"],
                "b": np.array([float(np.mean(err))]),
            }
            opt.step(params, grads)
        if np.any(~np.isfinite(params["w"])):
            raise ArithmeticError("detector training diverged (NaN weights)")
    model = FloatDetector(params["w"].copy(), float(params["b"][0]),
                          threshold=config.detector_threshold)
    val_acc = float(np.mean((model.scores(x[val_idx]) >= model.threshold)
                            == (y[val_idx] > 0.5)))
    train_acc = float(np.mean((model.scores(x[train_idx]) >= model.threshold)
                              == (y[train_idx] > 0.5)))
    return model, {"val_accuracy": val_acc, "train_accuracy": train_acc,
                   "n_train": len(train_idx), "n_val": len(val_idx)}


def train_classifier(inputs: np.ndarray, labels: np.ndarray,
                     config: TrainingConfig) -> tuple[FloatClassifier, dict]:
    """Conv + FC softmax classifier over (B, 3, 16) syllable features."""
    rng = np.random.default_rng(config.seed + 1)
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    train_idx, val_idx = _split(len(x), config.validation_split, rng)
    params = {
        "conv_w": rng.normal(0, 0.15, size=(CONV_FILTERS, CONV_BLOCKS, CONV_TAPS)),
        "conv_b": np.zeros(CONV_FILTERS),
        "fc_w": rng.normal(0, 0.15, size=(N_CLASSES, CONV_FILTERS * CONV_OUT)),
        "fc_b": np.zeros(N_CLASSES),
    }
    opt = Adam(params, lr=config.learning_rate)
    onehot = np.eye(N_CLASSES)
    for _ in range(config.epochs):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            xb, yb = x[batch], y[batch]
            windows = np.stack([xb[:, :, k:k + CONV_OUT]
                                for k in range(CONV_TAPS)], axis=-1)
            acc = np.einsum("fck,bcpk->bfp", params["conv_w"], windows) \
                + params["conv_b"][None, :, None]
            act = np.maximum(acc, 0.0)
            flat = act.reshape(len(xb), -1)
            logits = flat @ params["fc_w"].T + params["fc_b"]
            logits -= logits.max(axis=1, keepdims=True)
            e = np.exp(logits)
            probs = e / e.sum(axis=1, keepdims=True)
            dz = (probs - onehot[yb]) / len(xb)
            d_act = (dz @ params["fc_w"]).reshape(act.shape) * (acc > 0)
            grads = {
                "fc_w": dz.T @ flat + config.weight_decay * params["fc_w"],
                "fc_b": dz.sum(axis=0),
                "conv_w": np.einsum("bfp,bcpk->fck", d_act, windows)
                + config.weight_decay * params["conv_w"],
                "conv_b": d_act.sum(axis=(0, 2)),
            }
            opt.step(params, grads)
        if np.any(~np.isfinite(params["conv_w"])):
            raise ArithmeticError("classifier training diverged (NaN weights)")
    model = FloatClassifier(params["conv_w"].copy(), params["conv_b"].copy(),
                            params["fc_w"].copy(), params["fc_b"].copy())
    val_acc = float(np.mean(model.predict(x[val_idx]) == y[val_idx]))
    train_acc = float(np.mean(model.predict(x[train_idx]) == y[train_idx]))
    return model, {"val_accuracy": val_acc, "train_accuracy": train_acc,
                   "n_train": len(train_idx), "n_val": len(val_idx)}
