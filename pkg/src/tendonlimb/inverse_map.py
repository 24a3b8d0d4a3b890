"""Inverse map from limb kinematics to motor activations.

A small feedforward network, 6 inputs (two angles, two angular velocities,
two angular accelerations), 15 tanh hidden units, 3 tanh outputs affinely
rescaled into the activation range [0.15, 1].  Inputs are z-scored with
statistics frozen at initial training time so that later refinements stay
comparable.

Training is mini-batch gradient descent with momentum.  After every epoch
the full-data loss is evaluated; an epoch that increased it is rolled back
and the step size halved, which makes the recorded loss history
nonincreasing by construction.  Everything is seeded and reproducible.

The arithmetic lives in numba kernels; the analytic gradient that training
consumes is the same function ``grad_check`` compares against central
finite differences, so the correctness gate covers the production path.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

N_IN, N_HIDDEN, N_OUT = 6, 15, 3
OUT_LO, OUT_HI = 0.15, 1.0


@dataclass
class TrainConfig:
    batch_size: int = 64
    momentum: float = 0.9
    learning_rate: float = 1e-2
    epochs_initial: int = 200
    epochs_refine: int = 50


@dataclass
class Dataset:
    """Paired (kinematics -> activation) samples."""

    x: np.ndarray   # (n, 6)
    y: np.ndarray   # (n, 3)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.y = np.ascontiguousarray(self.y, dtype=float)
        if self.x.ndim != 2 or self.x.shape[1] != N_IN:
            raise ValueError(f"inputs must be (n, {N_IN})")
        if self.y.ndim != 2 or self.y.shape[1] != N_OUT:
            raise ValueError(f"targets must be (n, {N_OUT})")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("inputs and targets must pair up")

    def __len__(self):
        return self.x.shape[0]

    def extend(self, x, y) -> "Dataset":
        return Dataset(np.concatenate([self.x, x]), np.concatenate([self.y, y]))


@dataclass
class InverseMap:
    """Trained network weights plus the frozen input normalization."""

    w1: np.ndarray          # (15, 6)
    b1: np.ndarray          # (15,)
    w2: np.ndarray          # (3, 15)
    b2: np.ndarray          # (3,)
    input_mean: np.ndarray  # (6,)
    input_scale: np.ndarray # (6,)
    loss_history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def copy(self) -> "InverseMap":
        return InverseMap(self.w1.copy(), self.b1.copy(), self.w2.copy(),
                          self.b2.copy(), self.input_mean.copy(),
                          self.input_scale.copy(), self.loss_history.copy())


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _loss(x, y, w1, b1, w2, b2):
    n = x.shape[0]
    h = np.empty(N_HIDDEN)
    acc = 0.0
    half_span = 0.5 * (OUT_HI - OUT_LO)
    for i in range(n):
        for j in range(N_HIDDEN):
            u = b1[j]
            for k in range(N_IN):
                u += w1[j, k] * x[i, k]
            h[j] = np.tanh(u)
        for j in range(N_OUT):
            u = b2[j]
            for k in range(N_HIDDEN):
                u += w2[j, k] * h[k]
            a = OUT_LO + half_span * (np.tanh(u) + 1.0)
            r = a - y[i, j]
            acc += r * r
    return acc / (n * N_OUT)


@njit(cache=True)
def _loss_grads(x, y, w1, b1, w2, b2, dw1, db1, dw2, db2):
    """Mean-squared-error loss and its gradient, accumulated in-place."""
    n = x.shape[0]
    h = np.empty(N_HIDDEN)
    z = np.empty(N_OUT)
    dz = np.empty(N_OUT)
    half_span = 0.5 * (OUT_HI - OUT_LO)
    dw1[:] = 0.0
    db1[:] = 0.0
    dw2[:] = 0.0
    db2[:] = 0.0
    acc = 0.0
    scale = 1.0 / (n * N_OUT)
    for i in range(n):
        for j in range(N_HIDDEN):
            u = b1[j]
            for k in range(N_IN):
                u += w1[j, k] * x[i, k]
            h[j] = np.tanh(u)
        for j in range(N_OUT):
            u = b2[j]
            for k in range(N_HIDDEN):
                u += w2[j, k] * h[k]
            z[j] = np.tanh(u)
            a = OUT_LO + half_span * (z[j] + 1.0)
            r = a - y[i, j]
            acc += r * r
            dz[j] = 2.0 * r * scale * half_span * (1.0 - z[j] * z[j])
        for j in range(N_OUT):
            db2[j] += dz[j]
            for k in range(N_HIDDEN):
                dw2[j, k] += dz[j] * h[k]
        for k in range(N_HIDDEN):
            dh = 0.0
            for j in range(N_OUT):
                dh += dz[j] * w2[j, k]
            du = dh * (1.0 - h[k] * h[k])
            db1[k] += du
            for l in range(N_IN):
                dw1[k, l] += du * x[i, l]
    return acc * scale


@njit(cache=True)
def _epoch(x, y, w1, b1, w2, b2, vw1, vb1, vw2, vb2,
           dw1, db1, dw2, db2, perm, batch_size, lr, momentum):
    """One pass of mini-batch updates over a shuffled dataset, in place."""
    n = x.shape[0]
    for start in range(0, n, batch_size):
        idx = perm[start:min(start + batch_size, n)]
        xb = x[idx]
        yb = y[idx]
        _loss_grads(xb, yb, w1, b1, w2, b2, dw1, db1, dw2, db2)
        for j in range(N_HIDDEN):
            vb1[j] = momentum * vb1[j] - lr * db1[j]
            b1[j] += vb1[j]
            for k in range(N_IN):
                vw1[j, k] = momentum * vw1[j, k] - lr * dw1[j, k]
                w1[j, k] += vw1[j, k]
        for j in range(N_OUT):
            vb2[j] = momentum * vb2[j] - lr * db2[j]
            b2[j] += vb2[j]
            for k in range(N_HIDDEN):
                vw2[j, k] = momentum * vw2[j, k] - lr * dw2[j, k]
                w2[j, k] += vw2[j, k]


def _full_loss(xn, y, w1, b1, w2, b2):
    h = np.tanh(xn @ w1.T + b1)
    z = np.tanh(h @ w2.T + b2)
    a = OUT_LO + 0.5 * (OUT_HI - OUT_LO) * (z + 1.0)
    d = a - y
    return float(np.mean(d * d))


def _fit(x, y, w1, b1, w2, b2, perms, batch_size, lr0, momentum, losses):
    """Run len(perms) epochs in place; losses must have len(perms)+1 slots.

    Epochs that raise the full-data loss are undone (weights and momentum
    restored) and the learning rate halved, so the recorded history is
    nonincreasing.
    """
    n_epochs = perms.shape[0]
    weights = (w1, b1, w2, b2)
    vels = tuple(np.zeros_like(a) for a in weights)
    grads = tuple(np.zeros_like(a) for a in weights)
    lr = lr0
    losses[0] = _full_loss(x, y, w1, b1, w2, b2)
    prev = losses[0]
    for e in range(n_epochs):
        snap = tuple(a.copy() for a in weights + vels)
        _epoch(x, y, *weights, *vels, *grads, perms[e], batch_size, lr, momentum)
        cur = _full_loss(x, y, w1, b1, w2, b2)
        if cur > prev:
            for dst, src in zip(weights + vels, snap):
                dst[:] = src
            lr *= 0.5
            losses[e + 1] = prev
        else:
            prev = cur
            losses[e + 1] = cur


# ---------------------------------------------------------------------------
# public surface


def predict(imap: InverseMap, x) -> np.ndarray:
    """Activations for one kinematic sample (6,) or a batch (n, 6)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("kinematic input must be finite")
    single = x.ndim == 1
    xn = (np.atleast_2d(x) - imap.input_mean) / imap.input_scale
    h = np.tanh(xn @ imap.w1.T + imap.b1)
    z = np.tanh(h @ imap.w2.T + imap.b2)
    a = OUT_LO + 0.5 * (OUT_HI - OUT_LO) * (z + 1.0)
    return a[0] if single else a


def _normalize(x, mean, scale):
    return np.ascontiguousarray((x - mean) / scale)


def _run_training(imap: InverseMap, data: Dataset, cfg: TrainConfig,
                  epochs: int, seed: int) -> InverseMap:
    rng = np.random.default_rng(seed)
    n = len(data)
    xn = _normalize(data.x, imap.input_mean, imap.input_scale)
    perms = np.empty((epochs, n), dtype=np.int64)
    for e in range(epochs):
        perms[e] = rng.permutation(n)
    losses = np.empty(epochs + 1)
    out = imap.copy()
    _fit(xn, data.y, out.w1, out.b1, out.w2, out.b2, perms,
         int(cfg.batch_size), float(cfg.learning_rate), float(cfg.momentum),
         losses)
    out.loss_history = losses
    return out


def train_initial(data: Dataset, cfg: TrainConfig, seed: int) -> InverseMap:
    """Fit a fresh map: normalization from this data, seeded uniform init."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if not np.all(np.isfinite(data.x)) or not np.all(np.isfinite(data.y)):
        raise ValueError("training data must be finite")
    if np.any(data.y < OUT_LO - 1e-9) or np.any(data.y > OUT_HI + 1e-9):
        raise ValueError(f"targets must lie in [{OUT_LO}, {OUT_HI}]")
    mean = data.x.mean(axis=0)
    scale = data.x.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)

    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (N_IN + N_HIDDEN))
    lim2 = np.sqrt(6.0 / (N_HIDDEN + N_OUT))
    imap = InverseMap(
        w1=rng.uniform(-lim1, lim1, (N_HIDDEN, N_IN)),
        b1=np.zeros(N_HIDDEN),
        w2=rng.uniform(-lim2, lim2, (N_OUT, N_HIDDEN)),
        b2=np.zeros(N_OUT),
        input_mean=mean,
        input_scale=scale,
    )
    return _run_training(imap, data, cfg, int(cfg.epochs_initial), seed)


def refine(imap: InverseMap, cumulative: Dataset, cfg: TrainConfig,
           seed: int) -> InverseMap:
    """Warm-start retraining on the cumulative dataset.

    Normalization statistics stay frozen from the initial map.
    """
    if len(cumulative) == 0:
        raise ValueError("cannot refine on an empty dataset")
    return _run_training(imap, cumulative, cfg, int(cfg.epochs_refine), seed)


def grad_check(imap: InverseMap, data_small: Dataset, h: float = 1e-5) -> float:
    """Max relative error between the training gradient and central finite
    differences of the loss over every weight and bias."""
    if len(data_small) > 16:
        raise ValueError("gradient check is meant for tiny datasets (<= 16)")
    xn = _normalize(data_small.x, imap.input_mean, imap.input_scale)
    y = data_small.y
    w = [imap.w1.copy(), imap.b1.copy(), imap.w2.copy(), imap.b2.copy()]
    grads = [np.zeros_like(a) for a in w]
    _loss_grads(xn, y, w[0], w[1], w[2], w[3], *grads)
    worst = 0.0
    for gi, arr in enumerate(w):
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = _loss(xn, y, w[0], w[1], w[2], w[3])
            flat[i] = orig - h
            lm = _loss(xn, y, w[0], w[1], w[2], w[3])
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            ga = grads[gi].ravel()[i]
            err = abs(ga - fd) / max(abs(ga) + abs(fd), 1e-8)
            worst = max(worst, err)
    return worst


def evaluate_mse(desired: np.ndarray, achieved: np.ndarray) -> float:
    """Tracking error: mean over samples of the squared angle error summed
    over both joints.  Inputs are kinematics arrays; only the two angle
    columns enter."""
    desired = np.asarray(desired, dtype=float)
    achieved = np.asarray(achieved, dtype=float)
    if desired.shape[0] != achieved.shape[0]:
        raise ValueError("desired and achieved sequences must have equal length")
    if desired.shape[0] == 0:
        raise ValueError("cannot evaluate an empty sequence")
    err = desired[:, :2] - achieved[:, :2]
    return float(np.mean(np.sum(err ** 2, axis=1)))


# ---------------------------------------------------------------------------
# serialization


def to_json(imap: InverseMap) -> str:
    hist = imap.loss_history
    doc = {
        "layers": [N_IN, N_HIDDEN, N_OUT],
        "w1": imap.w1.ravel().tolist(),
        "b1": imap.b1.tolist(),
        "w2": imap.w2.ravel().tolist(),
        "b2": imap.b2.tolist(),
        "input_mean": imap.input_mean.tolist(),
        "input_scale": imap.input_scale.tolist(),
        "output_range": [OUT_LO, OUT_HI],
        "training": {
            "epochs": max(len(hist) - 1, 0),
            "initial_loss": float(hist[0]) if len(hist) else None,
            "final_loss": float(hist[-1]) if len(hist) else None,
        },
    }
    return json.dumps(doc, sort_keys=True)


def from_json(text: str) -> InverseMap:
    doc = json.loads(text)
    if doc["layers"] != [N_IN, N_HIDDEN, N_OUT]:
        raise ValueError(f"unsupported layer sizes {doc['layers']}")
    tr = doc["training"]
    hist = np.zeros(0)
    if tr["initial_loss"] is not None:
        # only the summary survives serialization; pad so the epoch count,
        # first and last entries all round-trip exactly
        hist = np.full(tr["epochs"] + 1, np.nan)
        hist[0] = tr["initial_loss"]
        hist[-1] = tr["final_loss"]
    return InverseMap(
        w1=np.array(doc["w1"]).reshape(N_HIDDEN, N_IN),
        b1=np.array(doc["b1"]),
        w2=np.array(doc["w2"]).reshape(N_OUT, N_HIDDEN),
        b2=np.array(doc["b2"]),
        input_mean=np.array(doc["input_mean"]),
        input_scale=np.array(doc["input_scale"]),
        loss_history=hist,
    )
