"""Siamese feed-forward clone classifier over method metric vectors.

Two weight-shared subnetworks embed the metric vectors of the two methods;
their outputs are concatenated and passed through a comparator stack and a
final logistic unit. Everything (forward pass, dropout, backpropagation,
SGD) is plain numpy in float64.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from clonedet.features import METRIC_NAMES

log = logging.getLogger(__name__)

FEATURE_DIM = len(METRIC_NAMES)
SUBNET_DIMS: tuple[int, ...] = (FEATURE_DIM, 200, 200, 200, 200)
COMPARATOR_DIMS: tuple[int, ...] = (400, 200, 100, 50, 25)
# dropout after the 2nd and 4th layer of each stack (0-based layer indices)
DROPOUT_LAYERS = frozenset({1, 3})
DEFAULT_DROPOUT = 0.20
BASE_LR = 1e-4
LR_DECAY = 0.03
LOSS_EPS = 1e-7

MAGIC = b"SIAMCLF\x00"
FORMAT_VERSION = 1


class ModelDataError(ValueError):
    """Non-finite or wrongly shaped input to the model."""


class ModelLoadError(ValueError):
    pass


@dataclass
class Dense:
    W: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)


@dataclass
class SiameseModel:
    subnet: list[Dense]
    comparator: list[Dense]
    out_w: np.ndarray
    out_b: np.ndarray  # shape (1,)
    mean: np.ndarray
    std: np.ndarray
    flagged: list[int] = field(default_factory=list)
    dropout_rate: float = DEFAULT_DROPOUT
    seed: int = 0
    hyperparams: dict = field(default_factory=dict)

    @property
    def subnet_dims(self) -> tuple[int, ...]:
        return (self.subnet[0].W.shape[0],) + tuple(L.W.shape[1] for L in self.subnet)

    @property
    def comparator_dims(self) -> tuple[int, ...]:
        return (self.comparator[0].W.shape[0],) + tuple(L.W.shape[1] for L in self.comparator)

    def params(self) -> list[np.ndarray]:
        """All trainable arrays in the fixed serialization order."""
        out = []
        for layer in self.subnet + self.comparator:
            out.extend((layer.W, layer.b))
        out.extend((self.out_w, self.out_b))
        return out

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params())

    def set_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        """Store z-score statistics; zero-variance features get std 1 and are flagged."""
        mean = np.asarray(mean, dtype=np.float64).copy()
        std = np.asarray(std, dtype=np.float64).copy()
        bad = ~(std > 1e-12) | ~np.isfinite(std)
        std[bad] = 1.0
        self.mean, self.std = mean, std
        self.flagged = [int(i) for i in np.flatnonzero(bad)]
        if self.flagged:
            log.info(
                "zero-variance features: %s", [METRIC_NAMES[i] for i in self.flagged if i < FEATURE_DIM]
            )

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) - self.mean) / self.std


@dataclass
class FeaturePair:
    x_a: np.ndarray
    x_b: np.ndarray
    label: int | None = None


def init(
    seed: int = 0,
    subnet_dims: Sequence[int] = SUBNET_DIMS,
    comparator_dims: Sequence[int] = COMPARATOR_DIMS,
    dropout_rate: float = DEFAULT_DROPOUT,
) -> SiameseModel:
    """He-normal initialised model; biases start at zero."""
    if comparator_dims[0] != 2 * subnet_dims[-1]:
        raise ValueError(
            f"comparator input {comparator_dims[0]} must be twice the subnet output {subnet_dims[-1]}"
        )
    rng = np.random.default_rng(seed)

    def stack(dims: Sequence[int]) -> list[Dense]:
        return [
            Dense(rng.normal(0.0, np.sqrt(2.0 / fi), size=(fi, fo)), np.zeros(fo))
            for fi, fo in zip(dims[:-1], dims[1:])
        ]

    subnet = stack(subnet_dims)
    comparator = stack(comparator_dims)
    last = comparator_dims[-1]
    model = SiameseModel(
        subnet=subnet,
        comparator=comparator,
        out_w=rng.normal(0.0, np.sqrt(2.0 / last), size=last),
        out_b=np.zeros(1),
        mean=np.zeros(subnet_dims[0]),
        std=np.ones(subnet_dims[0]),
        dropout_rate=dropout_rate,
        seed=seed,
    )
    log.info("initialised siamese model with %d parameters", model.parameter_count())
    return model


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardCache:
    branch_a: list
    branch_b: list
    comparator: list
    top: np.ndarray  # comparator output fed to the logistic unit
    logits: np.ndarray
    probs: np.ndarray

    def masks(self) -> dict[str, list[np.ndarray | None]]:
        return {
            "a": [m for _, _, m in self.branch_a],
            "b": [m for _, _, m in self.branch_b],
            "c": [m for _, _, m in self.comparator],
        }


def _dropout_mask(shape: tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def _stack_forward(
    layers: list[Dense],
    h: np.ndarray,
    train: bool,
    rate: float,
    rng: np.random.Generator | None,
    masks: list[np.ndarray | None] | None,
) -> tuple[np.ndarray, list]:
    cache = []
    for li, layer in enumerate(layers):
        z = h @ layer.W + layer.b
        a = np.maximum(z, 0.0)
        mask = None
        if train and li in DROPOUT_LAYERS and rate > 0:
            if masks is not None:
                mask = masks[li]
            else:
                mask = _dropout_mask(a.shape, rate, rng)
            if mask is not None:
                a = a * mask
        cache.append((h, z, mask))
        h = a
    return h, cache


def forward_batch(
    m: SiameseModel,
    xa: np.ndarray,
    xb: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
    masks: dict[str, list] | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Clone probabilities for a batch of normalized pairs (rows of xa, xb)."""
    xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    if xa.shape != xb.shape or xa.shape[1] != m.subnet_dims[0]:
        raise ModelDataError(f"expected pairs of {m.subnet_dims[0]}-vectors, got {xa.shape} / {xb.shape}")
    if not (np.isfinite(xa).all() and np.isfinite(xb).all()):
        raise ModelDataError("non-finite feature values")
    if train and masks is None and rng is None:
        rng = np.random.default_rng(m.seed)
    rate = m.dropout_rate
    ha, ca = _stack_forward(m.subnet, xa, train, rate, rng, masks["a"] if masks else None)
    hb, cb = _stack_forward(m.subnet, xb, train, rate, rng, masks["b"] if masks else None)
    hc, cc = _stack_forward(
        m.comparator, np.concatenate([ha, hb], axis=1), train, rate, rng, masks["c"] if masks else None
    )
    logits = hc @ m.out_w + m.out_b[0]
    probs = sigmoid(logits)
    return probs, ForwardCache(ca, cb, cc, hc, logits, probs)


def forward(
    m: SiameseModel,
    p: FeaturePair,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> float:
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    probs, _ = forward_batch(m, p.x_a, p.x_b, train=mode == "train", rng=rng)
    return float(probs[0])


def loss(pred: np.ndarray | float, label: np.ndarray | int) -> np.ndarray | float:
    """Binary relative entropy (cross-entropy) with the prediction clamped to [eps, 1-eps]."""
    p = np.clip(pred, LOSS_EPS, 1.0 - LOSS_EPS)
    y = np.asarray(label, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(out) if np.ndim(out) == 0 else out


def _stack_backward(layers: list[Dense], cache: list, dh: np.ndarray) -> tuple[np.ndarray, list]:
    grads = [None] * len(layers)
    for li in range(len(layers) - 1, -1, -1):
        h_in, z, mask = cache[li]
        if mask is not None:
            dh = dh * mask
        dz = dh * (z > 0)
        grads[li] = (h_in.T @ dz, dz.sum(axis=0))
        dh = dz @ layers[li].W.T
    return dh, grads


def backward(m: SiameseModel, cache: ForwardCache, labels: np.ndarray) -> list[np.ndarray]:
    """Gradients of the batch-mean loss, in :meth:`SiameseModel.params` order.

    The subnet gradient is the sum of the contributions of both branches.
    """
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    batch = y.shape[0]
    dlogit = (cache.probs - y) / batch
    g_out_w = cache.top.T @ dlogit
    g_out_b = np.array([dlogit.sum()])
    d_top = np.outer(dlogit, m.out_w)
    d_concat, g_comp = _stack_backward(m.comparator, cache.comparator, d_top)
    width = m.subnet_dims[-1]
    _, g_a = _stack_backward(m.subnet, cache.branch_a, d_concat[:, :width])
    _, g_b = _stack_backward(m.subnet, cache.branch_b, d_concat[:, width:])
    grads: list[np.ndarray] = []
    for (wa, ba), (wb, bb) in zip(g_a, g_b):
        grads.extend((wa + wb, ba + bb))
    for gw, gb in g_comp:
        grads.extend((gw, gb))
    grads.extend((g_out_w, g_out_b))
    return grads


def branch_gradients(m: SiameseModel, cache: ForwardCache, labels: np.ndarray) -> tuple[list, list]:
    """Per-branch subnet gradients (for checking the weight-sharing sum)."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    dlogit = (cache.probs - y) / y.shape[0]
    d_concat, _ = _stack_backward(m.comparator, cache.comparator, np.outer(dlogit, m.out_w))
    width = m.subnet_dims[-1]
    _, g_a = _stack_backward(m.subnet, cache.branch_a, d_concat[:, :width])
    _, g_b = _stack_backward(m.subnet, cache.branch_b, d_concat[:, width:])
    return g_a, g_b


def learning_rate(epoch: int, base_lr: float = BASE_LR, decay: float = LR_DECAY) -> float:
    return base_lr * (1.0 - decay) ** epoch


def sgd_step(
    m: SiameseModel,
    grads: Sequence[np.ndarray],
    epoch: int,
    base_lr: float = BASE_LR,
    decay: float = LR_DECAY,
) -> SiameseModel:
    """In-place update w <- w - lr(epoch) * g."""
    lr = learning_rate(epoch, base_lr, decay)
    for p, g in zip(m.params(), grads):
        p -= lr * g
    return m


def canonical_order(a, b):
    """Order two records by (token_count, id) so pair orientation never matters."""
    if (b.token_count, b.id) < (a.token_count, a.id):
        return b, a
    return a, b


def predict_proba(m: SiameseModel, raw_a: np.ndarray, raw_b: np.ndarray) -> np.ndarray:
    """Inference on raw (unnormalized) feature rows, already canonically ordered."""
    probs, _ = forward_batch(m, m.normalize(raw_a), m.normalize(raw_b))
    return probs


def predict(m: SiameseModel, a, b) -> tuple[bool, float]:
    """Classify a pair of method records; clone iff probability > 0.5."""
    first, second = canonical_order(a, b)
    prob = float(
        predict_proba(m, first.metrics.as_features()[None, :], second.metrics.as_features()[None, :])[0]
    )
    return prob > 0.5, prob


# -- persistence -------------------------------------------------------------


def _header(m: SiameseModel) -> dict:
    return {
        "format": "siamese-metric-classifier",
        "version": FORMAT_VERSION,
        "feature_names": list(METRIC_NAMES) if m.subnet_dims[0] == FEATURE_DIM else None,
        "subnet_dims": list(m.subnet_dims),
        "comparator_dims": list(m.comparator_dims),
        "dropout_rate": m.dropout_rate,
        "seed": m.seed,
        "flagged": m.flagged,
        "hyperparams": m.hyperparams,
    }


def save(m: SiameseModel, path: str | os.PathLike[str]) -> None:
    header = json.dumps(_header(m), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for arr in [m.mean, m.std] + m.params():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load(
    path: str | os.PathLike[str],
    expect_subnet_dims: Sequence[int] | None = None,
    expect_comparator_dims: Sequence[int] | None = None,
) -> SiameseModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise ModelLoadError(f"{path}: not a model file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelLoadError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    start = len(MAGIC) + 8
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
        sub = [int(d) for d in header["subnet_dims"]]
        comp = [int(d) for d in header["comparator_dims"]]
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise ModelLoadError(f"{path}: corrupt header ({exc})") from None
    if header.get("version") != FORMAT_VERSION:
        raise ModelLoadError(f"{path}: header version {header.get('version')}, expected {FORMAT_VERSION}")
    if expect_subnet_dims is not None and list(expect_subnet_dims) != sub:
        raise ModelLoadError(f"subnet dims mismatch: expected {list(expect_subnet_dims)}, found {sub}")
    if expect_comparator_dims is not None and list(expect_comparator_dims) != comp:
        raise ModelLoadError(
            f"comparator dims mismatch: expected {list(expect_comparator_dims)}, found {comp}"
        )
    if len(sub) < 2 or len(comp) < 2 or comp[0] != 2 * sub[-1]:
        raise ModelLoadError(
            f"inconsistent dims: comparator input expected {2 * sub[-1] if sub else '?'}, found {comp[0] if comp else '?'}"
        )
    names = header.get("feature_names")
    if names is not None and len(names) != sub[0]:
        raise ModelLoadError(f"feature dims mismatch: expected {len(names)}, found {sub[0]}")
    shapes: list[tuple[int, ...]] = [(sub[0],), (sub[0],)]
    for dims in (sub, comp):
        for fi, fo in zip(dims[:-1], dims[1:]):
            shapes.extend(((fi, fo), (fo,)))
    shapes.extend(((comp[-1],), (1,)))
    need = sum(int(np.prod(s)) for s in shapes) * 8
    body = data[start + hlen :]
    if len(body) != need:
        raise ModelLoadError(f"{path}: weight section has {len(body)} bytes, expected {need}")
    arrays = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f8", count=size, offset=offset).astype(np.float64)
        arrays.append(arr.reshape(shape))
        offset += size * 8
    mean, std, *weights = arrays
    n_sub = len(sub) - 1
    layers = [Dense(weights[2 * i], weights[2 * i + 1]) for i in range(len(weights) // 2)]
    model = SiameseModel(
        subnet=layers[:n_sub],
        comparator=layers[n_sub:-1],
        out_w=layers[-1].W,
        out_b=layers[-1].b,
        mean=mean,
        std=std,
        flagged=[int(i) for i in header.get("flagged", [])],
        dropout_rate=float(header["dropout_rate"]),
        seed=int(header["seed"]),
        hyperparams=dict(header.get("hyperparams", {})),
    )
    return model
