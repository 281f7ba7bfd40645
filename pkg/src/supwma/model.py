"""Streamline classifier: shared-MLP point encoder, projector, FC classifier.

The encoder runs every point of a streamline through the same dense+ReLU
stack (3 -> 64 -> 128 -> 1024 by default) and max-pools the encoded
points column-wise into one global shape feature per streamline.  There
are no input/feature alignment sub-networks: absolute position carries
the class signal, so the encoding must not be pose-normalized.  Pooling
makes the feature invariant to point order, so a streamline and its
reverse encode identically.

The classifier maps the global feature through 512 -> 256 -> k dense
layers (ReLU on the hidden ones).  The projector (1024 -> 1024 -> 128,
ReLU between, then row L2 normalization) exists only for contrastive
pretraining and is not part of the inference path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .nn_core import (
    DenseLayer,
    dense_backward,
    dense_forward,
    dense_init,
    l2_normalize_backward,
    l2_normalize_forward,
    maxpool_batch,
    maxpool_batch_backward,
    relu_backward,
    relu_forward,
    seeded_rng,
)

CHECKPOINT_MAGIC = b"SWC1"
CHECKPOINT_VERSION = 1
DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class ArchDescriptor:
    """Architecture hyperparameters.

    ``with_tnets`` only affects the FLOPs estimator (ablation mode); the
    network itself never builds alignment nets.
    """

    n_points: int = 15
    encoder_dims: tuple = (64, 128, 1024)
    classifier_dims: tuple = (512, 256)
    projector_dims: tuple = (1024, 128)
    n_classes: int = 199
    with_tnets: bool = False

    def __post_init__(self):
        dims = (
            (self.n_points,)
            + tuple(self.encoder_dims)
            + tuple(self.classifier_dims)
            + tuple(self.projector_dims)
        )
        if any(int(d) < 1 for d in dims):
            raise ValueError("all architecture dimensions must be >= 1")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")

    @property
    def global_dim(self) -> int:
        return self.encoder_dims[-1]

    def layer_shapes(self) -> dict:
        """(fan_in, fan_out) chains for each sub-network."""
        enc = list(zip((3,) + tuple(self.encoder_dims[:-1]), self.encoder_dims))
        proj_dims = (self.global_dim,) + tuple(self.projector_dims)
        proj = list(zip(proj_dims[:-1], proj_dims[1:]))
        cla_dims = (self.global_dim,) + tuple(self.classifier_dims) + (self.n_classes,)
        cla = list(zip(cla_dims[:-1], cla_dims[1:]))
        return {"encoder": enc, "projector": proj, "classifier": cla}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_dims"] = list(self.encoder_dims)
        d["classifier_dims"] = list(self.classifier_dims)
        d["projector_dims"] = list(self.projector_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchDescriptor":
        return cls(
            n_points=int(d["n_points"]),
            encoder_dims=tuple(d["encoder_dims"]),
            classifier_dims=tuple(d["classifier_dims"]),
            projector_dims=tuple(d["projector_dims"]),
            n_classes=int(d["n_classes"]),
            with_tnets=bool(d.get("with_tnets", False)),
        )


@dataclass
class ModelBundle:
    """Parameter collections for encoder, projector, and classifier."""

    arch: ArchDescriptor
    encoder: list = field(default_factory=list)
    projector: list = field(default_factory=list)
    classifier: list = field(default_factory=list)

    def all_layers(self) -> list:
        return list(self.encoder) + list(self.projector) + list(self.classifier)


def layer_params(layers) -> list:
    """Flat parameter list (weights, bias alternating) for the optimizer."""
    out = []
    for layer in layers:
        out.append(layer.weights)
        out.append(layer.bias)
    return out


def build_model(arch: ArchDescriptor, seed: int = 0) -> ModelBundle:
    """Deterministic Glorot initialization of all three sub-networks."""
    rng = seeded_rng(seed)
    shapes = arch.layer_shapes()
    return ModelBundle(
        arch=arch,
        encoder=[dense_init(i, o, rng) for i, o in shapes["encoder"]],
        projector=[dense_init(i, o, rng) for i, o in shapes["projector"]],
        classifier=[dense_init(i, o, rng) for i, o in shapes["classifier"]],
    )


# ---------------------------------------------------------------------------
# Forward / backward passes
# ---------------------------------------------------------------------------

@dataclass
class EncodeCache:
    inputs: list          # per dense layer: its input matrix
    masks: list           # per dense layer: ReLU mask at its output
    argmax: np.ndarray    # (M, global_dim) winning point index per column
    batch_size: int


def encode(bundle: ModelBundle, batch: np.ndarray):
    """Global shape features for a (M, n_points, 3) batch.

    Returns (features (M, global_dim), cache for encode_backward).  The
    same dense stack is applied to every point, then each feature column
    is max-pooled over the streamline's points, so the output is
    invariant to point order.
    """
    arch = bundle.arch
    if batch.ndim != 3 or batch.shape[1:] != (arch.n_points, 3):
        raise ValueError(
            f"batch shape {batch.shape} does not match (M, {arch.n_points}, 3)"
        )
    rows = batch.shape[0]
    x = batch.reshape(rows * arch.n_points, 3)
    inputs, masks = [], []
    for layer in bundle.encoder:
        inputs.append(x)
        x, mask = relu_forward(dense_forward(layer, x))
        masks.append(mask)
    per_point = x.reshape(rows, arch.n_points, arch.global_dim)
    pooled, argmax = maxpool_batch(per_point)
    return pooled, EncodeCache(inputs, masks, argmax, rows)


def encode_backward(bundle: ModelBundle, cache: EncodeCache, grad_pooled: np.ndarray):
    """Per-layer (grad_weights, grad_bias) for the encoder stack."""
    arch = bundle.arch
    grad = maxpool_batch_backward(cache.argmax, arch.n_points, grad_pooled)
    grad = grad.reshape(cache.batch_size * arch.n_points, arch.global_dim)
    grads = [None] * len(bundle.encoder)
    for idx in range(len(bundle.encoder) - 1, -1, -1):
        grad = relu_backward(cache.masks[idx], grad)
        grad, grad_w, grad_b = dense_backward(bundle.encoder[idx], cache.inputs[idx], grad)
        grads[idx] = (grad_w, grad_b)
    return grads


@dataclass
class ProjectCache:
    features: np.ndarray
    hidden: np.ndarray
    mask: np.ndarray
    normalized: np.ndarray
    norms: np.ndarray


def project(bundle: ModelBundle, features: np.ndarray):
    """Contrastive features: dense -> ReLU -> dense -> row L2 normalize."""
    first, second = bundle.projector
    hidden, mask = relu_forward(dense_forward(first, features))
    normalized, norms = l2_normalize_forward(dense_forward(second, hidden))
    return normalized, ProjectCache(features, hidden, mask, normalized, norms)


def project_backward(bundle: ModelBundle, cache: ProjectCache, grad_z: np.ndarray):
    """Returns (per-layer grads, grad w.r.t. the encoder features)."""
    first, second = bundle.projector
    grad = l2_normalize_backward(cache.normalized, cache.norms, grad_z)
    grad, grad_w2, grad_b2 = dense_backward(second, cache.hidden, grad)
    grad = relu_backward(cache.mask, grad)
    grad_features, grad_w1, grad_b1 = dense_backward(first, cache.features, grad)
    return [(grad_w1, grad_b1), (grad_w2, grad_b2)], grad_features


@dataclass
class ClassifyCache:
    inputs: list
    masks: list


def classify(bundle: ModelBundle, features: np.ndarray):
    """Class logits from global features; hidden layers ReLU, output linear."""
    inputs, masks = [], []
    x = features
    last = len(bundle.classifier) - 1
    for idx, layer in enumerate(bundle.classifier):
        inputs.append(x)
        x = dense_forward(layer, x)
        if idx < last:
            x, mask = relu_forward(x)
            masks.append(mask)
    return x, ClassifyCache(inputs, masks)


def classify_backward(bundle: ModelBundle, cache: ClassifyCache, grad_logits: np.ndarray):
    """Returns (per-layer grads, grad w.r.t. the global features)."""
    grads = [None] * len(bundle.classifier)
    grad = grad_logits
    last = len(bundle.classifier) - 1
    for idx in range(last, -1, -1):
        if idx < last:
            grad = relu_backward(cache.masks[idx], grad)
        grad, grad_w, grad_b = dense_backward(bundle.classifier[idx], cache.inputs[idx], grad)
        grads[idx] = (grad_w, grad_b)
    return grads, grad


def encode_features(bundle: ModelBundle, batch: np.ndarray, chunk: int = DEFAULT_CHUNK):
    """Encoder forward only, chunked to bound memory; no cache kept."""
    rows = batch.shape[0]
    out = np.empty((rows, bundle.arch.global_dim))
    for start in range(0, rows, chunk):
        stop = min(start + chunk, rows)
        out[start:stop], _ = encode(bundle, batch[start:stop])
    return out


def predict_features(bundle: ModelBundle, batch: np.ndarray, chunk: int = DEFAULT_CHUNK):
    """Argmax class per already-resampled streamline; ties pick the lowest index."""
    rows = batch.shape[0]
    labels = np.empty(rows, dtype=np.int64)
    for start in range(0, rows, chunk):
        stop = min(start + chunk, rows)
        pooled, _ = encode(bundle, batch[start:stop])
        logits, _ = classify(bundle, pooled)
        labels[start:stop] = np.argmax(logits, axis=1)
    return labels


def predict(bundle: ModelBundle, streamline_set, chunk: int = DEFAULT_CHUNK):
    """Class labels for raw streamlines; resamples to the model's point count."""
    batch = geometry.to_feature_batch(streamline_set, bundle.arch.n_points)
    return predict_features(bundle, batch, chunk)


# ---------------------------------------------------------------------------
# FLOPs accounting
# ---------------------------------------------------------------------------

def count_flops(arch: ArchDescriptor) -> int:
    """Multiply-accumulate count for one streamline's inference pass.

    Convention: 1 MAC per weight-input product in dense layers; biases
    and activations are free.  Only the encoder and classifier count
    (the projector is unused at inference).  With ``with_tnets`` the
    estimate adds two alignment networks in the standard layout (shared
    MLP 64/128/1024 over points, regression head 512/256, then a 3x3 or
    64x64 output map) plus the cost of applying each alignment to the
    point features.
    """
    enc_chain = (3,) + tuple(arch.encoder_dims)
    encoder = arch.n_points * sum(a * b for a, b in zip(enc_chain[:-1], enc_chain[1:]))
    cla_chain = (arch.global_dim,) + tuple(arch.classifier_dims) + (arch.n_classes,)
    classifier = sum(a * b for a, b in zip(cla_chain[:-1], cla_chain[1:]))
    total = encoder + classifier
    if arch.with_tnets:
        total += _alignment_net_flops(arch.n_points, 3)
        total += _alignment_net_flops(arch.n_points, 64)
    return total


def _alignment_net_flops(n_points: int, dim: int) -> int:
    """One dim x dim alignment net: shared MLP, pooled head, transform apply."""
    shared = n_points * (dim * 64 + 64 * 128 + 128 * 1024)
    head = 1024 * 512 + 512 * 256 + 256 * dim * dim
    apply_cost = n_points * dim * dim
    return shared + head + apply_cost


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _array_walk(bundle: ModelBundle):
    """Fixed (name, array) order shared by save and load."""
    for group_name, layers in (
        ("encoder", bundle.encoder),
        ("projector", bundle.projector),
        ("classifier", bundle.classifier),
    ):
        for idx, layer in enumerate(layers):
            yield f"{group_name}.{idx}.weights", layer.weights
            yield f"{group_name}.{idx}.bias", layer.bias


def save_checkpoint(bundle: ModelBundle, path) -> None:
    """Versioned container: JSON header, then raw float64 little-endian blocks."""
    entries = list(_array_walk(bundle))
    header = {
        "format_version": CHECKPOINT_VERSION,
        "arch": bundle.arch.to_dict(),
        "arrays": [[name, list(arr.shape)] for name, arr in entries],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    for _, arr in entries:
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> ModelBundle:
    """Rebuild a bundle; validates magic, version, and shape consistency."""
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("checkpoint: bad magic")
    (header_len,) = struct.unpack_from("<I", data, 4)
    if 8 + header_len > len(data):
        raise ValueError("checkpoint: truncated header")
    header = json.loads(data[8 : 8 + header_len].decode())
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint: unsupported format version {header.get('format_version')}"
        )
    arch = ArchDescriptor.from_dict(header["arch"])
    shapes = arch.layer_shapes()
    expected = []
    for group in ("encoder", "projector", "classifier"):
        for idx, (fan_in, fan_out) in enumerate(shapes[group]):
            expected.append((f"{group}.{idx}.weights", (fan_in, fan_out)))
            expected.append((f"{group}.{idx}.bias", (fan_out,)))
    stored = [(name, tuple(shape)) for name, shape in header["arrays"]]
    if stored != expected:
        raise ValueError("checkpoint: array layout inconsistent with architecture")

    offset = 8 + header_len
    arrays = []
    for name, shape in expected:
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(data):
            raise ValueError(f"checkpoint: truncated at array {name}")
        arrays.append(
            np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset = end
    if offset != len(data):
        raise ValueError("checkpoint: trailing bytes")

    def take_layers(num):
        taken = [
            DenseLayer(arrays.pop(0), arrays.pop(0)) for _ in range(num)
        ]
        return taken

    return ModelBundle(
        arch=arch,
        encoder=take_layers(len(shapes["encoder"])),
        projector=take_layers(len(shapes["projector"])),
        classifier=take_layers(len(shapes["classifier"])),
    )
