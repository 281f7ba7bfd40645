"""Deterministic synthetic streamline corpus.

Clusters are noisy samples of parametric space curves (arcs, u-shaped
fibers, helix segments) placed at fixed poses in RAS space.  Two
deliberate difficulties mirror what makes real parcellation hard:

* confusable pairs: cluster pairs with bitwise-identical shape
  parameters that differ only by a small translation, so any
  pose-invariant featurization cannot separate them;
* an outlier class: streamlines drawn from randomly re-posed, jittered
  cluster prototypes, geometrically similar to the clusters but off
  their manifolds, all sharing one reserved label (cluster count C).

Everything is a pure function of the config: same seed, same bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .geometry import StreamlineSet, write_labels, write_slp

CURVE_FAMILIES = ("arc", "u_fiber", "helix")

_GRID_SPACING_MM = 60.0
_GRID_JITTER_MM = 5.0
_CONFUSABLE_OFFSET_SIGMAS = 10.0  # pair translation gap, in point-noise units


@dataclass(frozen=True)
class ClusterPrototype:
    """Pose and shape of one cluster's generating curve."""

    cluster_id: int
    family: str
    radius_mm: float
    span: float
    torsion: float
    rotation: np.ndarray      # (3, 3)
    translation: np.ndarray   # (3,)
    point_noise_mm: float
    endpoint_jitter_mm: float

    def __post_init__(self):
        if self.family not in CURVE_FAMILIES:
            raise ValueError(f"unknown curve family {self.family!r}")
        if self.radius_mm <= 0:
            raise ValueError("radius must be positive")
        if self.point_noise_mm < 0 or self.endpoint_jitter_mm < 0:
            raise ValueError("noise levels must be non-negative")


@dataclass(frozen=True)
class GenConfig:
    """Corpus layout; fractions are train/val/test and must sum to 1."""

    seed: int = 0
    clusters: int = 20
    per_cluster: int = 950
    outlier_fraction: float = 0.05
    outlier_scale: float = 4.0
    confusable_pairs: int = 2
    fractions: tuple = (0.7, 0.1, 0.2)
    raw_points: int = 32
    point_noise_mm: float = 1.0
    endpoint_jitter_mm: float = 0.5

    def __post_init__(self):
        if self.clusters < 2:
            raise ValueError("need at least 2 clusters")
        if self.per_cluster < 1:
            raise ValueError("per_cluster must be >= 1")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if 2 * self.confusable_pairs > self.clusters:
            raise ValueError("confusable pairs cannot cover more than all clusters")
        fr = np.asarray(self.fractions, dtype=np.float64)
        if fr.shape != (3,) or np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
            raise ValueError("fractions must be 3 non-negative values summing to 1")
        if self.raw_points < 30:
            raise ValueError("raw_points must be >= 30 for a dense polyline")

    @property
    def outlier_count(self) -> int:
        plausible = self.clusters * self.per_cluster
        return int(round(plausible * self.outlier_fraction / (1.0 - self.outlier_fraction)))

    @property
    def num_classes(self) -> int:
        # reserved outlier label == clusters
        return self.clusters + 1


def _rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    cross = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return c * np.eye(3) + s * cross + (1.0 - c) * np.outer(axis, axis)


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return _rotation_matrix(axis, rng.uniform(0.0, 2.0 * np.pi))


def curve_points(family: str, radius: float, span: float, torsion: float, t: np.ndarray):
    """Evaluate the analytic curve at parameter values t in [0, 1]."""
    if family == "arc":
        theta = span * (t - 0.5)
        return np.column_stack(
            [radius * np.cos(theta), radius * np.sin(theta), np.zeros_like(theta)]
        )
    if family == "u_fiber":
        u = 2.0 * t - 1.0
        return np.column_stack(
            [0.5 * radius * span * u, radius * (1.0 - u * u), torsion * u]
        )
    if family == "helix":
        theta = span * (t - 0.5)
        return np.column_stack(
            [radius * np.cos(theta), radius * np.sin(theta), torsion * theta]
        )
    raise ValueError(f"unknown curve family {family!r}")


def prototype_centroid(proto: ClusterPrototype, num_points: int = 64) -> np.ndarray:
    """Mean of the noiseless curve; used for separation checks."""
    t = np.linspace(0.0, 1.0, num_points)
    local = curve_points(proto.family, proto.radius_mm, proto.span, proto.torsion, t)
    return local.mean(axis=0) @ proto.rotation.T + proto.translation


def _grid_slots(count: int) -> np.ndarray:
    side = int(np.ceil(count ** (1.0 / 3.0)))
    coords = np.arange(side, dtype=np.float64) - (side - 1) / 2.0
    grid = np.array([[x, y, z] for x in coords for y in coords for z in coords])
    return grid[:count] * _GRID_SPACING_MM


def gen_prototypes(config: GenConfig) -> list:
    """Cluster prototypes on a coarse pose grid.

    Confusable pairs occupy ids (0, 1), (2, 3), ...; the second member of
    each pair copies the first's shape parameters and rotation bitwise
    and shifts the translation by 10x the point-noise sigma.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 0])))
    slots = _grid_slots(config.clusters)
    protos = []
    cluster = 0
    while cluster < config.clusters:
        family = CURVE_FAMILIES[cluster % len(CURVE_FAMILIES)]
        radius = rng.uniform(10.0, 20.0)
        if family == "u_fiber":
            span = rng.uniform(1.5, 2.5)
            torsion = rng.uniform(-3.0, 3.0)
        else:
            span = rng.uniform(0.5 * np.pi, 4.0 * np.pi / 3.0)
            torsion = rng.uniform(2.0, 5.0) if family == "helix" else 0.0
        rotation = _random_rotation(rng)
        translation = slots[cluster] + rng.uniform(
            -_GRID_JITTER_MM, _GRID_JITTER_MM, size=3
        )
        protos.append(
            ClusterPrototype(
                cluster_id=cluster,
                family=family,
                radius_mm=radius,
                span=span,
                torsion=torsion,
                rotation=rotation,
                translation=translation,
                point_noise_mm=config.point_noise_mm,
                endpoint_jitter_mm=config.endpoint_jitter_mm,
            )
        )
        cluster += 1
        if cluster < 2 * config.confusable_pairs:
            # partner: identical shape, nearby pose
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            offset = _CONFUSABLE_OFFSET_SIGMAS * config.point_noise_mm * direction
            first = protos[-1]
            protos.append(
                ClusterPrototype(
                    cluster_id=cluster,
                    family=first.family,
                    radius_mm=first.radius_mm,
                    span=first.span,
                    torsion=first.torsion,
                    rotation=first.rotation,
                    translation=first.translation + offset,
                    point_noise_mm=config.point_noise_mm,
                    endpoint_jitter_mm=config.endpoint_jitter_mm,
                )
            )
            cluster += 1
    return protos


def sample_streamline(
    proto: ClusterPrototype,
    rng: np.random.Generator,
    num_points: int = 32,
    reverse: bool | None = None,
) -> np.ndarray:
    """One noisy polyline along the prototype curve.

    Gaussian noise on every point, extra jitter on the endpoints.  When
    ``reverse`` is None the point order is flipped with probability 1/2,
    so both orientations occur in training data.
    """
    t = np.linspace(0.0, 1.0, num_points)
    local = curve_points(proto.family, proto.radius_mm, proto.span, proto.torsion, t)
    pts = local @ proto.rotation.T + proto.translation
    pts = pts + rng.normal(0.0, proto.point_noise_mm, size=(num_points, 3))
    jitter = rng.normal(0.0, proto.endpoint_jitter_mm, size=(2, 3))
    pts[0] += jitter[0]
    pts[-1] += jitter[1]
    if reverse is None:
        reverse = bool(rng.random() < 0.5)
    return pts[::-1].copy() if reverse else pts


def _perturbed_prototype(proto: ClusterPrototype, scale: float, rng: np.random.Generator):
    """Outlier generator: re-pose and jitter a cluster prototype."""
    sigma = proto.point_noise_mm
    wobble = _rotation_matrix(
        (lambda a: a / np.linalg.norm(a))(rng.normal(size=3)),
        rng.normal(0.0, 0.04 * scale),
    )
    return ClusterPrototype(
        cluster_id=-1,
        family=proto.family,
        radius_mm=max(1.0, proto.radius_mm * (1.0 + rng.normal(0.0, 0.04 * scale))),
        span=proto.span * (1.0 + rng.normal(0.0, 0.04 * scale)),
        torsion=proto.torsion + rng.normal(0.0, 0.1 * scale),
        rotation=proto.rotation @ wobble,
        translation=proto.translation + rng.normal(0.0, scale * sigma, size=3),
        point_noise_mm=proto.point_noise_mm,
        endpoint_jitter_mm=proto.endpoint_jitter_mm,
    )


def _split_counts(total: int, fractions) -> tuple:
    n_train = int(np.floor(fractions[0] * total))
    n_val = int(np.floor(fractions[1] * total))
    return n_train, n_val, total - n_train - n_val


def gen_dataset(config: GenConfig, out_dir) -> dict:
    """Generate, split, and write the corpus; returns the manifest dict.

    Output files: {train,val,test}.slp, {train,val,test}_labels.csv, and
    manifest.json recording the config, its hash, and per-class counts.
    Splits are stratified per class with floor rounding (remainder goes
    to test).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    protos = gen_prototypes(config)
    rng_sample = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 1])))
    rng_split = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 2])))

    streamlines, labels = [], []
    for proto in protos:
        for _ in range(config.per_cluster):
            streamlines.append(sample_streamline(proto, rng_sample, config.raw_points))
            labels.append(proto.cluster_id)
    outlier_label = config.clusters
    for _ in range(config.outlier_count):
        base = protos[int(rng_sample.integers(config.clusters))]
        noisy_proto = _perturbed_prototype(base, config.outlier_scale, rng_sample)
        streamlines.append(sample_streamline(noisy_proto, rng_sample, config.raw_points))
        labels.append(outlier_label)
    labels = np.asarray(labels, dtype=np.int64)

    split_indices = {"train": [], "val": [], "test": []}
    for cls in range(config.num_classes):
        members = np.flatnonzero(labels == cls)
        members = members[rng_split.permutation(len(members))]
        n_train, n_val, _ = _split_counts(len(members), config.fractions)
        split_indices["train"].append(members[:n_train])
        split_indices["val"].append(members[n_train : n_train + n_val])
        split_indices["test"].append(members[n_train + n_val :])

    manifest = {
        "format_version": 1,
        "config": asdict(config),
        "config_sha256": hashlib.sha256(
            json.dumps(asdict(config), sort_keys=True).encode()
        ).hexdigest(),
        "num_classes": config.num_classes,
        "outlier_label": outlier_label,
        "class_counts": {},
        "files": {},
    }
    for split, chunks in split_indices.items():
        idx = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        subset = StreamlineSet([streamlines[i] for i in idx], labels[idx])
        slp_name, csv_name = f"{split}.slp", f"{split}_labels.csv"
        write_slp(subset, out / slp_name)
        write_labels(subset.labels, out / csv_name)
        manifest["files"][split] = {"slp": slp_name, "labels": csv_name}
        counts = np.bincount(labels[idx], minlength=config.num_classes)
        manifest["class_counts"][split] = counts.tolist()

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
