"""Synthetic domain pairs, feature-file ingestion and paired batching.

Classes are isotropic Gaussian blobs; the domain gap for shared classes
is an affine map (rotation in a random plane, translation, scale and
noise inflation).  Label ids are dense integers with the label-set
partition deciding which ids appear in which domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, FeatureFileError

#: reserved "unknown" class symbol, distinct from every real class id
TAU = -1

DOMAINS = ("source", "target")


@dataclass(frozen=True)
class LabelSetSpec:
    """Partition of class ids into shared, source-private and target-private."""

    shared: tuple[int, ...]
    source_private: tuple[int, ...] = ()
    target_private: tuple[int, ...] = ()

    def __post_init__(self):
        all_ids = (*self.shared, *self.source_private, *self.target_private)
        if len(set(all_ids)) != len(all_ids):
            raise ConfigError("label sets must be pairwise disjoint")
        if TAU in all_ids:
            raise ConfigError(f"class id {TAU} is reserved for the unknown symbol")
        if not self.shared and not self.source_private:
            raise ConfigError("source label set must be non-empty")

    @property
    def source_labels(self) -> tuple[int, ...]:
        return (*self.shared, *self.source_private)

    @property
    def target_labels(self) -> tuple[int, ...]:
        return (*self.shared, *self.target_private)

    @property
    def all_labels(self) -> tuple[int, ...]:
        return (*self.shared, *self.source_private, *self.target_private)

    @property
    def jaccard(self) -> float:
        """|shared| / |union of both label sets|."""
        return len(self.shared) / len(self.all_labels)


@dataclass(frozen=True)
class ShiftConfig:
    """Affine domain shift applied to shared-class target samples."""

    rotation: float = 0.0   # radians, in a seeded random 2-d subspace
    translation: float = 0.0  # magnitude of a seeded random direction
    scale: float = 1.0
    noise: float = 1.0      # multiplier on the target sampling noise

    @classmethod
    def identity(cls) -> "ShiftConfig":
        return cls()


@dataclass(frozen=True)
class DomainDataset:
    """Feature rows plus labels; target labels are evaluation-only."""

    features: np.ndarray
    labels: np.ndarray
    domain: str

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if len(self.features) != len(self.labels):
            raise ConfigError("features and labels must align")

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class DomainBatch:
    """One paired mini-batch: labeled source half, unlabeled target half."""

    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray


def _rotation_matrix(dim: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation by ``angle`` in a random 2-d subspace of R^dim."""
    q, _ = np.linalg.qr(rng.normal(size=(dim, 2)))
    u, v = q[:, 0], q[:, 1]
    c, s = np.cos(angle), np.sin(angle)
    # R = I + (c-1)(uu^T + vv^T) + s(vu^T - uv^T)
    return (np.eye(dim) + (c - 1.0) * (np.outer(u, u) + np.outer(v, v))
            + s * (np.outer(v, u) - np.outer(u, v)))


def gen_synthetic(spec: LabelSetSpec, dim: int, per_class: int,
                  shift: ShiftConfig, seed: int, blob_std: float = 1.0,
                  center_scale: float = 3.0) -> tuple[DomainDataset, DomainDataset]:
    """Gaussian-blob source/target pair with the given label-set geometry.

    Shared-class target blobs are the source blobs pushed through the
    affine shift; private classes get fresh centers.  Identical seeds
    reproduce identical datasets bit-for-bit.
    """
    if dim < 2:
        raise ConfigError(f"dim must be >= 2, got {dim}")
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    rng = np.random.default_rng(seed)
    centers = {y: rng.normal(0.0, center_scale, size=dim) for y in spec.all_labels}
    rot = _rotation_matrix(dim, shift.rotation, rng)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    offset = shift.translation * direction

    def _sample(center, n, std):
        return center[None, :] + rng.normal(0.0, std, size=(n, dim))

    src_x, src_y = [], []
    for y in spec.source_labels:
        src_x.append(_sample(centers[y], per_class, blob_std))
        src_y.append(np.full(per_class, y))

    tgt_x, tgt_y = [], []
    for y in spec.shared:
        raw = _sample(centers[y], per_class, blob_std * shift.noise)
        tgt_x.append(shift.scale * raw @ rot.T + offset)
        tgt_y.append(np.full(per_class, y))
    for y in spec.target_private:
        tgt_x.append(_sample(centers[y], per_class, blob_std * shift.noise))
        tgt_y.append(np.full(per_class, y))

    source = DomainDataset(np.concatenate(src_x), np.concatenate(src_y), "source")
    target = DomainDataset(np.concatenate(tgt_x), np.concatenate(tgt_y), "target")
    return source, target


def sample_batch(src: DomainDataset, tgt: DomainDataset, batch_size: int,
                 rng: np.random.Generator) -> DomainBatch:
    """Equal halves drawn uniformly with replacement from each domain."""
    if batch_size < 2 or batch_size % 2 != 0:
        raise ContractError(f"batch_size must be even and >= 2, got {batch_size}")
    if src.n == 0 or tgt.n == 0:
        raise ContractError("cannot sample from an empty dataset")
    half = batch_size // 2
    si = rng.integers(0, src.n, size=half)
    ti = rng.integers(0, tgt.n, size=half)
    return DomainBatch(source_x=src.features[si], source_y=src.labels[si],
                       target_x=tgt.features[ti])


# ---------------------------------------------------------------------------
# feature-file io: header line, one sample per row, optional trailing label


def save_features(path, dataset: DomainDataset, labeled: bool = True) -> None:
    with open(path, "w") as fh:
        fh.write(f"# dim={dataset.dim} count={dataset.n} "
                 f"labeled={int(labeled)}\n")
        for x, y in zip(dataset.features, dataset.labels):
            row = "\t".join(repr(float(v)) for v in x)
            if labeled:
                row += f"\t{int(y)}"
            fh.write(row + "\n")


def load_features(path, domain: str, labeled: bool) -> DomainDataset:
    """Parse a feature file; any malformed line aborts with its line number."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FeatureFileError(f"{path}: empty file")
    header = lines[0]
    if not header.startswith("#"):
        raise FeatureFileError(f"{path}:1: missing header line")
    fields = dict(kv.split("=") for kv in header.lstrip("#").split())
    try:
        dim, count = int(fields["dim"]), int(fields["count"])
        file_labeled = bool(int(fields.get("labeled", "1")))
    except (KeyError, ValueError) as exc:
        raise FeatureFileError(f"{path}:1: bad header: {exc}") from exc
    if labeled and not file_labeled:
        raise FeatureFileError(f"{path}: labels requested but file is unlabeled")
    expected_cols = dim + (1 if file_labeled else 0)
    feats = np.empty((count, dim))
    labels = np.full(count, TAU)
    body = lines[1:]
    if len(body) != count:
        raise FeatureFileError(
            f"{path}: header promises {count} rows, found {len(body)}")
    for i, line in enumerate(body):
        parts = line.split("\t")
        if len(parts) != expected_cols:
            raise FeatureFileError(
                f"{path}:{i + 2}: expected {expected_cols} columns, got {len(parts)}")
        try:
            feats[i] = [float(v) for v in parts[:dim]]
            if file_labeled:
                labels[i] = int(parts[dim])
        except ValueError as exc:
            raise FeatureFileError(f"{path}:{i + 2}: non-numeric field: {exc}") from exc
    if not labeled:
        labels = np.full(count, TAU)
    return DomainDataset(feats, labels, domain)


# ---------------------------------------------------------------------------
# the desk-scale benchmark used throughout the acceptance runs


def benchmark_label_spec() -> LabelSetSpec:
    """4 shared, 2 source-private, 6 target-private classes (overlap 1/3)."""
    return LabelSetSpec(shared=(0, 1, 2, 3), source_private=(4, 5),
                        target_private=(6, 7, 8, 9, 10, 11))


def benchmark_shift() -> ShiftConfig:
    return ShiftConfig(rotation=0.6, translation=1.5, scale=1.0, noise=1.5)
