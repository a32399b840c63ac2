"""Synthetic in-distribution / out-of-distribution datasets.

``bench-v1`` is the frozen benchmark: three unit-covariance Gaussian blobs
with centres on a radius-5 circle, 1500/500/500 train/val/test points, and
1000 OOD points uniform (in area) on the annulus 15 <= r <= 20.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = ["DatasetSpec", "SyntheticDataset", "generate_dataset", "BENCH_V1", "bayes_blob_classifier"]

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "blobs"  # "blobs" or "moons"
    n_classes: int = 3
    radius: float = 5.0
    std: float = 1.0
    moon_noise: float = 0.1
    n_train: int = 1500
    n_val: int = 500
    n_test: int = 500
    ood_kind: str = "ring"  # "ring" or "shifted_blobs"
    ood_inner: float = 15.0
    ood_outer: float = 20.0
    ood_shift: float = 12.0
    n_ood: int = 1000

    def __post_init__(self):
        if self.kind not in ("blobs", "moons"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.ood_kind not in ("ring", "shifted_blobs"):
            raise ValueError(f"unknown OOD kind {self.ood_kind!r}")
        if self.kind == "moons" and self.n_classes != 2:
            raise ValueError("two-moons has exactly 2 classes")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.std <= 0.0 or self.moon_noise < 0.0:
            raise ValueError("degenerate covariance: std must be > 0")
        if min(self.n_train, self.n_val, self.n_test, self.n_ood) <= 0:
            raise ValueError("every split needs at least one sample")
        if not 0.0 < self.ood_inner < self.ood_outer:
            raise ValueError("OOD ring needs 0 < inner < outer")

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(mapping) - set(known)
        if unknown:
            raise ValueError(f"unknown dataset keys: {sorted(unknown)}")
        defaults = cls()
        kw = {k: type(getattr(defaults, k))(v) for k, v in mapping.items()}
        return cls(**kw)

    def to_dict(self):
        return asdict(self)


BENCH_V1 = DatasetSpec()


@dataclass
class SyntheticDataset:
    """ID features/labels with per-row split tags, plus an OOD feature set."""

    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    ood_features: np.ndarray
    spec: DatasetSpec

    def subset(self, tag):
        if tag not in SPLITS:
            raise ValueError(f"unknown split {tag!r}")
        mask = self.split == tag
        return self.features[mask], self.labels[mask]

    @property
    def K(self):
        return self.spec.n_classes


def blob_centers(spec):
    angles = 2.0 * np.pi * np.arange(spec.n_classes) / spec.n_classes
    return spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def bayes_blob_classifier(spec):
    """Bayes-optimal rule for equal-weight, equal isotropic-covariance blobs:
    the nearest centre."""
    centers = blob_centers(spec)

    def predict(x):
        d = np.sum((np.asarray(x)[:, None, :] - centers[None]) ** 2, axis=-1)
        return np.argmin(d, axis=1)

    return predict


def _balanced_labels(n, K):
    return np.arange(n) % K


def _sample_blobs(spec, labels, rng):
    centers = blob_centers(spec)
    x = centers[labels] + spec.std * rng.standard_normal((len(labels), 2))
    # truncate to the disc inside the OOD ring so the two sets are disjoint
    if spec.ood_kind == "ring":
        while True:
            bad = np.linalg.norm(x, axis=1) >= spec.ood_inner
            if not bad.any():
                break
            x[bad] = centers[labels[bad]] + spec.std * rng.standard_normal((int(bad.sum()), 2))
    return x


def _sample_moons(spec, labels, rng):
    t = rng.uniform(0.0, np.pi, size=len(labels))
    upper = np.stack([np.cos(t), np.sin(t)], axis=1)
    lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    x = np.where((labels == 0)[:, None], upper, lower)
    return x + spec.moon_noise * rng.standard_normal(x.shape)


def _sample_ood(spec, rng):
    n = spec.n_ood
    if spec.ood_kind == "ring":
        r = np.sqrt(rng.uniform(spec.ood_inner**2, spec.ood_outer**2, size=n))
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    # shifted blobs: the ID centres moved outward by ood_shift along their rays
    centers = blob_centers(spec)
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    shifted = centers + spec.ood_shift * centers / np.where(norms > 0, norms, 1.0)
    which = rng.integers(0, spec.n_classes, size=n)
    return shifted[which] + spec.std * rng.standard_normal((n, 2))


def generate_dataset(spec=BENCH_V1, rng=None, seed=None):
    """Deterministic synthetic dataset; pass either a Generator or a seed."""
    if rng is None:
        rng = np.random.default_rng(seed)
    n_id = spec.n_train + spec.n_val + spec.n_test
    labels = _balanced_labels(n_id, spec.n_classes)
    if spec.kind == "blobs":
        x = _sample_blobs(spec, labels, rng)
    else:
        x = _sample_moons(spec, labels, rng)
    perm = rng.permutation(n_id)
    x, labels = x[perm], labels[perm]
    split = np.empty(n_id, dtype=object)
    split[: spec.n_train] = "train"
    split[spec.n_train : spec.n_train + spec.n_val] = "val"
    split[spec.n_train + spec.n_val :] = "test"
    return SyntheticDataset(x, labels, split.astype(str), _sample_ood(spec, rng), spec)
