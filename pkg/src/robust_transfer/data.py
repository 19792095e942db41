"""Synthetic datasets, Gaussian-noise corruption, CSV I/O and splits."""
import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from ._rng import stream
from .errors import InputError, ParseError

MAX_DIRECTION_TRIES = 100_000


@dataclass(eq=False)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    feature_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] == 0:
            raise InputError("a dataset needs a non-empty (n, d) input array")
        if not np.all(np.isfinite(self.inputs)):
            raise InputError("dataset inputs contain non-finite values")
        labels = np.asarray(self.labels)
        if labels.shape[0] != self.inputs.shape[0]:
            raise InputError(f"{labels.shape[0]} labels for {self.inputs.shape[0]} inputs")
        if labels.ndim == 1 and np.issubdtype(labels.dtype, np.integer):
            if labels.min() < 0:
                raise InputError("class labels must be non-negative")
            self.labels = labels.astype(np.int64)
        else:
            self.labels = labels.astype(np.float64).reshape(labels.shape[0], -1)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def is_classification(self):
        return self.labels.ndim == 1

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if self.is_classification else None

    def take(self, idx, name=None):
        return Dataset(self.inputs[idx], self.labels[idx], name or self.name, self.feature_range)


def _unit_directions(k, d, rng):
    dirs = []
    tries = 0
    while len(dirs) < k:
        tries += 1
        if tries > MAX_DIRECTION_TRIES:
            raise InputError(f"could not place {k} class directions at least 60 degrees apart in {d} dimensions; "
                             "use fewer classes or more dimensions")
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        if all(float(u @ v) <= 0.5 for v in dirs):
            dirs.append(u)
    return np.array(dirs)


def gen_blobs(k, d, n_per_class, separation=8.0, spread=1.0, seed=0, name="blobs"):
    """Gaussian blobs around centers ``separation * u_c``, min-max scaled into [0, 1]^d.

    The unit directions ``u_c`` are rejection-sampled so every pair is at
    least 60 degrees apart. Labels are grouped by class (class 0 first).
    """
    if k < 2:
        raise InputError("gen_blobs needs at least 2 classes")
    if d < 1 or n_per_class < 1:
        raise InputError("d and n_per_class must be positive")
    if not separation > 0 or not spread >= 0:
        raise InputError("separation must be positive and spread non-negative")
    rng = stream(seed, "data", 0)
    centers = separation * _unit_directions(k, d, rng)
    noise = rng.standard_normal((k * n_per_class, d))
    labels = np.repeat(np.arange(k), n_per_class)
    X = centers[labels] + spread * noise
    lo, hi = X.min(axis=0), X.max(axis=0)
    width = np.where(hi > lo, hi - lo, 1.0)
    X = np.clip((X - lo) / width, 0.0, 1.0)
    return Dataset(X, labels, name, (0.0, 1.0))


def gen_factor_regression(d, n, n_factors, target_factor, seed=0, noise=0.01, mixing=None, name="factors"):
    """Regression on latent factors: inputs ``tanh(A z) + noise`` and target ``z[target_factor]``.

    ``z`` is uniform on [0, 1]^n_factors and ``A`` is a fixed seeded Gaussian
    mixing matrix (or ``mixing`` when given). Inputs depend only on ``seed``,
    so datasets for different target factors share their inputs.
    """
    if not 0 <= target_factor < n_factors <= d:
        raise InputError("need 0 <= target_factor < n_factors <= d")
    if n < 1 or noise < 0:
        raise InputError("n must be positive and noise non-negative")
    z = stream(seed, "data", 1).uniform(0.0, 1.0, size=(n, n_factors))
    if mixing is None:
        A = stream(seed, "mixing").standard_normal((d, n_factors)) / math.sqrt(n_factors)
    else:
        A = np.asarray(mixing, dtype=np.float64)
        if A.shape != (d, n_factors):
            raise InputError(f"mixing matrix must have shape {(d, n_factors)}")
    X = np.tanh(z @ A.T)
    if noise > 0:
        X = np.clip(X + noise * stream(seed, "noise", 0).standard_normal(X.shape), -1.0, 1.0)
    return Dataset(X, z[:, [target_factor]], f"{name}-z{target_factor}", (-1.0, 1.0))


def corrupt_gaussian(ds, severity, seed=0):
    """Add N(0, severity^2) noise to every feature, then clamp to the feature range."""
    if severity < 0:
        raise InputError("severity must be non-negative")
    if ds.feature_range is None:
        raise InputError("corrupt_gaussian needs a dataset with a feature_range")
    if severity == 0:
        return Dataset(ds.inputs.copy(), ds.labels.copy(), ds.name, ds.feature_range)
    lo, hi = ds.feature_range
    noise = stream(seed, "noise", 1).standard_normal(ds.inputs.shape)
    X = np.clip(ds.inputs + severity * noise, lo, hi)
    return Dataset(X, ds.labels.copy(), f"{ds.name}-gauss{severity:g}", ds.feature_range)


def split(ds, fraction=0.8, seed=0):
    """Seeded shuffle followed by a prefix split into (train, test)."""
    if not 0 < fraction < 1:
        raise InputError("fraction must lie strictly between 0 and 1")
    n = len(ds)
    order = stream(seed, "split").permutation(n)
    n_train = int(round(fraction * n))
    return ds.take(order[:n_train], f"{ds.name}-train"), ds.take(order[n_train:], f"{ds.name}-test")


def save_csv(ds, path):
    d = ds.dim
    header = [f"f{i}" for i in range(d)]
    if ds.is_classification:
        header.append("label")
    else:
        header += [f"t{i}" for i in range(ds.labels.shape[1])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, y in zip(ds.inputs, ds.labels):
            row = [repr(float(v)) for v in x]
            if ds.is_classification:
                row.append(str(int(y)))
            else:
                row += [repr(float(v)) for v in y]
            writer.writerow(row)


def load_csv(path, feature_range=None, name=None):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = 0
    while d < len(header) and header[d] == f"f{d}":
        d += 1
    rest = header[d:]
    if d == 0:
        raise ParseError(f"{path}, line 1: header must start with f0")
    if rest == ["label"]:
        classification = True
    elif rest and rest == [f"t{i}" for i in range(len(rest))]:
        classification = False
    else:
        raise ParseError(f"{path}, line 1: unknown label column(s) {rest!r}; expected 'label' or t0, t1, ...")
    width = len(header)
    inputs, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"{path}, line {lineno}: expected {width} cells, found {len(row)}")
        try:
            x = [float(v) for v in row[:d]]
            if classification:
                y = int(row[d])
            else:
                y = [float(v) for v in row[d:]]
        except ValueError:
            raise ParseError(f"{path}, line {lineno}: non-numeric cell") from None
        if not all(math.isfinite(v) for v in x):
            raise ParseError(f"{path}, line {lineno}: non-finite feature value")
        inputs.append(x)
        labels.append(y)
    if not inputs:
        raise ParseError(f"{path}: no data rows (header only)")
    labels = np.array(labels, dtype=np.int64 if classification else np.float64)
    return Dataset(np.array(inputs), labels, name or str(path), feature_range)


def with_range(ds, feature_range):
    return replace(ds, feature_range=feature_range)
