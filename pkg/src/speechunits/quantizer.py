"""k-means codebook training and frame-to-unit assignment, plus the
unit/label purity analysis used to inspect what the units encode."""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .tensorfile import FormatError
from .units import UnitStream

CODEBOOK_MAGIC = b"CBOK"
CODEBOOK_VERSION = 1


@dataclass
class Codebook:
    k: int
    dim: int
    centroids: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=np.float32)
        if self.centroids.shape != (self.k, self.dim):
            raise ValueError(
                f"centroids shape {self.centroids.shape} != ({self.k}, {self.dim})")


def _sq_dists(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact squared distances (N, k), chunked to bound memory.

    Uses the difference form so near-ties resolve identically to a
    brute-force scan.
    """
    n = features.shape[0]
    k = centroids.shape[0]
    out = np.empty((n, k), dtype=np.float32)
    chunk = max(1, int(2_000_000 / max(k, 1)))
    for start in range(0, n, chunk):
        block = features[start:start + chunk]
        diff = block[:, None, :] - centroids[None, :, :]
        out[start:start + chunk] = (diff * diff).sum(axis=2)
    return out


def _assign_ids(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return _sq_dists(features, centroids).argmin(axis=1).astype(np.int32)


def _kmeanspp_init(features: np.ndarray, k: int,
                   rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    centroids = np.empty((k, features.shape[1]), dtype=np.float32)
    centroids[0] = features[rng.integers(n)]
    d2 = ((features - centroids[0]) ** 2).sum(axis=1).astype(np.float64)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # remaining mass is all zeros; fall back to any point not chosen
            idx = int(d2.argmax())
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = features[idx]
        nd2 = ((features - centroids[i]) ** 2).sum(axis=1).astype(np.float64)
        np.minimum(d2, nd2, out=d2)
    return centroids


def train_kmeans(features: np.ndarray, k: int, max_iters: int = 100,
                 seed: int = 0,
                 on_iteration: Callable[[int, float], None] | None = None,
                 ) -> Codebook:
    """Lloyd's algorithm from k-means++ seeding.

    Stops at an assignment fixpoint or after max_iters. Empty clusters are
    reseeded to the point farthest from its assigned centroid, which keeps k
    constant. Fully deterministic for a fixed seed.
    """
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    n, dim = features.shape
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    n_distinct = np.unique(features, axis=0).shape[0]
    if n_distinct < k:
        raise ValueError(
            f"degenerate input: only {n_distinct} distinct feature vectors "
            f"for k={k} clusters")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(features, k, rng)
    assignments = _assign_ids(features, centroids)
    prev_inertia = np.inf

    for it in range(max_iters):
        # update step: means of assigned points, empties reseeded
        counts = np.bincount(assignments, minlength=k).astype(np.float64)
        sums = np.zeros((k, dim), dtype=np.float64)
        np.add.at(sums, assignments, features.astype(np.float64))
        nonempty = counts > 0
        centroids[nonempty] = (sums[nonempty] / counts[nonempty, None]
                               ).astype(np.float32)
        if not nonempty.all():
            d2 = _sq_dists(features, centroids)
            point_d2 = d2[np.arange(n), assignments]
            for cluster in np.flatnonzero(~nonempty):
                far = int(point_d2.argmax())
                centroids[cluster] = features[far]
                assignments[far] = cluster
                point_d2[far] = 0.0

        d2 = _sq_dists(features, centroids)
        new_assignments = d2.argmin(axis=1).astype(np.int32)
        inertia_now = float(d2[np.arange(n), new_assignments].sum(dtype=np.float64))
        if inertia_now > prev_inertia * (1.0 + 1e-6):
            raise RuntimeError(
                f"inertia increased at iteration {it}: "
                f"{prev_inertia} -> {inertia_now}")
        prev_inertia = inertia_now
        if on_iteration is not None:
            on_iteration(it, inertia_now)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments

    return Codebook(k=k, dim=dim, centroids=centroids, seed=seed)


def assign(codebook: Codebook, features: np.ndarray, fps: float,
           modality: str = "visual", language: str = "",
           speaker: str = "") -> UnitStream:
    """Map each frame to its nearest centroid (ties break to the lowest
    index, matching a brute-force scan exactly)."""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or features.shape[1] != codebook.dim:
        raise ValueError(
            f"features shape {features.shape} incompatible with codebook "
            f"dim {codebook.dim}")
    ids = _assign_ids(features, codebook.centroids)
    return UnitStream(units=ids, fps=fps, modality=modality,
                      language=language, speaker=speaker)


def inertia(codebook: Codebook, features: np.ndarray) -> float:
    """Sum of squared distances to assigned centroids."""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or features.shape[1] != codebook.dim:
        raise ValueError(
            f"features shape {features.shape} incompatible with codebook "
            f"dim {codebook.dim}")
    d2 = _sq_dists(features, codebook.centroids)
    return float(d2.min(axis=1).sum(dtype=np.float64))


# ---------------------------------------------------------------------------
# purity analysis
# ---------------------------------------------------------------------------

@dataclass
class PurityReport:
    unit_to_label: dict[int, str]
    unit_counts: dict[int, int]
    purity: float
    vowel_fraction: float


def purity(units: UnitStream | np.ndarray, labels: Sequence[str],
           vowel_set: frozenset[str] | set[str]) -> PurityReport:
    """Majority label per unit, global frame purity, and the fraction of
    (occurring) units whose majority label is a vowel."""
    ids = units.units if isinstance(units, UnitStream) else np.asarray(units)
    if len(ids) == 0:
        raise ValueError("purity of an empty unit stream is undefined")
    if len(ids) != len(labels):
        raise ValueError(f"{len(ids)} units vs {len(labels)} labels")

    per_unit: dict[int, Counter] = {}
    for u, lab in zip(ids.tolist(), labels):
        per_unit.setdefault(u, Counter())[lab] += 1

    unit_to_label: dict[int, str] = {}
    unit_counts: dict[int, int] = {}
    majority_total = 0
    for u, counter in sorted(per_unit.items()):
        # ties break to the lexicographically smallest label
        best = max(sorted(counter), key=lambda lab: counter[lab])
        unit_to_label[u] = best
        unit_counts[u] = sum(counter.values())
        majority_total += counter[best]

    vowels = sum(1 for lab in unit_to_label.values() if lab in vowel_set)
    return PurityReport(
        unit_to_label=unit_to_label,
        unit_counts=unit_counts,
        purity=majority_total / len(ids),
        vowel_fraction=vowels / len(unit_to_label))


# ---------------------------------------------------------------------------
# codebook file format
# ---------------------------------------------------------------------------

def save_codebook(path: str | Path, codebook: Codebook) -> None:
    with open(path, "wb") as fh:
        fh.write(CODEBOOK_MAGIC)
        fh.write(struct.pack("<H", CODEBOOK_VERSION))
        fh.write(struct.pack("<IIq", codebook.k, codebook.dim, codebook.seed))
        fh.write(np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes())


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: not a codebook file (bad magic {raw[:4]!r})")
    version, = struct.unpack_from("<H", raw, 4)
    if version != CODEBOOK_VERSION:
        raise FormatError(f"{path}: unsupported codebook version {version}")
    k, dim, seed = struct.unpack_from("<IIq", raw, 6)
    offset = 6 + struct.calcsize("<IIq")
    expected = offset + 4 * k * dim
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} != expected {expected}")
    centroids = np.frombuffer(raw, dtype="<f4", count=k * dim, offset=offset)
    return Codebook(k=int(k), dim=int(dim),
                    centroids=centroids.reshape(k, dim).copy(), seed=int(seed))
