"""Evaluation metrics: pose-space L2, feature-space Fréchet distance (FHD),
per-joint rotation error in degrees, and sampled-pair diversity.

Sequence-level features are frame means of a frozen extractor's per-frame
output; the same pooling feeds both the Fréchet metric and diversity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

EIG_FLOOR = 1e-10


@dataclass
class MetricReport:
    l2: float
    fhd: float
    mpjre_deg: float
    diversity_mean: float | None = None
    diversity_ci95: float | None = None

    def as_dict(self) -> dict:
        doc = {"l2": self.l2, "fhd": self.fhd, "mpjre_deg": self.mpjre_deg}
        if self.diversity_mean is not None:
            doc["diversity"] = {"mean": self.diversity_mean, "ci95": self.diversity_ci95}
        return doc

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True)


def _flat_frames(seq) -> np.ndarray:
    if hasattr(seq, "frames"):  # one of the pose-sequence dataclasses
        return seq.flat
    return np.asarray(seq, dtype=np.float64)


def metric_l2(hands, hands_hat) -> float:
    """Mean over frames of the Euclidean norm of the 90-dim frame difference."""
    a, b = _flat_frames(hands), _flat_frames(hands_hat)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = (a - b).reshape(-1, a.shape[-1])
    return float(np.linalg.norm(diff, axis=-1).mean())


def metric_mpjre(hands, hands_hat) -> float:
    """Mean absolute axis-angle component error, in degrees."""
    a, b = _flat_frames(hands), _flat_frames(hands_hat)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.degrees(np.abs(a - b).mean()))


def _extract(extractor, frames: np.ndarray) -> np.ndarray:
    if hasattr(extractor, "encode_np"):
        return extractor.encode_np(frames)
    return np.asarray(extractor(frames), dtype=np.float64)


def sequence_features(sequences, extractor) -> np.ndarray:
    """(n_sequences, C) array of frame-mean extractor features."""
    feats = [_extract(extractor, _flat_frames(s)).mean(axis=0) for s in sequences]
    return np.stack(feats)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition with a floor."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, EIG_FLOOR)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Fréchet distance between Gaussians fit to two feature sets.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}); the matrix square
    root is evaluated as sqrt(A) S_b sqrt(A) with eigenvalue flooring, which
    keeps the computation symmetric and real.
    """
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    if feats_a.ndim != 2 or feats_b.ndim != 2 or feats_a.shape[1] != feats_b.shape[1]:
        raise ValueError("feature sets must be (N, C) with matching C")
    if feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise ValueError("need at least 2 feature vectors per set")
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.cov(feats_a, rowvar=False)
    cov_b = np.cov(feats_b, rowvar=False)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)

    root_a = _psd_sqrt(cov_a)
    inner = _psd_sqrt(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(inner))
    return max(value, 0.0)


def metric_fhd(real_sequences, generated_sequences, extractor) -> float:
    """Fréchet distance between feature Gaussians of two sequence sets."""
    return frechet_distance(
        sequence_features(real_sequences, extractor),
        sequence_features(generated_sequences, extractor),
    )


def metric_diversity(
    samples,
    extractor,
    pairs: int | None = 500,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean feature distance over sampled distinct index pairs.

    `pairs=None` enumerates all unordered pairs; otherwise `pairs` pairs are
    drawn with replacement across pairs (never within a pair of a single
    draw), seeded. Returns (mean, half-width of the 95% normal interval).
    """
    feats = sequence_features(samples, extractor)
    k = feats.shape[0]
    if k < 2:
        raise ValueError("diversity needs at least 2 samples")
    if pairs is None:
        idx_a, idx_b = np.triu_indices(k, 1)
    else:
        rng = np.random.default_rng(seed)
        idx_a = np.empty(pairs, dtype=int)
        idx_b = np.empty(pairs, dtype=int)
        for p in range(pairs):
            a, b = rng.choice(k, size=2, replace=False)
            idx_a[p], idx_b[p] = a, b
    dists = np.linalg.norm(feats[idx_a] - feats[idx_b], axis=1)
    mean = float(dists.mean())
    ci95 = float(1.96 * dists.std(ddof=1) / np.sqrt(dists.size)) if dists.size > 1 else 0.0
    return mean, ci95
