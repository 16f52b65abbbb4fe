"""Robust 4-DOF similarity fit from point correspondences.

Points are handled as complex numbers: a similarity is b = c*a + t with
c = scale * exp(i*rotation), so two correspondences fix a hypothesis and the
least-squares refit is a one-line complex regression.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

MIN_INLIERS = 6


class NoConsensus(Exception):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: float
    translation: tuple[float, float]
    inlier_count: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def _c(self) -> complex:
        return cmath.rect(self.scale, self.rotation)

    def apply(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        z = self._c * (p[:, 0] + 1j * p[:, 1]) + complex(*self.translation)
        return np.stack([z.real, z.imag], axis=1)


def _fit(a: np.ndarray, b: np.ndarray) -> tuple[complex, complex]:
    ma, mb = a.mean(), b.mean()
    da = a - ma
    den = float(np.vdot(da, da).real)
    if den == 0.0:
        raise NoConsensus("degenerate point set")
    c = np.vdot(da, b - mb) / den
    return c, mb - c * ma


def fit_similarity_ransac(
    pts_a,
    pts_b,
    iters: int = 500,
    tol_px: float = 3.0,
    min_inliers: int = MIN_INLIERS,
    seed: int = 0,
) -> tuple[SimilarityTransform, np.ndarray]:
    """Fit b ~ T(a) robustly; returns the transform and the inlier mask.

    ``pts_a`` and ``pts_b`` are (n, 2) arrays of already-paired points.

    Raises:
        NoConsensus: fewer than ``min_inliers`` correspondences agree.
    """
    pa = np.asarray(pts_a, dtype=np.float64).reshape(-1, 2)
    pb = np.asarray(pts_b, dtype=np.float64).reshape(-1, 2)
    n = len(pa)
    if n < 2 or n < min_inliers:
        raise NoConsensus(f"{n} correspondences")
    a = pa[:, 0] + 1j * pa[:, 1]
    b = pb[:, 0] + 1j * pb[:, 1]
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=iters)
    j = (i + rng.integers(1, n, size=iters)) % n
    den = a[j] - a[i]
    ok = np.abs(den) > 1e-9
    c = np.where(ok, (b[j] - b[i]) / np.where(ok, den, 1.0), 0.0)
    t = b[i] - c * a[i]
    # (iters, n) residuals; the hypotheses are scored all at once
    resid = np.abs(c[:, None] * a[None, :] + t[:, None] - b[None, :])
    votes = np.where(ok & (np.abs(c) > 0), (resid <= tol_px).sum(axis=1), -1)
    best = int(np.argmax(votes))
    inliers = resid[best] <= tol_px
    if votes[best] < min_inliers:
        raise NoConsensus(f"best hypothesis has {max(int(votes[best]), 0)} inliers")
    cc, tt = c[best], t[best]
    for _ in range(5):
        cc, tt = _fit(a[inliers], b[inliers])
        new = np.abs(cc * a + tt - b) <= tol_px
        if new.sum() < min_inliers:
            raise NoConsensus("refit lost consensus")
        if np.array_equal(new, inliers):
            break
        inliers = new
    if abs(cc) == 0:
        raise NoConsensus("degenerate scale")
    tr = SimilarityTransform(float(abs(cc)), float(cmath.phase(cc)), (float(tt.real), float(tt.imag)), int(inliers.sum()))
    return tr, inliers


def estimate_transform_ransac(pairs, pts_a, pts_b, iters: int = 500, tol_px: float = 3.0, seed: int = 0):
    """RANSAC over descriptor matches; ``pairs`` carry index_a/index_b into
    the (n, 2) keypoint coordinate arrays."""
    if len(pairs) < 2:
        raise NoConsensus(f"{len(pairs)} matches")
    ia = np.fromiter((m.index_a for m in pairs), dtype=np.int64, count=len(pairs))
    ib = np.fromiter((m.index_b for m in pairs), dtype=np.int64, count=len(pairs))
    return fit_similarity_ransac(np.asarray(pts_a)[ia], np.asarray(pts_b)[ib], iters, tol_px, seed=seed)
