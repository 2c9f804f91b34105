"""Cross-radar association and rigid alignment of cluster positions.

Clusters seen by two radars are paired by the similarity of their
respiratory phase waveforms, the two best pairs seed an orthogonal
Procrustes fit, the seed transform gates all remaining pairs, and the fit
is repeated on every gated pair.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import TargetCluster
from .imaging import RadarImage

log = logging.getLogger(__name__)


class AlignmentError(ValueError):
    """Raised when the correspondences cannot determine a rigid transform."""


class TooFewClustersError(AlignmentError):
    """Fewer than two clusters on one side; no pair of correspondences exists."""


class DegenerateGeometryError(AlignmentError):
    """Corresponding points coincide, so the rotation is unobservable."""


@dataclass
class RespWaveform:
    radar_id: int
    label: str
    samples: np.ndarray
    slow_dt: float


def extract_waveform(image: RadarImage, position, label: str = "") -> RespWaveform:
    """Unwrapped, mean-removed phase of the image at the pixel containing ``position``."""
    series = image.pixel_series(position)
    phase = np.unwrap(np.angle(series))
    return RespWaveform(image.radar_id, label, phase - phase.mean(), image.slow_dt)


def resp_correlation(w1, w2) -> float:
    """Absolute Pearson correlation of two waveforms; 0 if either is constant."""
    a = np.asarray(getattr(w1, "samples", w1), dtype=float)
    b = np.asarray(getattr(w2, "samples", w2), dtype=float)
    if a.shape != b.shape:
        raise ValueError("waveforms must have equal length")
    a = a - a.mean()
    b = b - b.mean()
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0.0:
        return 0.0
    return float(min(1.0, abs(a @ b) / norm))


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    labels1: list[str]
    labels2: list[str]


def correlation_matrix(waves1: list[RespWaveform], waves2: list[RespWaveform]) -> CorrelationMatrix:
    vals = np.array([[resp_correlation(a, b) for b in waves2] for a in waves1]).reshape(len(waves1), len(waves2))
    return CorrelationMatrix(vals, [w.label for w in waves1], [w.label for w in waves2])


def top_two_pairs(values) -> tuple[tuple[int, int], tuple[int, int]]:
    """Best pair, then the best pair sharing neither its row nor its column.

    Ties go to the smallest (row, column) in row-major order.
    """
    c = np.asarray(getattr(values, "values", values), dtype=float)
    if c.ndim != 2 or c.shape[0] < 2 or c.shape[1] < 2:
        raise TooFewClustersError(f"need at least 2x2 correlations, got shape {c.shape}")
    i, j = np.unravel_index(int(np.argmax(c)), c.shape)
    masked = c.copy()
    masked[i, :] = -np.inf
    masked[:, j] = -np.inf
    k, m = np.unravel_index(int(np.argmax(masked)), c.shape)
    return (int(i), int(j)), (int(k), int(m))


def _wrap_angle(a: float) -> float:
    """Map to (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    return math.pi if a == -math.pi else a


@dataclass(frozen=True)
class RigidTransform2D:
    """``x1 = R @ x2 + t``: maps radar-2 local coordinates into radar 1's frame."""

    R: np.ndarray
    t: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform2D":
        return cls(np.eye(2), np.zeros(2))

    @classmethod
    def from_params(cls, x: float, y: float, theta: float) -> "RigidTransform2D":
        c, s = math.cos(theta), math.sin(theta)
        return cls(np.array([[c, -s], [s, c]]), np.array([x, y], dtype=float))

    @property
    def theta(self) -> float:
        return _wrap_angle(math.atan2(self.R[1, 0], self.R[0, 0]))

    @property
    def params(self) -> tuple[float, float, float]:
        return float(self.t[0]), float(self.t[1]), self.theta

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.t

    def inverse(self) -> "RigidTransform2D":
        return RigidTransform2D(self.R.T, -self.R.T @ self.t)


def procrustes(S1, S2) -> RigidTransform2D:
    """Rotation and translation minimising ``||S1 - (R S2 + t 1^T)||_F``.

    ``S1`` and ``S2`` are 2 x N with corresponding columns. The sign
    correction on the smaller singular direction keeps ``det R = +1``.
    """
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    if S1.shape != S2.shape or S1.ndim != 2 or S1.shape[0] != 2:
        raise ValueError("S1 and S2 must both be 2 x N")
    if S1.shape[1] < 2:
        raise AlignmentError("need at least two corresponding points")
    m1 = S1.mean(axis=1, keepdims=True)
    m2 = S2.mean(axis=1, keepdims=True)
    c1 = S1 - m1
    c2 = S2 - m2
    scale = max(np.abs(S1).max(), np.abs(S2).max(), 1.0)
    if np.linalg.norm(c1) <= 1e-12 * scale or np.linalg.norm(c2) <= 1e-12 * scale:
        raise DegenerateGeometryError("corresponding points coincide; rotation unobservable")
    U, _, Vt = np.linalg.svd(c1 @ c2.T)
    d = 1.0 if np.linalg.det(U @ Vt) >= 0 else -1.0
    R = U @ np.diag([1.0, d]) @ Vt
    t = (m1 - R @ m2).ravel()
    return RigidTransform2D(R, t)


def residual_rms(T: RigidTransform2D, P1, P2) -> float:
    """RMS distance between ``P1`` and transformed ``P2`` (both N x 2)."""
    P1 = np.asarray(P1, dtype=float).reshape(-1, 2)
    P2 = np.asarray(P2, dtype=float).reshape(-1, 2)
    if len(P1) == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.sum((P1 - T.apply(P2)) ** 2, axis=1))))


@dataclass
class AssociationSet:
    pairs: list[tuple[str, str]]
    unpaired_1: list[str]
    unpaired_2: list[str]


def _as_labelled(reps):
    if isinstance(reps, dict):
        items = list(reps.items())
    else:
        items = [(r.label, r.representative) if hasattr(r, "representative") else (r[0], r[1]) for r in reps]
    labels = [lab for lab, _ in items]
    pos = np.array([np.asarray(p, dtype=float) for _, p in items]).reshape(-1, 2)
    return labels, pos


def associate(reps1, reps2, T: RigidTransform2D, d_th: float = 0.5) -> AssociationSet:
    """Mutual-nearest pairs among all cross-radar pairs within ``d_th`` after transforming radar 2.

    ``reps1``/``reps2`` are label -> position mappings, or sequences of
    clusters (anything with ``label`` and ``representative``).
    """
    l1, p1 = _as_labelled(reps1)
    l2, p2 = _as_labelled(reps2)
    if not l1 or not l2:
        return AssociationSet([], list(l1), list(l2))
    d = np.linalg.norm(p1[:, None, :] - T.apply(p2)[None, :, :], axis=2)
    gated = np.where(d <= d_th, d, np.inf)
    pairs = []
    for i in range(len(l1)):
        j = int(np.argmin(gated[i]))
        if np.isfinite(gated[i, j]) and int(np.argmin(gated[:, j])) == i:
            pairs.append((i, j))
    paired1 = {i for i, _ in pairs}
    paired2 = {j for _, j in pairs}
    return AssociationSet(
        pairs=[(l1[i], l2[j]) for i, j in pairs],
        unpaired_1=[l for i, l in enumerate(l1) if i not in paired1],
        unpaired_2=[l for j, l in enumerate(l2) if j not in paired2],
    )


@dataclass
class AlignmentResult:
    transform: RigidTransform2D
    seed_transform: RigidTransform2D
    association: AssociationSet
    correlation: CorrelationMatrix
    seed_pairs: list[tuple[str, str]]
    seed_residual: float
    refined_residual: float
    low_confidence: bool = False
    waveforms: dict = field(default_factory=dict, repr=False)


def align_two_radars(clusters1: list[TargetCluster], clusters2: list[TargetCluster],
                     image1: RadarImage, image2: RadarImage, d_th: float = 0.5) -> AlignmentResult:
    """Estimate the radar-2 to radar-1 transform from clusters and their waveforms."""
    if len(clusters1) < 2 or len(clusters2) < 2:
        raise TooFewClustersError(
            f"alignment needs >= 2 clusters per radar, got {len(clusters1)} and {len(clusters2)}")
    w1 = [extract_waveform(image1, c.representative, c.label) for c in clusters1]
    w2 = [extract_waveform(image2, c.representative, c.label) for c in clusters2]
    corr = correlation_matrix(w1, w2)
    (a, b), (c, d) = top_two_pairs(corr.values)
    P1 = np.array([clusters1[a].representative, clusters1[c].representative])
    P2 = np.array([clusters2[b].representative, clusters2[d].representative])
    seed = procrustes(P1.T, P2.T)

    assoc = associate(clusters1, clusters2, seed, d_th)
    pos1 = {cl.label: cl.representative for cl in clusters1}
    pos2 = {cl.label: cl.representative for cl in clusters2}
    Q1 = np.array([pos1[p] for p, _ in assoc.pairs]).reshape(-1, 2)
    Q2 = np.array([pos2[q] for _, q in assoc.pairs]).reshape(-1, 2)
    low = False
    if len(assoc.pairs) >= 2:
        try:
            refined = procrustes(Q1.T, Q2.T)
        except DegenerateGeometryError:
            refined, low = seed, True
    else:
        refined, low = seed, True
    if low:
        log.warning("only %d gated pair(s); keeping the seed transform", len(assoc.pairs))
    return AlignmentResult(
        transform=refined,
        seed_transform=seed,
        association=assoc,
        correlation=corr,
        seed_pairs=[(clusters1[a].label, clusters2[b].label), (clusters1[c].label, clusters2[d].label)],
        seed_residual=residual_rms(seed, Q1, Q2),
        refined_residual=residual_rms(refined, Q1, Q2),
        low_confidence=low,
        waveforms={"1": w1, "2": w2},
    )


def align_star(clusters: dict, images: dict, reference, d_th: float = 0.5) -> dict:
    """Align every radar to ``reference`` pairwise; the M > 2 extension point.

    ``clusters`` and ``images`` map radar id to that radar's clusters and
    image. Returns radar id -> AlignmentResult for every non-reference radar.
    """
    return {
        rid: align_two_radars(clusters[reference], clusters[rid], images[reference], images[rid], d_th)
        for rid in clusters
        if rid != reference
    }
