"""Point clouds from radar images and X-means clustering of them.

Points are drawn from a radar image with density proportional to
``rho * |I|^2`` (the range factor offsets propagation loss) and grouped by
X-means: clusters are split in two while the split lowers the Bayesian
information criterion of a Gaussian model with full covariance.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import ImageGrid, RadarImage

# Jitter within a pixel puts a floor on per-axis variance; keeps covariances invertible.
_COV_FLOOR = 1e-8


@dataclass
class PointCloud:
    points: np.ndarray
    weights: np.ndarray
    radar_id: int
    window: tuple[float, float]

    def __len__(self):
        return len(self.points)


@dataclass
class TargetCluster:
    label: str
    index: int
    members: np.ndarray
    weights: np.ndarray
    representative: np.ndarray
    mean_power: float

    @property
    def n_members(self) -> int:
        return len(self.members)


def cluster_label(i: int) -> str:
    """0 -> 'A', 25 -> 'Z', 26 -> 'AA', ..."""
    letters = string.ascii_uppercase
    out = ""
    i += 1
    while i > 0:
        i, r = divmod(i - 1, 26)
        out = letters[r] + out
    return out


def _window_frames(image: RadarImage, window):
    if window is None:
        return 0, image.n_frames, (image.t0, image.t0 + image.duration)
    t_start, t_end = window
    i0 = int(round((t_start - image.t0) / image.slow_dt))
    i1 = int(round((t_end - image.t0) / image.slow_dt))
    if i0 < 0 or i1 > image.n_frames or i1 <= i0:
        raise ValueError(f"window {window} outside image span")
    return i0, i1, (float(t_start), float(t_end))


def pixel_weights(image: RadarImage, window=None, floor_db: float = -20.0) -> np.ndarray:
    """Range-compensated mean power per pixel with everything below the floor zeroed."""
    i0, i1, _ = _window_frames(image, window)
    rho, _ = image.grid.polar()
    w = rho * np.mean(np.abs(image.frames[i0:i1]) ** 2, axis=0)
    peak = w.max()
    if not peak > 0:
        raise ValueError("image has no power in the requested window")
    w[w < peak * 10.0 ** (floor_db / 10.0)] = 0.0
    return w


def sample_point_cloud(image: RadarImage, window=None, n_points: int = 2000, seed=0,
                       floor_db: float = -20.0) -> PointCloud:
    """Draw ``n_points`` positions with density proportional to the pixel weights.

    Each point falls uniformly within its drawn pixel.
    """
    i0, i1, span = _window_frames(image, window)
    w = pixel_weights(image, window, floor_db)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    flat = w.ravel()
    idx = rng.choice(flat.size, size=n_points, p=flat / flat.sum())
    grid = image.grid
    iy, ix = np.unravel_index(idx, grid.shape)
    jitter = rng.uniform(-0.5, 0.5, size=(n_points, 2)) * grid.pixel_size
    pts = np.column_stack([grid.x[ix], grid.y[iy]]) + jitter
    return PointCloud(points=pts, weights=flat[idx], radar_id=image.radar_id, window=span)


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
            continue
        c = x[rng.choice(len(x), p=d2 / total)]
        centers.append(c)
        d2 = np.minimum(d2, np.sum((x - c) ** 2, axis=1))
    return np.array(centers)


def lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 100, tol: float = 1e-10):
    """Plain k-means iterations from the given centres; returns (centers, labels, inertia)."""
    centers = np.array(centers, dtype=float)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        new = centers.copy()
        for j in range(len(centers)):
            sel = labels == j
            if sel.any():
                new[j] = x[sel].mean(axis=0)
        shift = np.max(np.sum((new - centers) ** 2, axis=1))
        centers = new
        if shift <= tol:
            break
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    return centers, labels, inertia


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, n_init: int = 3):
    best = None
    for _ in range(n_init):
        res = lloyd(x, kmeans_pp_init(x, k, rng))
        if best is None or res[2] < best[2]:
            best = res
    return best


def gaussian_loglik(x: np.ndarray) -> float:
    """Log-likelihood of ``x`` under its own maximum-likelihood Gaussian."""
    n, d = x.shape
    cov = np.cov(x, rowvar=False, bias=True).reshape(d, d) + _COV_FLOOR * np.eye(d)
    _, logdet = np.linalg.slogdet(cov)
    # With the ML covariance the Mahalanobis sum equals n * d exactly.
    return -0.5 * n * (d * np.log(2 * np.pi) + logdet + d)


def bic_single(x: np.ndarray) -> float:
    n, d = x.shape
    q = d + d * (d + 1) / 2
    return -2.0 * gaussian_loglik(x) + q * np.log(n)


def bic_split(x: np.ndarray, labels: np.ndarray) -> float:
    """BIC of a two-component hard-assignment Gaussian mixture."""
    n, d = x.shape
    q = 2 * (d + d * (d + 1) / 2) + 1
    ll = 0.0
    for j in (0, 1):
        xj = x[labels == j]
        ll += len(xj) * np.log(len(xj) / n) + gaussian_loglik(xj)
    return -2.0 * ll + q * np.log(n)


def bic_mixture(x: np.ndarray, parts: list[np.ndarray]) -> float:
    """BIC of a hard-assignment Gaussian mixture whose components are the row subsets ``parts``."""
    n, d = x.shape
    q = len(parts) * (d + d * (d + 1) / 2) + len(parts) - 1
    ll = sum(len(p) * np.log(len(p) / n) + gaussian_loglik(x[p]) for p in parts)
    return -2.0 * ll + q * np.log(n)


def _pruned_leaves(x, idx, rng, min_split, depth):
    """Leaves of a recursive 2-means bisection of ``x[idx]``, pruned bottom-up by BIC."""
    if depth == 0 or len(idx) < min_split:
        return [idx]
    _, lab, _ = kmeans(x[idx], 2, rng)
    if min(np.bincount(lab, minlength=2)) < 3:
        return [idx]
    leaves = (_pruned_leaves(x, idx[lab == 0], rng, min_split, depth - 1)
              + _pruned_leaves(x, idx[lab == 1], rng, min_split, depth - 1))
    if len(leaves) > 1 and bic_mixture(x[idx], [np.searchsorted(idx, l) for l in leaves]) < bic_single(x[idx]):
        return leaves
    return [idx]


def _try_split(xj, rng, min_split, lookahead):
    """Two child centres if splitting ``xj`` pays off under BIC, else None.

    A split rejected on its own is retried with a bounded look-ahead: the
    node is bisected recursively and kept split if the pruned subtree beats
    a single Gaussian. This catches groups of several blobs whose best
    two-way split is not itself Gaussian-shaped.
    """
    if len(xj) < min_split:
        return None
    c2, l2, _ = kmeans(xj, 2, rng)
    if min(np.bincount(l2, minlength=2)) < 3:
        return None
    if bic_split(xj, l2) < bic_single(xj):
        return c2
    if lookahead > 0:
        idx = np.arange(len(xj))
        if len(_pruned_leaves(xj, idx, rng, min_split, lookahead)) > 1:
            return c2
    return None


def _merge_pass(x, centers, labels):
    """Merge mutual-nearest cluster pairs whose union one Gaussian explains better."""
    while len(centers) > 1:
        d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        nearest = d2.argmin(axis=1)
        best, pair = 0.0, None
        for i in range(len(centers)):
            j = int(nearest[i])
            if j <= i or nearest[j] != i:
                continue
            sel = (labels == i) | (labels == j)
            xs = x[sel]
            gain = bic_split(xs, (labels[sel] == j).astype(int)) - bic_single(xs)
            if gain > best:
                best, pair = gain, (i, j)
        if pair is None:
            break
        i, j = pair
        labels = np.where(labels == j, i, labels)
        keep = [k for k in range(len(centers)) if k != j]
        remap = np.full(len(centers), -1)
        remap[keep] = np.arange(len(keep))
        labels = remap[labels]
        centers = np.array([x[labels == k].mean(axis=0) for k in range(len(keep))])
    return centers, labels


def xmeans_labels(x: np.ndarray, k_max: int = 12, rng=None, min_split: int = 8, lookahead: int = 3):
    """Cluster labels ``0..k-1`` for the rows of ``x`` chosen by X-means.

    Every round tries to split each cluster in two; accepted splits are
    followed by a global Lloyd pass. When no split is accepted, clusters
    that are better described as one Gaussian are merged back.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    centers = x.mean(axis=0, keepdims=True)
    labels = np.zeros(len(x), dtype=int)
    # Member sets already refused a split; Lloyd often leaves them untouched.
    refused = set()
    while len(centers) < k_max:
        proposed = []
        split_any = False
        budget = k_max - len(centers)
        for j in range(len(centers)):
            members = np.flatnonzero(labels == j)
            key = members.tobytes()
            c2 = None
            if budget > 0 and key not in refused:
                c2 = _try_split(x[members], rng, min_split, lookahead)
                if c2 is None:
                    refused.add(key)
            if c2 is not None:
                proposed.extend(c2)
                split_any = True
                budget -= 1
            else:
                proposed.append(centers[j])
        if not split_any:
            break
        centers, labels, _ = lloyd(x, np.array(proposed))
        keep = np.bincount(labels, minlength=len(centers)) > 0
        if not keep.all():
            centers, labels, _ = lloyd(x, centers[keep])
    _, labels = _merge_pass(x, centers, labels)
    return labels


def xmeans(cloud: PointCloud, k_max: int = 12, seed=0, min_fraction: float = 0.01) -> list[TargetCluster]:
    """X-means clusters of a point cloud, labelled A, B, ... by ascending x.

    Clusters holding less than ``min_fraction`` of the points are dropped as
    noise. Representatives are power-weighted centroids of member points.
    """
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    labels = xmeans_labels(cloud.points, k_max, seed)
    n = len(cloud)
    found = []
    for j in range(labels.max() + 1):
        sel = labels == j
        if sel.sum() < max(1, min_fraction * n):
            continue
        pts = cloud.points[sel]
        w = cloud.weights[sel]
        found.append((pts, w, _representative(pts, w)))
    return _labelled(found)


def _representative(pts, w):
    return (w[:, None] * pts).sum(axis=0) / w.sum() if w.sum() > 0 else pts.mean(axis=0)


def _labelled(found):
    found = sorted(found, key=lambda f: (f[2][0], f[2][1]))
    return [
        TargetCluster(label=cluster_label(i), index=i + 1, members=pts, weights=w,
                      representative=rep, mean_power=float(w.mean()))
        for i, (pts, w, rep) in enumerate(found)
    ]


def _segment_ratio(level, grid, a, b):
    """Lowest level on the segment a-b relative to the lower endpoint level."""
    n = max(2, int(np.ceil(np.hypot(*(b - a)) / (0.5 * grid.pixel_size))) + 1)
    u = np.linspace(0.0, 1.0, n)[:, None]
    pts = a[None, :] + u * (b - a)[None, :]
    ix = np.clip(np.floor((pts[:, 0] - grid.x_min) / grid.pixel_size).astype(int), 0, grid.nx - 1)
    iy = np.clip(np.floor((pts[:, 1] - grid.y_min) / grid.pixel_size).astype(int), 0, grid.ny - 1)
    vals = level[iy, ix]
    ends = min(vals[0], vals[-1])
    if ends <= 0:
        return 0.0
    return float(vals.min() / ends)


def merge_fragments(clusters: list[TargetCluster], weights: np.ndarray, grid: ImageGrid,
                    dip_db: float = -3.0, reach: float = 0.1) -> list[TargetCluster]:
    """Join clusters that are pieces of one unimodal lobe of the weight map.

    Two clusters merge when the weight map, max-filtered over ``reach``
    meters, never drops more than ``|dip_db|`` below the weaker endpoint
    on the segment between their representatives. Resolved targets are
    separated by the noise floor and never merge.
    """
    size = 2 * int(np.ceil(reach / grid.pixel_size)) + 1
    level = ndimage.maximum_filter(weights, size=size, mode="constant")
    limit = 10.0 ** (dip_db / 10.0)
    found = [(c.members, c.weights, c.representative) for c in clusters]
    while len(found) > 1:
        best, pair = limit, None
        for i in range(len(found)):
            for j in range(i + 1, len(found)):
                r = _segment_ratio(level, grid, found[i][2], found[j][2])
                if r >= best:
                    best, pair = r, (i, j)
        if pair is None:
            break
        i, j = pair
        pts = np.vstack([found[i][0], found[j][0]])
        w = np.concatenate([found[i][1], found[j][1]])
        found = [f for k, f in enumerate(found) if k not in pair] + [(pts, w, _representative(pts, w))]
    return _labelled(found)


def cluster_image(clusters: list[TargetCluster], grid: ImageGrid) -> np.ndarray:
    """Integer image: each member point marks its pixel with the cluster index; 0 elsewhere."""
    img = np.zeros(grid.shape, dtype=int)
    for c in clusters:
        ix = np.floor((c.members[:, 0] - grid.x_min) / grid.pixel_size).astype(int)
        iy = np.floor((c.members[:, 1] - grid.y_min) / grid.pixel_size).astype(int)
        ok = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
        img[iy[ok], ix[ok]] = c.index
    return img
