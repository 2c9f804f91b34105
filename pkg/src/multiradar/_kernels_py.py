"""Pure numpy implementation of the beamforming kernel.

Used when the compiled extension is unavailable or disabled. Pixels
sharing a lower range bin are imaged together with one matrix product.
"""

import numpy as np


def _groups(k0):
    order = np.argsort(k0, kind="stable")
    ks = k0[order]
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
    stops = np.r_[starts[1:], ks.size]
    return order, ks, starts, stops


def beamform_kernel(samples, k0, frac, coef, out):
    """Fill ``out[t, p]`` with the weighted, range-interpolated element sum.

    Parameters
    ----------
    samples : complex128 array, shape (T, R, K)
    k0 : int64 array, shape (P,)
        Lower range bin per pixel; negative marks a pixel outside the cube.
    frac : float64 array, shape (P,)
        Interpolation fraction toward bin ``k0 + 1``.
    coef : complex128 array, shape (P, K)
        Per-pixel element weights.
    out : complex128 array, shape (T, P)
    """
    n_frames, _, n_el = samples.shape
    order, ks, starts, stops = _groups(k0)
    for a, b in zip(starts, stops):
        idx = order[a:b]
        k = ks[a]
        if k < 0:
            out[:, idx] = 0
            continue
        w = np.concatenate([((1.0 - frac[idx])[:, None] * coef[idx]).T,
                            (frac[idx][:, None] * coef[idx]).T])
        out[:, idx] = samples[:, k:k + 2, :].reshape(n_frames, 2 * n_el) @ w
    return out
