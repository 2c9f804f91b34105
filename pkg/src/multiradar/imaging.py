"""Clutter suppression and beamformer imaging in each radar's local frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scene import SlowTimeCube


@dataclass(frozen=True)
class ImageGrid:
    """Cartesian pixel grid in a radar's local frame (x along the baseline, y forward).

    Pixel ``(iy, ix)`` has its centre at
    ``(x_min + (ix + 0.5) * pixel_size, y_min + (iy + 0.5) * pixel_size)``.
    """

    x_min: float = -4.0
    x_max: float = 4.0
    y_min: float = 0.3
    y_max: float = 7.0
    pixel_size: float = 0.05

    def __post_init__(self):
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("empty grid extent")
        if self.y_min <= 0:
            raise ValueError("grid must lie in front of the array (y_min > 0)")

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.pixel_size))

    @property
    def ny(self) -> int:
        return int(round((self.y_max - self.y_min) / self.pixel_size))

    @property
    def shape(self) -> tuple[int, int]:
        return self.ny, self.nx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.nx) + 0.5) * self.pixel_size

    @property
    def y(self) -> np.ndarray:
        return self.y_min + (np.arange(self.ny) + 0.5) * self.pixel_size

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-centre coordinate arrays ``(X, Y)``, each of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel range and angle from boresight (positive toward +x)."""
        X, Y = self.centers()
        return np.hypot(X, Y), np.arctan2(X, Y)

    def index_of(self, position) -> tuple[int, int]:
        """``(iy, ix)`` of the pixel containing ``position``; ValueError if outside."""
        x, y = float(position[0]), float(position[1])
        ix = int(math.floor((x - self.x_min) / self.pixel_size))
        iy = int(math.floor((y - self.y_min) / self.pixel_size))
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            raise ValueError(f"position ({x:.3f}, {y:.3f}) outside image grid")
        return iy, ix

    def contains(self, position) -> bool:
        try:
            self.index_of(position)
        except ValueError:
            return False
        return True


@dataclass
class RadarImage:
    """Complex image sequence; ``frames`` has shape ``(T, ny, nx)``."""

    radar_id: int
    grid: ImageGrid
    frames: np.ndarray
    slow_dt: float
    t0: float = 0.0

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames * self.slow_dt

    def pixel_series(self, position) -> np.ndarray:
        iy, ix = self.grid.index_of(position)
        return self.frames[:, iy, ix]

    def power(self) -> np.ndarray:
        """Slow-time mean of ``|I|^2`` per pixel."""
        return np.mean(np.abs(self.frames) ** 2, axis=0)


def suppress_clutter(cube: SlowTimeCube) -> SlowTimeCube:
    """Subtract the slow-time mean from every (range bin, element) series."""
    if cube.n_frames < 2:
        raise ValueError("clutter suppression needs at least two frames")
    s = np.asarray(cube.samples, dtype=np.complex128)
    return cube.with_samples(s - s.mean(axis=0, keepdims=True))


def taylor_window(n: int, sidelobe_db: float = -35.0, nbar: int = 4) -> np.ndarray:
    """Taylor taper of length ``n``, scaled to a peak of 1.

    ``sidelobe_db`` is the design sidelobe level; its sign is ignored.
    """
    if n < 1:
        raise ValueError("window length must be >= 1")
    if nbar < 1:
        raise ValueError("nbar must be >= 1")
    if n == 1:
        return np.ones(1)
    eta = 10.0 ** (abs(sidelobe_db) / 20.0)
    a = math.acosh(eta) / math.pi
    sigma2 = nbar**2 / (a**2 + (nbar - 0.5) ** 2)
    m = np.arange(1, nbar)
    fm = np.zeros(nbar - 1)
    for j, mj in enumerate(m):
        num = np.prod(1.0 - mj**2 / (sigma2 * (a**2 + (m - 0.5) ** 2)))
        others = m[m != mj]
        den = 2.0 * np.prod(1.0 - mj**2 / others**2.0)
        fm[j] = (-1.0) ** (mj + 1) * num / den
    k = np.arange(n)
    w = 1.0 + 2.0 * (fm[:, None] * np.cos(2 * np.pi * m[:, None] * (k - n / 2 + 0.5) / n)).sum(axis=0)
    return w / w.max()


def steering_weights(element_x, wavelength: float, angles, window=None) -> np.ndarray:
    """Weights ``alpha_i exp(-j 2 pi x_i sin(phi) / lambda)``, shape ``(len(angles), K)``.

    With echoes carrying ``exp(-j 4 pi d / lambda)``, the plain weighted sum
    of these weights peaks at the target's angle.
    """
    x = np.asarray(element_x, dtype=float)
    alpha = np.ones_like(x) if window is None else np.asarray(window, dtype=float)
    phi = np.atleast_1d(np.asarray(angles, dtype=float))
    return alpha[None, :] * np.exp(-2j * np.pi * np.sin(phi)[:, None] * x[None, :] / wavelength)


def array_factor(window, element_x, wavelength: float, angles, steer: float = 0.0) -> np.ndarray:
    """Normalised magnitude response of the beam steered to ``steer`` over ``angles``."""
    w = steering_weights(element_x, wavelength, [steer], window)[0]
    a = np.exp(2j * np.pi * np.sin(np.asarray(angles))[:, None] * np.asarray(element_x)[None, :] / wavelength)
    resp = np.abs(a @ w)
    return resp / np.abs(w).sum()


def _pixel_sampling(cube: SlowTimeCube, grid: ImageGrid):
    rho, phi = grid.polar()
    fidx = rho.ravel() / cube.range_bin_size
    k0 = np.floor(fidx).astype(np.int64)
    frac = fidx - k0
    last = cube.n_range - 1
    at_end = k0 == last
    # A pixel exactly on the last bin centre still interpolates within the cube.
    k0[at_end & (frac == 0.0)] -= 1
    frac[at_end & (frac == 0.0)] = 1.0
    outside = (k0 < 0) | (k0 + 1 > last)
    k0[outside] = -1
    frac[outside] = 0.0
    return k0, frac, phi.ravel()


def beamform(cube: SlowTimeCube, grid: ImageGrid, window=None) -> RadarImage:
    """Beamformer image ``I(t, pixel)`` of a (clutter-suppressed) cube.

    Range samples are linearly interpolated between adjacent bins at each
    pixel's range. Pixels beyond the cube's range extent are zero.
    """
    if window is None:
        window = taylor_window(cube.n_elements)
    window = np.asarray(window, dtype=float)
    if window.shape != (cube.n_elements,):
        raise ValueError(f"window length {window.size} != element count {cube.n_elements}")
    k0, frac, phi = _pixel_sampling(cube, grid)
    coef = steering_weights(cube.element_x, cube.wavelength, phi, window)
    samples = np.ascontiguousarray(cube.samples, dtype=np.complex128)
    if not samples.flags.writeable:
        samples = samples.copy()
    out = np.empty((cube.n_frames, k0.size), dtype=np.complex128)
    kernels.beamform_kernel(samples, k0, frac, np.ascontiguousarray(coef), out)
    return RadarImage(
        radar_id=cube.radar_id,
        grid=grid,
        frames=out.reshape(cube.n_frames, grid.ny, grid.nx),
        slow_dt=cube.slow_dt,
        t0=cube.t0,
    )
