"""Synthetic multiradar scenes of seated, breathing people.

Each radar is simulated directly in the range-profile domain: for every
slow-time frame and virtual element the echo of a person is a Gaussian
range response centred on the element-to-chest distance, carrying the
carrier phase of that distance. Static clutter, white noise and
line-of-sight shadowing by other bodies are layered on top.

Coordinates
-----------
The scene frame is an arbitrary 2-D Cartesian frame. A radar at ``position``
with boresight angle ``orientation`` (measured from the scene x-axis) has a
local frame whose y-axis is the boresight and whose x-axis runs along the
array baseline, oriented so that the local frame is right-handed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_WAVELENGTH = 3.8e-3
DEFAULT_BANDWIDTH = 3.9e9
DEFAULT_RANGE_RESOLUTION = SPEED_OF_LIGHT / (2.0 * DEFAULT_BANDWIDTH)


@dataclass(frozen=True)
class BreathingTarget:
    id: int
    position: tuple[float, float]
    rate: float = 15.0
    amplitude: float = 2e-3
    phase0: float = 0.0
    rest_range_offset: float = 0.0
    body_radius: float = 0.25
    reflectivity: float = 1.0
    harmonic_ratio: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if not 6.0 <= self.rate <= 40.0:
            raise ValueError(f"target {self.id}: rate {self.rate} rpm outside [6, 40]")
        if self.amplitude <= 0:
            raise ValueError(f"target {self.id}: amplitude must be positive")
        if self.body_radius <= 0:
            raise ValueError(f"target {self.id}: body_radius must be positive")

    def displacement(self, t: np.ndarray) -> np.ndarray:
        """Chest displacement in meters at times ``t`` (seconds)."""
        arg = 2.0 * np.pi * self.rate / 60.0 * np.asarray(t, dtype=float) + self.phase0
        out = self.amplitude * np.sin(arg)
        if self.harmonic_ratio:
            out = out + self.harmonic_ratio * self.amplitude * np.sin(2.0 * arg)
        return out


@dataclass(frozen=True)
class RadarPlacement:
    id: int
    position: tuple[float, float] = (0.0, 0.0)
    orientation: float = math.pi / 2
    wavelength: float = DEFAULT_WAVELENGTH
    n_tx: int = 3
    n_rx: int = 4
    tx_spacing: float = 2 * DEFAULT_WAVELENGTH
    rx_spacing: float = DEFAULT_WAVELENGTH / 2
    range_resolution: float = DEFAULT_RANGE_RESOLUTION
    slow_dt: float = 0.1
    max_range: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("n_tx and n_rx must be >= 1")
        if self.wavelength <= 0 or self.range_resolution <= 0 or self.slow_dt <= 0:
            raise ValueError("wavelength, range_resolution and slow_dt must be positive")
        if self.max_range <= self.range_resolution:
            raise ValueError("max_range must exceed range_resolution")

    @property
    def n_virtual(self) -> int:
        return self.n_tx * self.n_rx

    @property
    def rotation(self) -> np.ndarray:
        """Columns are the local x- and y-axes expressed in the scene frame."""
        a = self.orientation - math.pi / 2
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, -s], [s, c]])

    def to_local(self, points) -> np.ndarray:
        """Scene-frame points (..., 2) to this radar's local frame."""
        p = np.asarray(points, dtype=float) - np.asarray(self.position)
        return p @ self.rotation

    def to_scene(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + np.asarray(self.position)


@dataclass
class SceneConfig:
    targets: list[BreathingTarget]
    radars: list[RadarPlacement]
    duration: float = 120.0
    noise_power: float = 1e-4
    occlusion_attenuation: float = -40.0
    clutter_scale: float = 10.0
    n_clutter: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if not self.targets:
            raise ValueError("scene needs at least one target")
        if not self.radars:
            raise ValueError("scene needs at least one radar")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.noise_power < 0:
            raise ValueError("noise_power must be non-negative")
        ids = [r.id for r in self.radars]
        if len(set(ids)) != len(ids):
            raise ValueError("radar ids must be unique")

    def n_frames(self, radar: RadarPlacement) -> int:
        return int(math.floor(self.duration / radar.slow_dt + 1e-9))


@dataclass
class SlowTimeCube:
    """Complex samples indexed ``[frame, range bin, virtual element]``."""

    radar_id: int
    samples: np.ndarray
    range_bin_size: float
    t0: float = 0.0
    slow_dt: float = 0.1
    wavelength: float = DEFAULT_WAVELENGTH
    element_x: np.ndarray = field(default=None)

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 3:
            raise ValueError("samples must be 3-D [frame, range, element]")
        if self.element_x is None:
            k = self.samples.shape[2]
            self.element_x = (np.arange(k) - (k - 1) / 2) * self.wavelength / 2
        self.element_x = np.asarray(self.element_x, dtype=float)
        if self.element_x.shape != (self.samples.shape[2],):
            raise ValueError("element_x length must equal the element count")

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def n_range(self) -> int:
        return self.samples.shape[1]

    @property
    def n_elements(self) -> int:
        return self.samples.shape[2]

    @property
    def ranges(self) -> np.ndarray:
        return np.arange(self.n_range) * self.range_bin_size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_frames) * self.slow_dt

    def frames(self, start: int, stop: int) -> "SlowTimeCube":
        """Sub-cube for frames ``start:stop`` with the time origin carried along."""
        return SlowTimeCube(
            radar_id=self.radar_id,
            samples=self.samples[start:stop],
            range_bin_size=self.range_bin_size,
            t0=self.t0 + start * self.slow_dt,
            slow_dt=self.slow_dt,
            wavelength=self.wavelength,
            element_x=self.element_x,
        )

    def with_samples(self, samples: np.ndarray) -> "SlowTimeCube":
        return SlowTimeCube(self.radar_id, samples, self.range_bin_size, self.t0,
                            self.slow_dt, self.wavelength, self.element_x)


def _element_coordinates(placement: RadarPlacement) -> tuple[np.ndarray, np.ndarray]:
    tx = np.arange(placement.n_tx) * placement.tx_spacing
    rx = np.arange(placement.n_rx) * placement.rx_spacing
    return tx - tx.mean(), rx - rx.mean()


def virtual_array_positions(placement: RadarPlacement) -> np.ndarray:
    """Virtual element coordinates along the baseline, Tx-major order, zero mean."""
    tx, rx = _element_coordinates(placement)
    x = (tx[:, None] + rx[None, :]).ravel()
    return x - x.mean()


def point_segment_distance(point, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (point, a, b))
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    u = min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.hypot(*(p - a - u * ab)))


def los_blocked(target: BreathingTarget, radar: RadarPlacement, others) -> bool:
    """True if any other body disk intersects the radar-to-target segment."""
    for other in others:
        if other.id == target.id:
            continue
        d = point_segment_distance(other.position, radar.position, target.position)
        if d < other.body_radius:
            return True
    return False


def occlusion_table(config: SceneConfig) -> dict[tuple[int, int], bool]:
    """``(radar id, target id) -> blocked`` for every pair in the scene."""
    return {
        (r.id, t.id): los_blocked(t, r, config.targets)
        for r in config.radars
        for t in config.targets
    }


def _echo_amplitude(config: SceneConfig, radar: RadarPlacement, target: BreathingTarget) -> float:
    rng0 = float(np.hypot(*radar.to_local(target.position)))
    amp = target.reflectivity / rng0
    if los_blocked(target, radar, config.targets):
        amp *= 10.0 ** (config.occlusion_attenuation / 20.0)
    return amp


def _add_point_echo(samples, ranges, tx, rx, local_pos, path_offset, amp, wavelength, sigma):
    """Accumulate one point reflector into ``samples`` in place.

    ``path_offset`` is a per-frame radial displacement (meters), broadcast
    over elements.
    """
    dtx = np.hypot(local_pos[0] - tx, local_pos[1])
    drx = np.hypot(local_pos[0] - rx, local_pos[1])
    d_static = 0.5 * (dtx[:, None] + drx[None, :]).ravel()
    d = d_static[None, :] + np.asarray(path_offset, dtype=float).reshape(-1, 1)
    psf = np.exp(-0.5 * ((ranges[None, :, None] - d[:, None, :]) / sigma) ** 2)
    phase = np.exp(-4j * np.pi * d / wavelength)
    samples += amp * psf * phase[:, None, :]


def synthesize_radar(config: SceneConfig, radar: RadarPlacement, index: int | None = None) -> SlowTimeCube:
    if index is None:
        index = config.radars.index(radar)
    n_frames = config.n_frames(radar)
    t = np.arange(n_frames) * radar.slow_dt
    n_range = int(math.ceil(radar.max_range / radar.range_resolution))
    ranges = np.arange(n_range) * radar.range_resolution
    tx, rx = _element_coordinates(radar)
    sigma = radar.range_resolution / 2.0
    samples = np.zeros((n_frames, n_range, radar.n_virtual), dtype=np.complex128)

    strongest = 0.0
    for target in config.targets:
        local = radar.to_local(target.position)
        amp = _echo_amplitude(config, radar, target)
        strongest = max(strongest, target.reflectivity / float(np.hypot(*local)))
        offset = target.rest_range_offset + target.displacement(t)
        _add_point_echo(samples, ranges, tx, rx, local, offset, amp, radar.wavelength, sigma)

    rng = substream(config.rng_seed, "scene", index)
    if config.n_clutter and config.clutter_scale:
        # Static reflectors scattered over the forward half-plane; constant in slow time.
        clutter = np.zeros((1, n_range, radar.n_virtual), dtype=np.complex128)
        for _ in range(config.n_clutter):
            rho = rng.uniform(0.3, 0.95 * radar.max_range)
            phi = rng.uniform(-np.pi / 3, np.pi / 3)
            pos = (rho * np.sin(phi), rho * np.cos(phi))
            amp = config.clutter_scale * strongest * np.exp(2j * np.pi * rng.uniform())
            _add_point_echo(clutter, ranges, tx, rx, pos, np.zeros(1), amp, radar.wavelength, sigma)
        samples += clutter
    if config.noise_power > 0:
        scale = math.sqrt(config.noise_power / 2.0)
        samples += scale * (rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape))

    return SlowTimeCube(
        radar_id=radar.id,
        samples=samples,
        range_bin_size=radar.range_resolution,
        t0=0.0,
        slow_dt=radar.slow_dt,
        wavelength=radar.wavelength,
        element_x=virtual_array_positions(radar),
    )


def synthesize(config: SceneConfig) -> list[SlowTimeCube]:
    """One slow-time cube per radar, in ``config.radars`` order."""
    if not config.targets:
        raise ValueError("scene needs at least one target")
    return [synthesize_radar(config, radar, i) for i, radar in enumerate(config.radars)]


@dataclass
class TargetTruth:
    target_id: int
    positions: dict[int, np.ndarray]
    displacement: np.ndarray
    rate: float
    visible: dict[int, bool]

    def rate_series(self, n_windows: int) -> np.ndarray:
        return np.full(n_windows, self.rate)


@dataclass
class GroundTruth:
    times: np.ndarray
    targets: list[TargetTruth]
    radar_poses: dict[int, tuple[np.ndarray, np.ndarray]]

    def by_id(self, target_id: int) -> TargetTruth:
        for t in self.targets:
            if t.target_id == target_id:
                return t
        raise KeyError(target_id)

    def relative_transform(self, ref_id: int, other_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(R, t) mapping radar ``other_id`` local coordinates into ``ref_id``'s frame."""
        R1, p1 = self.radar_poses[ref_id]
        R2, p2 = self.radar_poses[other_id]
        return R1.T @ R2, R1.T @ (p2 - p1)


def ground_truth(config: SceneConfig) -> GroundTruth:
    radar = config.radars[0]
    t = np.arange(config.n_frames(radar)) * radar.slow_dt
    occl = occlusion_table(config)
    targets = []
    for tgt in config.targets:
        targets.append(TargetTruth(
            target_id=tgt.id,
            positions={r.id: r.to_local(tgt.position) for r in config.radars},
            displacement=tgt.displacement(t),
            rate=float(tgt.rate),
            visible={r.id: not occl[(r.id, tgt.id)] for r in config.radars},
        ))
    poses = {r.id: (r.rotation, np.asarray(r.position, dtype=float)) for r in config.radars}
    return GroundTruth(times=t, targets=targets, radar_poses=poses)
