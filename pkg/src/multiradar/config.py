"""Pipeline configuration and its file format.

Config files are YAML with a mandatory top-level ``version`` key::

    version: 1
    seed: 7
    output_dir: out/scenario1
    scene:                      # either an inline scene ...
      duration: 120.0
      noise_power: 1.0e-4
      occlusion_attenuation: -40.0
      clutter_scale: 10.0
      n_clutter: 3
      radars:
        - {id: 1, position: [0.0, 0.0], orientation: 1.5707963267948966}
      targets:
        - {id: 1, position: [0.6, 3.25], rate: 12.0, amplitude: 0.002, phase0: 0.0}
    # scene: {cubes: path/to/simulated}   ... or recorded cubes
    imaging: {x_min: -4.0, x_max: 4.0, y_min: 0.3, y_max: 7.0, pixel_size: 0.05,
              sidelobe_db: -35.0, nbar: 4}
    clustering: {n_points: 2000, k_max: 12, floor_db: -20.0, min_fraction: 0.01,
                 merge_dip_db: -3.0, merge_reach: 0.1}
    fusion: {d_th: 0.5, window: 30.0, alignment_window: 0}
    selection: {band_hz: [0.1, 0.5], rate_band_rpm: [6.0, 40.0],
                estimator: spectral, kappa_signal: complex}
    evaluation: {enabled: true, gate: 0.5}
    disabled_radars: []
    image_dumps: false

Every section except ``version`` and ``scene`` is optional and falls back to
the defaults shown. Radar and target entries accept any field of
:class:`RadarPlacement` / :class:`BreathingTarget`. Relative paths under
``scene.cubes`` resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .scene import BreathingTarget, RadarPlacement, SceneConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ImagingParams:
    x_min: float = -4.0
    x_max: float = 4.0
    y_min: float = 0.3
    y_max: float = 7.0
    pixel_size: float = 0.05
    sidelobe_db: float = -35.0
    nbar: int = 4


@dataclass
class ClusteringParams:
    n_points: int = 2000
    k_max: int = 12
    floor_db: float = -20.0
    min_fraction: float = 0.01
    merge_dip_db: float = -3.0
    merge_reach: float = 0.1


@dataclass
class FusionParams:
    d_th: float = 0.5
    window: float = 30.0
    alignment_window: int = 0


@dataclass
class SelectionParams:
    band_hz: list = field(default_factory=lambda: [0.1, 0.5])
    rate_band_rpm: list = field(default_factory=lambda: [6.0, 40.0])
    estimator: str = "spectral"
    kappa_signal: str = "complex"

    def __post_init__(self):
        if self.estimator not in ("spectral", "interval"):
            raise ConfigError(f"selection.estimator must be 'spectral' or 'interval', got {self.estimator!r}")
        if self.kappa_signal not in ("complex", "phase"):
            raise ConfigError(f"selection.kappa_signal must be 'complex' or 'phase', got {self.kappa_signal!r}")


@dataclass
class EvaluationParams:
    enabled: bool = True
    gate: float = 0.5


@dataclass
class PipelineConfig:
    scene: SceneConfig | str
    seed: int = 0
    imaging: ImagingParams = field(default_factory=ImagingParams)
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    selection: SelectionParams = field(default_factory=SelectionParams)
    evaluation: EvaluationParams = field(default_factory=EvaluationParams)
    disabled_radars: list = field(default_factory=list)
    output_dir: str | None = None
    image_dumps: bool = False

    def with_seed(self, seed: int) -> "PipelineConfig":
        return dataclasses.replace(self, seed=int(seed))

    def scene_config(self) -> SceneConfig:
        """Inline scene with the pipeline seed driving its random draws."""
        if not isinstance(self.scene, SceneConfig):
            raise ConfigError("config refers to recorded cubes, not an inline scene")
        return dataclasses.replace(self.scene, rng_seed=self.seed)

    def to_dict(self) -> dict:
        d = {"version": CONFIG_VERSION, "seed": int(self.seed), "output_dir": self.output_dir}
        if isinstance(self.scene, SceneConfig):
            d["scene"] = scene_to_dict(self.scene)
        else:
            d["scene"] = {"cubes": str(self.scene)}
        for name in ("imaging", "clustering", "fusion", "selection", "evaluation"):
            d[name] = dataclasses.asdict(getattr(self, name))
        d["disabled_radars"] = [int(r) for r in self.disabled_radars]
        d["image_dumps"] = bool(self.image_dumps)
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        version = d.get("version")
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version!r} (expected {CONFIG_VERSION})")
        known = {"version", "seed", "output_dir", "scene", "imaging", "clustering", "fusion",
                 "selection", "evaluation", "disabled_radars", "image_dumps"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "scene" not in d:
            raise ConfigError("config needs a 'scene' section")
        scene_d = d["scene"]
        if isinstance(scene_d, dict) and "cubes" in scene_d:
            p = Path(scene_d["cubes"])
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            scene = str(p)
        else:
            scene = scene_from_dict(scene_d)

        def section(name, klass):
            try:
                return klass(**(d.get(name) or {}))
            except TypeError as exc:
                raise ConfigError(f"bad '{name}' section: {exc}") from None

        return cls(
            scene=scene,
            seed=int(d.get("seed", 0)),
            imaging=section("imaging", ImagingParams),
            clustering=section("clustering", ClusteringParams),
            fusion=section("fusion", FusionParams),
            selection=section("selection", SelectionParams),
            evaluation=section("evaluation", EvaluationParams),
            disabled_radars=[int(r) for r in d.get("disabled_radars") or []],
            output_dir=d.get("output_dir"),
            image_dumps=bool(d.get("image_dumps", False)),
        )


def scene_to_dict(scene: SceneConfig) -> dict:
    d = dataclasses.asdict(scene)
    d.pop("rng_seed")
    for item in d["radars"] + d["targets"]:
        item["position"] = [float(v) for v in item["position"]]
    return d


def scene_from_dict(d: dict) -> SceneConfig:
    if not isinstance(d, dict):
        raise ConfigError("scene must be a mapping")
    d = dict(d)
    try:
        radars = [RadarPlacement(**_tuple_pos(r)) for r in d.pop("radars")]
        targets = [BreathingTarget(**_tuple_pos(t)) for t in d.pop("targets")]
        d.pop("rng_seed", None)
        return SceneConfig(targets=targets, radars=radars, **d)
    except KeyError as exc:
        raise ConfigError(f"scene is missing {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"bad scene entry: {exc}") from None


def _tuple_pos(entry: dict) -> dict:
    e = dict(entry)
    if "position" in e:
        e["position"] = tuple(e["position"])
    return e


def dumps(config: PipelineConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)


def loads(text: str, base_dir=None) -> PipelineConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return PipelineConfig.from_dict(data, base_dir)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return loads(path.read_text(), base_dir=path.parent)


def save_config(config: PipelineConfig, path) -> Path:
    path = Path(path)
    path.write_text(dumps(config))
    return path
