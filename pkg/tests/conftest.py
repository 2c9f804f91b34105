import math
from pathlib import Path

import numpy as np
import pytest

from multiradar.clustering import merge_fragments, pixel_weights, sample_point_cloud, xmeans
from multiradar.config import load_config
from multiradar.imaging import ImageGrid, beamform, suppress_clutter
from multiradar.pipeline import run
from multiradar.scene import ground_truth, synthesize

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "multiradar" / "scenarios"


def scenario_config(n: int):
    return load_config(SCENARIOS / f"scenario{n}.cfg")


@pytest.fixture(scope="session")
def scenario1_config():
    return scenario_config(1)


@pytest.fixture(scope="session")
def scenario2_config():
    return scenario_config(2)


@pytest.fixture(scope="session")
def scenario1_report(scenario1_config):
    return run(scenario1_config, write=False)


@pytest.fixture(scope="session")
def scenario2_report(scenario2_config):
    return run(scenario2_config, write=False)


@pytest.fixture(scope="session")
def scenario1_window():
    """First 30 s of scenario 1: images and clusters of both radars plus ground truth."""
    cfg = scenario_config(1)
    scene = cfg.scene_config()
    scene.duration = 30.0
    cubes = synthesize(scene)
    grid = ImageGrid()
    out = {"truth": ground_truth(scene), "images": {}, "clusters": {}}
    for cube in cubes:
        image = beamform(suppress_clutter(cube), grid)
        cloud = sample_point_cloud(image, None, 2000, seed=cube.radar_id)
        found = xmeans(cloud, 12, seed=cube.radar_id)
        out["images"][cube.radar_id] = image
        out["clusters"][cube.radar_id] = merge_fragments(found, pixel_weights(image), grid)
    return out


def angle_diff(a, b):
    return abs(math.remainder(a - b, 2 * math.pi))


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


_ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
