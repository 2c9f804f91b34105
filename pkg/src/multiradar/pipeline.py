"""End-to-end batch pipeline: simulate, image, cluster, align, select, evaluate.

Imaging runs one window at a time so only a window's worth of images is
held in memory. Each cluster keeps the complex image series at its
representative pixel; alignment, association, selection and rate
estimation all work from those series.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as mio
from ._rng import substream
from .clustering import cluster_image, merge_fragments, pixel_weights, sample_point_cloud, xmeans
from .config import PipelineConfig, save_config
from .fusion import (AlignmentError, AlignmentResult, RigidTransform2D, align_two_radars,
                     associate)
from .imaging import ImageGrid, beamform, suppress_clutter, taylor_window
from .scene import GroundTruth, ground_truth, synthesize
from .selection import detection_rate, estimate_rpm, kappa, rpm_error, select_radar

log = logging.getLogger(__name__)

REPORT_SCHEMA = "multiradar-report/1"
STAGES = ("simulate", "image", "cluster", "align", "select", "evaluate")

_HINTS = {
    "simulate": "check the scene section (positions, rates) or the cubes path",
    "image": "check the imaging grid; it must lie in front of the radars and within max_range",
    "cluster": "lower clustering.floor_db or raise n_points; the window may hold no echo power",
    "align": "each radar needs >= 2 clusters in the alignment window; try another fusion.alignment_window",
    "select": "windows must be >= 3.2 s long for the rate estimator and kappa",
    "evaluate": "evaluation needs ground truth: an inline scene or truth.json next to the cubes",
}


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``hint`` suggests a fix."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.hint = _HINTS.get(stage, "")
        super().__init__(f"stage '{stage}' failed: {cause}. Hint: {self.hint}")


class SchemaMismatch(ValueError):
    """Two reports do not share a structure and cannot be compared."""


@dataclass
class RunReport:
    """Everything a run produces. ``to_dict`` is deterministic; ``runtime`` is kept apart."""

    config: dict
    radars: list
    n_windows: int
    clusters: dict = field(default_factory=dict)
    alignment: dict = field(default_factory=dict)
    fused: list = field(default_factory=list)
    detection: dict = field(default_factory=dict)
    rpm_error: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean({
            "schema": REPORT_SCHEMA,
            "config": self.config,
            "radars": self.radars,
            "n_windows": self.n_windows,
            "stages": self.stages,
            "clusters": self.clusters,
            "alignment": self.alignment,
            "fused": self.fused,
            "detection": self.detection,
            "rpm_error": self.rpm_error,
        })

    @classmethod
    def from_dict(cls, d: dict, runtime=None) -> "RunReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise SchemaMismatch(f"unknown report schema {d.get('schema')!r}")
        keys = ("config", "radars", "n_windows", "clusters", "alignment", "fused",
                "detection", "rpm_error", "stages")
        return cls(**{k: d.get(k) for k in keys}, runtime=runtime or {})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False)

    # Convenience views used by tests and the report command.
    def transform(self, other=None, refined: bool = True) -> tuple | None:
        al = self._alignment(other)
        if al is None:
            return None
        t = al["refined" if refined else "seed"]
        return t["x"], t["y"], t["theta"]

    def _alignment(self, other):
        if not self.alignment:
            return None
        key = str(other) if other is not None else sorted(self.alignment)[0]
        return self.alignment.get(key)


def _clean(obj):
    """JSON-safe copy: string keys, builtin numbers, NaN as None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def truth_to_dict(truth: GroundTruth) -> dict:
    return _clean({
        "radar_poses": {rid: {"rotation": R, "position": p} for rid, (R, p) in truth.radar_poses.items()},
        "targets": [
            {"id": t.target_id, "rate": t.rate,
             "positions": {rid: p for rid, p in t.positions.items()},
             "visible": {rid: v for rid, v in t.visible.items()}}
            for t in truth.targets
        ],
    })


def _truth_view(truth) -> dict:
    """Normalise GroundTruth or its dict form into plain lookups keyed by int ids."""
    if isinstance(truth, GroundTruth):
        truth = truth_to_dict(truth)
    return {
        "poses": {int(r): (np.array(v["rotation"]), np.array(v["position"]))
                  for r, v in truth["radar_poses"].items()},
        "rates": {int(t["id"]): float(t["rate"]) for t in truth["targets"]},
        "positions": {int(r): {int(t["id"]): np.array(t["positions"][r]) for t in truth["targets"]}
                      for r in truth["targets"][0]["positions"]},
    }


def true_transform(truth, ref: int, other: int) -> RigidTransform2D:
    tv = _truth_view(truth)
    R1, p1 = tv["poses"][ref]
    R2, p2 = tv["poses"][other]
    return RigidTransform2D(R1.T @ R2, R1.T @ (p2 - p1))


# Stage helpers ------------------------------------------------------------

def _load_inputs(config: PipelineConfig):
    if isinstance(config.scene, str):
        root = Path(config.scene)
        cubes = [mio.read_cube(p) for p in sorted(root.glob("*.cube"))]
        if not cubes:
            raise FileNotFoundError(f"no .cube files under {root}")
        truth_path = root / "truth.json"
        truth = json.loads(truth_path.read_text()) if truth_path.exists() else None
        return cubes, truth
    scene = config.scene_config()
    return synthesize(scene), ground_truth(scene)


def _windows(n_frames: int, slow_dt: float, length: float):
    per = int(round(length / slow_dt))
    if per < 2:
        raise ValueError(f"window of {length} s holds fewer than 2 frames")
    n = n_frames // per
    if n < 1:
        raise ValueError(f"recording of {n_frames} frames is shorter than one {length} s window")
    return per, n


def _cluster_window(image, cfg: PipelineConfig, seed, radar_id: int, w: int):
    cp = cfg.clustering
    cloud = sample_point_cloud(image, None, cp.n_points, substream(seed, "cloud", radar_id, w), cp.floor_db)
    found = xmeans(cloud, cp.k_max, substream(seed, "xmeans", radar_id, w), cp.min_fraction)
    weights = pixel_weights(image, None, cp.floor_db)
    return merge_fragments(found, weights, image.grid, cp.merge_dip_db, cp.merge_reach)


def _transform_dict(T: RigidTransform2D) -> dict:
    x, y, th = T.params
    return {"x": x, "y": y, "theta": th}


def _alignment_dict(res: AlignmentResult) -> dict:
    return {
        "correlation": {"labels1": res.correlation.labels1, "labels2": res.correlation.labels2,
                        "values": res.correlation.values},
        "seed_pairs": res.seed_pairs,
        "seed": _transform_dict(res.seed_transform),
        "refined": _transform_dict(res.transform),
        "seed_residual": res.seed_residual,
        "refined_residual": res.refined_residual,
        "low_confidence": res.low_confidence,
        "association": {"pairs": res.association.pairs, "unpaired_1": res.association.unpaired_1,
                        "unpaired_2": res.association.unpaired_2},
    }


def _fuse_window(clusters_w: dict, series_w: dict, transforms: dict, ref: int, d_th: float):
    """Fused targets of one window: reference clusters first, then other radars' leftovers."""
    fused = []
    by_ref = {}
    for c in clusters_w[ref]:
        ft = {"members": {ref: c.label}, "points": [c.representative]}
        fused.append(ft)
        by_ref[c.label] = ft
    for rid, T in transforms.items():
        assoc = associate(clusters_w[ref], clusters_w[rid], T, d_th)
        rep2 = {c.label: c.representative for c in clusters_w[rid]}
        for l1, l2 in assoc.pairs:
            by_ref[l1]["members"][rid] = l2
            by_ref[l1]["points"].append(T.apply(rep2[l2]))
        for l2 in assoc.unpaired_2:
            fused.append({"members": {rid: l2}, "points": [T.apply(rep2[l2])]})
    out = []
    for ft in fused:
        pos = np.mean(ft["points"], axis=0)
        out.append({"members": ft["members"], "x": pos[0], "y": pos[1]})
    out.sort(key=lambda f: (f["x"], f["y"]))
    for i, f in enumerate(out):
        f["id"] = f"F{i + 1}"
    return out


def _select_window(fused_w: list, series_w: dict, slow_dt: float, sp):
    use_phase = sp.kappa_signal == "phase"
    for f in fused_w:
        scores = {rid: kappa(series_w[rid][lab], slow_dt, tuple(sp.band_hz), use_phase)
                  for rid, lab in f["members"].items()}
        chosen = select_radar(scores)
        phase = np.unwrap(np.angle(series_w[chosen][f["members"][chosen]]))
        rate, detected = estimate_rpm(phase - phase.mean(), slow_dt, tuple(sp.rate_band_rpm),
                                      method=sp.estimator)
        f["kappa"] = {rid: scores[rid] for rid in sorted(scores)}
        f["radar"] = chosen
        f["rpm"] = rate
        f["detected"] = detected


def evaluate_report(report: RunReport, truth, gate: float = 0.5) -> None:
    """Fill detection and rate-error tables of ``report`` from ground truth in place."""
    tv = _truth_view(truth)
    radars = [int(r) for r in report.radars]
    ref = radars[0]
    detections = {}
    for rid in radars:
        for w, cl in enumerate(report.clusters[str(rid)]):
            detections[(rid, w)] = np.array([[c["x"], c["y"]] for c in cl]).reshape(-1, 2)
    det = detection_rate(detections, {r: tv["positions"][r] for r in radars}, report.n_windows, gate)
    report.detection = {("fused" if k == "fused" else f"radar {k}"): v for k, v in det.items()}

    ref_truth = tv["positions"][ref]
    tids = sorted(ref_truth)
    truth_xy = np.array([ref_truth[t] for t in tids])
    estimates = {t: [math.nan] * report.n_windows for t in tids}
    for w, fw in enumerate(report.fused):
        best = {}
        for f in fw:
            d = np.linalg.norm(truth_xy - np.array([f["x"], f["y"]]), axis=1)
            k = int(np.argmin(d))
            f["true_target"] = tids[k] if d[k] <= gate else None
            f["true_rpm"] = tv["rates"][tids[k]] if d[k] <= gate else None
            if d[k] <= gate and f.get("detected") and (tids[k] not in best or d[k] < best[tids[k]][0]):
                best[tids[k]] = (d[k], f["rpm"])
        for t, (_, rate) in best.items():
            estimates[t][w] = rate
    err = rpm_error(estimates, tv["rates"])
    report.rpm_error = {"per_target": err["per_target"], "mean": err["mean"],
                        "estimates": estimates}


# Orchestration ------------------------------------------------------------

def run(config: PipelineConfig, out_dir=None, until: str = "evaluate", write: bool = True) -> RunReport:
    """Run the pipeline through stage ``until`` and write its artifacts.

    Raises
    ------
    StageError
        On any stage failure; whatever was computed so far is written to
        ``partial_report.json`` in the output directory first.
    """
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; choose from {STAGES}")
    last = STAGES.index(until)
    out = Path(out_dir or config.output_dir or "multiradar_out")
    report = RunReport(config=config.to_dict(), radars=[], n_windows=0)
    timings = {}
    stage = "simulate"
    try:
        t0 = time.perf_counter()
        cubes, truth = _load_inputs(config)
        cubes = [c for c in cubes if c.radar_id not in set(config.disabled_radars)]
        if not cubes:
            raise ValueError("every radar is disabled")
        report.radars = [int(c.radar_id) for c in cubes]
        report.stages.append(stage)
        timings[stage] = time.perf_counter() - t0
        if last == 0:
            return _finish(report, timings, out, write)

        slow_dt = cubes[0].slow_dt
        per, n_win = _windows(min(c.n_frames for c in cubes), slow_dt, config.fusion.window)
        report.n_windows = n_win
        ip = config.imaging
        grid = ImageGrid(ip.x_min, ip.x_max, ip.y_min, ip.y_max, ip.pixel_size)
        stage = "image"
        suppressed = [suppress_clutter(c) for c in cubes]
        clusters = {c.radar_id: [] for c in cubes}
        series = {c.radar_id: [] for c in cubes}
        align_images = {}
        a_win = config.fusion.alignment_window
        if not 0 <= a_win < n_win:
            raise ValueError(f"alignment_window {a_win} outside 0..{n_win - 1}")
        timings["image"] = timings["cluster"] = 0.0
        for w in range(n_win):
            for cube in suppressed:
                stage = "image"
                t0 = time.perf_counter()
                image = beamform(cube.frames(w * per, (w + 1) * per), grid,
                                 taylor_window(cube.n_elements, ip.sidelobe_db, ip.nbar))
                timings["image"] += time.perf_counter() - t0
                if config.image_dumps and write:
                    out.mkdir(parents=True, exist_ok=True)
                    mio.write_image(out / f"image_r{cube.radar_id}_w{w}.mrd", image)
                if last < 2:
                    continue
                stage = "cluster"
                t0 = time.perf_counter()
                found = _cluster_window(image, config, config.seed, cube.radar_id, w)
                timings["cluster"] += time.perf_counter() - t0
                clusters[cube.radar_id].append(found)
                if config.image_dumps and write:
                    mio.write_magnitude_csv(out / f"magnitude_r{cube.radar_id}_w{w}.csv", image)
                    mio.write_label_csv(out / f"clusters_r{cube.radar_id}_w{w}.csv",
                                        cluster_image(found, image.grid))
                series[cube.radar_id].append({c.label: image.pixel_series(c.representative).copy()
                                              for c in found})
                if w == a_win:
                    align_images[cube.radar_id] = image
        report.stages.append("image")
        if last < 2:
            return _finish(report, timings, out, write)
        report.clusters = {
            str(rid): [[{"label": c.label, "x": c.representative[0], "y": c.representative[1],
                    "n_members": c.n_members, "mean_power": c.mean_power} for c in cw] for cw in cl]
            for rid, cl in clusters.items()
        }
        report.stages.append("cluster")
        if last < 3:
            return _finish(report, timings, out, write)

        stage = "align"
        t0 = time.perf_counter()
        ref = report.radars[0]
        transforms = {}
        for rid in report.radars[1:]:
            res = align_two_radars(clusters[ref][a_win], clusters[rid][a_win],
                                   align_images[ref], align_images[rid], config.fusion.d_th)
            transforms[rid] = res.transform
            report.alignment[str(rid)] = _alignment_dict(res)
        align_images.clear()
        timings["align"] = time.perf_counter() - t0
        report.stages.append("align")
        if last < 4:
            return _finish(report, timings, out, write)

        stage = "select"
        t0 = time.perf_counter()
        for w in range(n_win):
            cw = {rid: clusters[rid][w] for rid in report.radars}
            sw = {rid: series[rid][w] for rid in report.radars}
            fused_w = _fuse_window(cw, sw, transforms, ref, config.fusion.d_th)
            _select_window(fused_w, sw, slow_dt, config.selection)
            report.fused.append(fused_w)
        timings["select"] = time.perf_counter() - t0
        report.stages.append("select")
        if last < 5 or not config.evaluation.enabled:
            return _finish(report, timings, out, write)

        stage = "evaluate"
        if truth is None:
            raise ValueError("no ground truth available")
        evaluate_report(report, truth, config.evaluation.gate)
        report.stages.append("evaluate")
        return _finish(report, timings, out, write, truth)
    except StageError:
        raise
    except (ValueError, AlignmentError, FileNotFoundError, KeyError, np.linalg.LinAlgError) as exc:
        if write:
            out.mkdir(parents=True, exist_ok=True)
            (out / "partial_report.json").write_text(report.to_json())
        raise StageError(stage, exc) from exc


def _finish(report: RunReport, timings: dict, out: Path, write: bool, truth=None) -> RunReport:
    report.runtime = {k: round(v, 6) for k, v in timings.items()}
    report.runtime["total"] = round(sum(timings.values()), 6)
    if write:
        write_artifacts(report, out)
    return report


# Artifacts ------------------------------------------------------------------

def write_artifacts(report: RunReport, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    (out / "report.json").write_text(report.to_json())
    (out / "timings.json").write_text(json.dumps(report.runtime, indent=1, sort_keys=True))
    rows = [(rid, w, c["label"], c["x"], c["y"], c["n_members"], c["mean_power"])
            for rid, cl in d["clusters"].items() for w, cw in enumerate(cl) for c in cw]
    mio.write_csv(out / "clusters.csv", ["radar", "window", "label", "x", "y", "n_members", "mean_power"], rows)
    for rid, al in d["alignment"].items():
        c = al["correlation"]
        mio.write_csv(out / f"correlation_r{rid}.csv", ["radar1\\radar" + rid] + c["labels2"],
                      [[lab] + row for lab, row in zip(c["labels1"], c["values"])])
        mio.write_csv(out / f"transform_r{rid}.csv", ["stage", "x", "y", "theta", "residual"], [
            ("seed", al["seed"]["x"], al["seed"]["y"], al["seed"]["theta"], al["seed_residual"]),
            ("refined", al["refined"]["x"], al["refined"]["y"], al["refined"]["theta"], al["refined_residual"]),
        ])
        a = al["association"]
        mio.write_csv(out / f"association_r{rid}.csv", ["radar1_label", "radar" + rid + "_label"],
                      [tuple(p) for p in a["pairs"]] + [(l, None) for l in a["unpaired_1"]]
                      + [(None, l) for l in a["unpaired_2"]])
    if d["fused"]:
        radars = [str(r) for r in d["radars"]]
        header = (["window", "fused_id"] + [f"label_r{r}" for r in radars] + ["x", "y", "true_target",
                  "chosen_radar"] + [f"kappa_r{r}" for r in radars] + ["rpm", "detected", "true_rpm", "abs_error"])
        rows = []
        for w, fw in enumerate(d["fused"]):
            for f in fw:
                err = (abs(f["rpm"] - f["true_rpm"]) if f.get("true_rpm") is not None and f["rpm"] is not None
                       else None)
                rows.append([w, f["id"]] + [f["members"].get(r) for r in radars]
                            + [f["x"], f["y"], f.get("true_target"), f["radar"]]
                            + [f["kappa"].get(r) for r in radars]
                            + [f["rpm"], f["detected"], f.get("true_rpm"), err])
        mio.write_csv(out / "per_window.csv", header, rows)
    if d["detection"]:
        tids = sorted(d["detection"]["fused"], key=int)
        names = {k: ("Proposed" if k == "fused" else k.capitalize()) for k in d["detection"]}
        mio.write_csv(out / "detection.csv", ["source"] + [f"target {t}" for t in tids],
                      [[names[k]] + [v[t] for t in tids] for k, v in d["detection"].items()])
        per = d["rpm_error"]["per_target"]
        mio.write_csv(out / "rpm_error.csv", ["target", "abs_error_rpm"],
                      [(t, per[t]) for t in sorted(per, key=int)] + [("mean", d["rpm_error"]["mean"])])
    return out


def load_report(path) -> RunReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    d = json.loads(path.read_text())
    t = path.parent / "timings.json"
    return RunReport.from_dict(d, json.loads(t.read_text()) if t.exists() else None)


# Comparison -----------------------------------------------------------------

@dataclass(frozen=True)
class Difference:
    path: str
    a: object
    b: object


def compare(report_a, report_b, rtol: float = 0.0, atol: float = 0.0) -> list[Difference]:
    """Field-wise differences between two reports, ignoring runtime metrics.

    Numbers match when ``|a - b| <= atol + rtol * |b|``. Structural
    differences inside the report (list lengths, missing keys) are listed as
    differences; reports of different schema raise :class:`SchemaMismatch`.
    """
    a = report_a.to_dict() if isinstance(report_a, RunReport) else report_a
    b = report_b.to_dict() if isinstance(report_b, RunReport) else report_b
    if a.get("schema") != b.get("schema") or set(a) != set(b):
        raise SchemaMismatch("reports have different schemas")
    diffs: list[Difference] = []
    _diff(a, b, "", rtol, atol, diffs)
    return diffs


def _diff(a, b, path, rtol, atol, out):
    num = (int, float)
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append(Difference(f"{path}/{k}", a.get(k), b.get(k)))
            else:
                _diff(a[k], b[k], f"{path}/{k}", rtol, atol, out)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append(Difference(f"{path}#len", len(a), len(b)))
        for i, (x, y) in enumerate(zip(a, b)):
            _diff(x, y, f"{path}[{i}]", rtol, atol, out)
    elif isinstance(a, num) and isinstance(b, num) and not isinstance(a, bool) and not isinstance(b, bool):
        if abs(a - b) > atol + rtol * abs(b):
            out.append(Difference(path, a, b))
    elif a != b:
        out.append(Difference(path, a, b))


def simulate(config: PipelineConfig, out_dir) -> Path:
    """Write one cube per radar, ground truth and a config pointing at them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = config.scene_config()
    for cube in synthesize(scene):
        mio.write_cube(out / f"r{cube.radar_id}.cube", cube)
    (out / "truth.json").write_text(json.dumps(truth_to_dict(ground_truth(scene)), indent=1, sort_keys=True))
    replay = dataclasses.replace(config, scene=".", output_dir=None)
    save_config(replay, out / "scene.cfg")
    return out
