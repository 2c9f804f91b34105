import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import angle_diff, rot
from multiradar.fusion import (AlignmentError, DegenerateGeometryError, RigidTransform2D, TooFewClustersError,
                               align_star, align_two_radars, associate, extract_waveform, procrustes,
                               resp_correlation, top_two_pairs)
from multiradar.imaging import ImageGrid, beamform, suppress_clutter
from multiradar.scene import DEFAULT_WAVELENGTH, BreathingTarget, RadarPlacement, SceneConfig, synthesize

TABLE_I = np.array([
    [0.13, 0.63, 0.02, 0.15, 0.01, 0.17, 0.07],
    [0.19, 0.60, 0.10, 0.52, 0.34, 0.02, 0.02],
    [0.20, 0.05, 0.04, 0.03, 0.81, 0.01, 0.01],
    [0.24, 0.08, 0.36, 0.06, 0.14, 0.36, 0.23],
    [0.18, 0.07, 0.89, 0.04, 0.15, 0.13, 0.80],
    [0.04, 0.27, 0.56, 0.29, 0.04, 0.20, 0.51],
])


def objective(R, t, S1, S2):
    return float(np.sum((S1 - (R @ S2 + t[:, None])) ** 2))


def grid_minimum(S1, S2, step=1e-3):
    """Exhaustive rotation search with the optimal translation for each angle."""
    c1 = S1 - S1.mean(axis=1, keepdims=True)
    c2 = S2 - S2.mean(axis=1, keepdims=True)
    th = np.arange(-math.pi, math.pi, step)
    c, s = np.cos(th), np.sin(th)
    rx = c[:, None] * c2[0] - s[:, None] * c2[1]
    ry = s[:, None] * c2[0] + c[:, None] * c2[1]
    return float(np.min(np.sum((c1[0] - rx) ** 2 + (c1[1] - ry) ** 2, axis=1)))


# -- waveforms and correlation ---------------------------------------------------------------

def _breathing_image(amplitude, suppress=True):
    scene = SceneConfig([BreathingTarget(1, (0.3, 2.0), amplitude=amplitude, rate=15.0)], [RadarPlacement(1)],
                        duration=30.0, noise_power=0.0, clutter_scale=0.0)
    cube = synthesize(scene)[0]
    return beamform(suppress_clutter(cube) if suppress else cube, ImageGrid(-1, 1, 1, 3))


def test_waveform_swing_matches_displacement():
    w = extract_waveform(_breathing_image(2e-3), (0.3, 2.0), "A")
    assert np.ptp(w.samples) == pytest.approx(4 * np.pi * 2 * 0.002 / DEFAULT_WAVELENGTH, rel=0.10)
    assert w.samples.size == 300 and np.all(np.isfinite(w.samples))
    assert abs(w.samples.mean()) < 1e-12


def test_static_waveform_is_flat():
    w = extract_waveform(_breathing_image(1e-300, suppress=False), (0.3, 2.0))
    assert np.abs(w.samples).max() < 1e-12


def test_waveform_repeatable():
    img = _breathing_image(2e-3)
    assert np.array_equal(extract_waveform(img, (0.3, 2.0)).samples, extract_waveform(img, (0.3, 2.0)).samples)


def test_waveform_outside_grid():
    with pytest.raises(ValueError):
        extract_waveform(_breathing_image(2e-3), (5.0, 2.0))


def test_correlation_sign_insensitive():
    x = np.sin(np.linspace(0, 20, 300))
    assert resp_correlation(x, x) == pytest.approx(1.0)
    assert resp_correlation(x, -x) == pytest.approx(1.0)


def test_correlation_zero_variance():
    assert resp_correlation(np.ones(50), np.arange(50.0)) == 0.0


def test_correlation_length_mismatch():
    with pytest.raises(ValueError):
        resp_correlation(np.zeros(10), np.zeros(11))


def test_independent_noise_correlation_small():
    below = 0
    for s in range(100):
        rng = np.random.default_rng(s)
        below += resp_correlation(rng.standard_normal(300), rng.standard_normal(300)) < 0.25
    assert below >= 95


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_correlation_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    assert 0.0 <= resp_correlation(rng.standard_normal(40), rng.standard_normal(40)) <= 1.0


# -- top two pairs ----------------------------------------------------------------------------

def test_top_two_pairs_on_published_table():
    (a, b), (c, d) = top_two_pairs(TABLE_I)
    labels = "ABCDEFG"
    assert (labels[a], labels[b]) == ("E", "C") and TABLE_I[a, b] == 0.89
    assert (labels[c], labels[d]) == ("C", "E") and TABLE_I[c, d] == 0.81


def test_top_two_pairs_diagonal():
    assert top_two_pairs([[0.9, 0.1], [0.1, 0.8]]) == ((0, 0), (1, 1))


def _top_two_oracle(c):
    cells = sorted(itertools.product(range(c.shape[0]), range(c.shape[1])), key=lambda rc: (-c[rc], rc))
    first = cells[0]
    second = next(rc for rc in cells if rc[0] != first[0] and rc[1] != first[1])
    return first, second


def test_top_two_pairs_tie_rule():
    c = np.array([[0.5, 0.9, 0.1], [0.9, 0.3, 0.7], [0.2, 0.6, 0.4]])
    assert top_two_pairs(c) == ((0, 1), (1, 0)) == _top_two_oracle(c)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_top_two_pairs_matches_enumeration(n1, n2, seed):
    # Coarse values force frequent ties.
    c = np.random.default_rng(seed).integers(0, 4, size=(n1, n2)) / 4
    assert top_two_pairs(c) == _top_two_oracle(c)


@pytest.mark.parametrize("shape", [(1, 5), (5, 1), (0, 0)])
def test_top_two_pairs_too_few(shape):
    with pytest.raises(TooFewClustersError):
        top_two_pairs(np.ones(shape))


# -- Procrustes -----------------------------------------------------------------------------

def test_procrustes_identity():
    S = np.array([[0.0, 1.0, 0.3], [0.0, 0.2, 2.0]])
    T = procrustes(S, S)
    assert np.allclose(T.R, np.eye(2), atol=1e-12) and np.allclose(T.t, 0, atol=1e-12)


def test_procrustes_recovers_generating_transform():
    rng = np.random.default_rng(2)
    th0, t0 = rng.uniform(-math.pi, math.pi), rng.uniform(-3, 3, 2)
    S1 = rng.uniform(-3, 3, (2, 5))
    S2 = rot(-th0) @ (S1 - t0[:, None])
    T = procrustes(S1, S2)
    assert angle_diff(T.theta, th0) < 1e-9 and np.allclose(T.t, t0, atol=1e-9)


def test_procrustes_reflected_input_keeps_rotation():
    rng = np.random.default_rng(4)
    S1 = rng.uniform(-2, 2, (2, 6))
    S2 = np.diag([1.0, -1.0]) @ S1
    T = procrustes(S1, S2)
    assert np.linalg.det(T.R) == pytest.approx(1.0, abs=1e-12)
    assert objective(T.R, T.t, S1, S2) <= grid_minimum(S1, S2) + 1e-9


def test_procrustes_collinear_input():
    S1 = np.array([[0.0, 1.0, 2.0, 3.0], [0.0, 0.5, 1.0, 1.5]])
    S2 = np.array([[1.0, 0.0, -1.0, -2.0], [2.0, 2.2, 2.4, 2.6]])
    T = procrustes(S1, S2)
    assert np.linalg.det(T.R) == pytest.approx(1.0, abs=1e-12)
    assert objective(T.R, T.t, S1, S2) <= grid_minimum(S1, S2) + 1e-9


def test_procrustes_errors():
    with pytest.raises(AlignmentError):
        procrustes(np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(DegenerateGeometryError):
        procrustes(np.ones((2, 3)), np.array([[0.0, 1.0, 2.0], [0.0, 0.0, 0.0]]))
    with pytest.raises(ValueError):
        procrustes(np.zeros((3, 4)), np.zeros((3, 4)))


point_sets = st.tuples(st.integers(2, 10), st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.05]))


def _random_set(n, seed, sigma):
    rng = np.random.default_rng(seed)
    th0, t0 = rng.uniform(-math.pi, math.pi), rng.uniform(-3, 3, 2)
    S1 = rng.uniform(-3, 3, (2, n))
    S2 = rot(-th0) @ (S1 - t0[:, None]) + rng.normal(0, sigma, (2, n))
    return S1, S2


@settings(max_examples=40, deadline=None)
@given(point_sets)
def test_procrustes_orthonormal_and_optimal(args):
    S1, S2 = _random_set(*args)
    T = procrustes(S1, S2)
    assert np.allclose(T.R.T @ T.R, np.eye(2), atol=1e-10)
    assert np.linalg.det(T.R) == pytest.approx(1.0, abs=1e-12)
    assert objective(T.R, T.t, S1, S2) <= grid_minimum(S1, S2) + 1e-9


@settings(max_examples=40, deadline=None)
@given(point_sets, st.floats(-math.pi, math.pi))
def test_procrustes_rotation_equivariance(args, q):
    S1, S2 = _random_set(*args)
    Q = rot(q)
    T, Tq = procrustes(S1, S2), procrustes(Q @ S1, Q @ S2)
    assert np.allclose(Tq.R, Q @ T.R @ Q.T, atol=1e-9)
    assert np.allclose(Tq.t, Q @ T.t, atol=1e-9)


def test_theta_canonical_range():
    assert RigidTransform2D.from_params(0, 0, -math.pi).theta == math.pi
    assert RigidTransform2D.from_params(0, 0, 3.06 + 2 * math.pi).theta == pytest.approx(3.06)
    assert RigidTransform2D.from_params(0, 0, -3.07).theta == pytest.approx(-3.07)


def test_inverse_round_trip():
    T = RigidTransform2D.from_params(0.4, -1.2, 2.2)
    p = np.array([[1.0, 2.0], [-0.5, 3.0]])
    assert np.allclose(T.inverse().apply(T.apply(p)), p, atol=1e-12)


# -- association ----------------------------------------------------------------------------

def test_associate_keeps_only_mutual_nearest():
    a = associate({"A": (0.0, 0.0)}, {"X": (0.1, 0.0), "Y": (0.3, 0.0)}, RigidTransform2D.identity(), 0.5)
    assert a.pairs == [("A", "X")] and a.unpaired_2 == ["Y"] and a.unpaired_1 == []


def test_associate_empty_side():
    a = associate({"A": (0.0, 0.0), "B": (1.0, 0.0)}, {}, RigidTransform2D.identity())
    assert a.pairs == [] and a.unpaired_1 == ["A", "B"]


def test_associate_gate():
    a = associate({"A": (0.0, 0.0)}, {"X": (0.6, 0.0)}, RigidTransform2D.identity(), 0.5)
    assert a.pairs == []


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 8))
def test_associate_symmetric_under_inverse(seed, n1, n2):
    rng = np.random.default_rng(seed)
    T = RigidTransform2D.from_params(*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi))
    r1 = {f"a{i}": rng.uniform(-2, 2, 2) for i in range(n1)}
    r2 = {f"b{i}": rng.uniform(-2, 2, 2) for i in range(n2)}
    fwd = associate(r1, r2, T, 1.0)
    back = associate(r2, r1, T.inverse(), 1.0)
    assert sorted(fwd.pairs) == sorted((q, p) for p, q in back.pairs)
    for assoc in (fwd, back):
        left = [p for p, _ in assoc.pairs]
        right = [q for _, q in assoc.pairs]
        assert len(set(left)) == len(left) and len(set(right)) == len(right)


# -- two-radar alignment on the simulated scene ----------------------------------------------------

def test_alignment_recovers_layout(scenario1_window):
    w = scenario1_window
    res = align_two_radars(w["clusters"][1], w["clusters"][2], w["images"][1], w["images"][2], 0.5)
    R, t = w["truth"].relative_transform(1, 2)
    x, y, th = res.transform.params
    assert math.hypot(x - t[0], y - t[1]) <= 0.1
    assert angle_diff(th, math.atan2(R[1, 0], R[0, 0])) <= 0.05
    assert res.refined_residual <= res.seed_residual
    assert not res.low_confidence
    assert len(res.association.pairs) == 6 and len(res.association.unpaired_2) == 1
    assert np.all((res.correlation.values >= 0) & (res.correlation.values <= 1))


def test_alignment_with_itself_is_identity(scenario1_window):
    w = scenario1_window
    res = align_two_radars(w["clusters"][1], w["clusters"][1], w["images"][1], w["images"][1])
    assert np.allclose(res.transform.R, np.eye(2), atol=1e-6)
    assert np.allclose(res.transform.t, 0, atol=1e-6)


def test_alignment_falls_back_to_seed(scenario1_window):
    w = scenario1_window
    res = align_two_radars(w["clusters"][1], w["clusters"][2], w["images"][1], w["images"][2], d_th=1e-9)
    assert res.low_confidence
    assert res.transform is res.seed_transform


def test_alignment_needs_two_clusters(scenario1_window):
    w = scenario1_window
    with pytest.raises(TooFewClustersError):
        align_two_radars(w["clusters"][1][:1], w["clusters"][2], w["images"][1], w["images"][2])


def test_alignment_invariant_to_relabelling(scenario1_window):
    w = scenario1_window
    c1, c2 = w["clusters"][1], w["clusters"][2]
    base = align_two_radars(c1, c2, w["images"][1], w["images"][2])
    # Reverse the order and rename every cluster.
    r1 = [dataclasses.replace(c, label=f"p{i}") for i, c in enumerate(reversed(c1))]
    r2 = [dataclasses.replace(c, label=f"q{i}") for i, c in enumerate(reversed(c2))]
    other = align_two_radars(r1, r2, w["images"][1], w["images"][2])
    old1 = {f"p{i}": c.label for i, c in enumerate(reversed(c1))}
    old2 = {f"q{i}": c.label for i, c in enumerate(reversed(c2))}
    assert sorted((old1[a], old2[b]) for a, b in other.association.pairs) == sorted(base.association.pairs)
    assert np.allclose(other.transform.R, base.transform.R, atol=1e-9)
    assert np.allclose(other.transform.t, base.transform.t, atol=1e-9)


def test_star_alignment_matches_pairwise(scenario1_window):
    w = scenario1_window
    star = align_star(w["clusters"], w["images"], reference=1)
    pair = align_two_radars(w["clusters"][1], w["clusters"][2], w["images"][1], w["images"][2])
    assert list(star) == [2]
    assert np.allclose(star[2].transform.R, pair.transform.R) and np.allclose(star[2].transform.t, pair.transform.t)
