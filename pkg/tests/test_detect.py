from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from rmtdetect.detect import (
    MsrPoint,
    choose_m,
    flag_events,
    msr_series,
    pca_fit,
    pca_peak,
    pca_score,
    pca_series,
    robust_flags,
)
from rmtdetect.errors import ConfigError, DimensionError
from rmtdetect.ingest import SampleFrame
from rmtdetect.rmt import ring_mean_radius
from rmtdetect.synth import default_scenario, generate_scenario


def _frames_from(x):
    ids = tuple(f"c{i}" for i in range(x.shape[0]))
    return [SampleFrame(t=j, values=tuple(x[:, j]), channels=ids) for j in range(x.shape[1])]


def _series(values, degenerate=None):
    deg = degenerate or [False] * len(values)
    return [MsrPoint(i, 10 * i + 9, 10 * i, float(v), 0.5, 0.0, d, 8) for i, (v, d) in enumerate(zip(values, deg))]


def _finite_n_msr(n, t, trials, seed):
    # Independent reimplementation with numpy/scipy primitives.
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        x = rng.normal(size=(n, t))
        x = (x - x.mean(1, keepdims=True)) / x.std(1, keepdims=True)
        u, s, _ = np.linalg.svd(x, full_matrices=False)
        z = (u * s) @ u.T @ unitary_group.rvs(n, random_state=rng)
        z = z / (np.sqrt(n) * z.std(axis=0))
        out.append(np.abs(np.linalg.eigvals(z)).mean())
    return float(np.mean(out))


# -- MSR series ---------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def quiet_frames():
    return generate_scenario(default_scenario(seed=0, with_event=False))


def test_msr_baseline_matches_finite_size_oracle(quiet_frames):
    pts = msr_series(quiet_frames, T=10, stride=10, seed=0)
    assert len(pts) == 432
    ours = np.mean([p.msr for p in pts])
    assert abs(ours - _finite_n_msr(8, 10, 2000, 1)) < 0.02
    assert all(p.r_in == pytest.approx(np.sqrt(0.2)) for p in pts)


def test_msr_large_window_matches_analytic():
    x = np.random.default_rng(3).normal(size=(160, 200 * 8))
    pts = msr_series(_frames_from(x), T=200, stride=200, seed=1)
    assert len(pts) == 8
    assert abs(np.mean([p.msr for p in pts]) - ring_mean_radius(0.8)) < 0.01


def test_msr_minimum_near_fault_onset():
    cfg = default_scenario(seed=0)
    cfg = replace(cfg, events=(replace(cfg.events[0], t0=2000),))
    frames = generate_scenario(cfg)[1700:2300]
    pts = msr_series(frames, T=10, stride=1, seed=0)
    low = min(pts, key=lambda p: p.msr)
    assert 1991 <= low.t <= 2009


def test_single_window_series():
    x = np.random.default_rng(0).normal(size=(4, 10))
    pts = msr_series(_frames_from(x), T=10)
    assert len(pts) == 1
    assert pts[0].index == 0 and pts[0].t == 9 and pts[0].t_first == 0
    assert 0 < pts[0].msr <= 1.5


def test_series_deterministic_and_worker_independent(quiet_frames):
    a = msr_series(quiet_frames[:400], T=10, stride=3, seed=7)
    b = msr_series(quiet_frames[:400], T=10, stride=3, seed=7, workers=4)
    assert a == b
    c = msr_series(quiet_frames[:400], T=10, stride=3, seed=8)
    assert [p.msr for p in a] != [p.msr for p in c]


def test_product_length_shortens_series(quiet_frames):
    pts = msr_series(quiet_frames[:200], T=10, stride=10, L=3)
    assert len(pts) == 20 - 2
    assert pts[0].index == 2
    assert pts[0].r_in == pytest.approx(0.2 ** 1.5)


def test_msr_series_errors(quiet_frames):
    with pytest.raises(ConfigError):
        msr_series(quiet_frames[:5], T=10)
    with pytest.raises(DimensionError):
        msr_series(quiet_frames[:50], T=5)
    with pytest.raises(ConfigError):
        msr_series(quiet_frames[:50], T=10, L=0)


def test_degenerate_window_is_marked():
    x = np.random.default_rng(0).normal(size=(5, 20))
    x[1] = 3.0
    x[2] = 4.0
    pts = msr_series(_frames_from(x), T=10, stride=10)
    assert all(p.degenerate for p in pts)


# -- flagging ---------------------------------------------------------------------------------------


def test_constant_series_no_events():
    assert flag_events(_series([0.86] * 100), k=5, B=60) == []


def test_single_drop_event():
    vals = 0.86 + 0.005 * np.random.default_rng(0).normal(size=100)
    vals[70] = 0.60
    ev = flag_events(_series(vals), k=5, B=60)
    assert len(ev) == 1
    e = ev[0]
    assert (e.start, e.end, e.direction) == (70, 70, "drop")
    assert (e.t_start, e.t_end) == (700, 709)
    assert e.peak_deviation > 5


def test_five_point_drop_is_one_event():
    vals = 0.86 + 0.005 * np.random.default_rng(4).normal(size=160)
    vals[100:105] = 0.60
    ev = flag_events(_series(vals), k=5, B=60)
    assert [(e.start, e.end, e.direction) for e in ev] == [(100, 104, "drop")]


def test_two_dips_two_events_and_runs_merge():
    vals = 0.86 + 0.005 * np.random.default_rng(1).normal(size=160)
    vals[[80, 81, 82]] = 0.6
    vals[130] = 1.1
    ev = flag_events(_series(vals), k=5, B=60)
    assert [(e.start, e.end, e.direction) for e in ev] == [(80, 82, "drop"), (130, 130, "rise")]


def test_flag_parameter_errors():
    with pytest.raises(ConfigError):
        flag_events(_series([0.8] * 100), B=9)
    with pytest.raises(ConfigError):
        flag_events(_series([0.8] * 30), B=60)
    with pytest.raises(ConfigError):
        flag_events(_series([0.8] * 100), k=0)


def test_degenerate_points_skipped():
    vals = [0.86] * 80
    vals[70] = 0.1
    deg = [False] * 80
    deg[70] = True
    assert flag_events(_series(vals, deg), B=60) == []


dyadic = st.integers(0, 512).map(lambda v: v / 8)


@settings(max_examples=80, deadline=None)
@given(
    st.lists(dyadic, min_size=10, max_size=80),
    st.integers(10, 20),
    st.sampled_from([0.5, 2.0, 4.0]),
    st.integers(-64, 64).map(lambda v: v / 4),
)
def test_flags_invariant_under_affine_maps(values, B, a, b):
    x = np.array(values)
    base = robust_flags(x, k=3.0, B=B)[0]
    moved = robust_flags(a * x + b, k=3.0, B=B)[0]
    assert np.array_equal(base, moved)


# -- PCA ---------------------------------------------------------------------------------------------


def test_pca_rank_one():
    u = np.array([1.0, 2.0, 2.0])
    v = np.array([1.0, -1.0, 0.5, 3.0])
    model = pca_fit(np.outer(u, v), m=1)
    comp = model.components[:, 0]
    assert abs(comp @ u) / np.linalg.norm(u) == pytest.approx(1.0)
    assert model.eigenvalues[0] == pytest.approx((u @ u) * (v @ v))
    assert model.eigenvalues[1:] == pytest.approx([0, 0], abs=1e-10)


def test_pca_diagonal():
    model = pca_fit(np.array([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), m="auto")
    assert model.eigenvalues == pytest.approx([9.0, 1.0])
    assert model.m == 2  # 9/10 < 95%
    assert pca_fit(np.array([[30.0, 0.0, 0.0], [0.0, 1.0, 0.0]])).m == 1


def test_pca_diagonal_square_axes():
    model = pca_fit(np.diag([1.0, 3.0, 2.0]), m=3)
    assert model.eigenvalues == pytest.approx([9.0, 4.0, 1.0])
    assert np.abs(model.components) == pytest.approx(np.eye(3)[:, [1, 2, 0]])


def test_pca_full_rank_reproduces_columns():
    y = np.random.default_rng(8).normal(size=(5, 3))
    model = pca_fit(y, m=3)
    assert max(pca_score(model, col)[1] for col in y.T) < 1e-8


def test_choose_m_examples():
    assert choose_m(np.array([5.0, 3.0, 2.0])) == 3
    assert choose_m(np.array([96.0, 3.0, 1.0])) == 1
    assert choose_m(np.array([90.0, 5.0, 5.0])) == 2
    assert choose_m(np.zeros(3)) == 1


def test_pca_residual_cases():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(4, 10))
    full = pca_fit(y, m=4)
    assert pca_score(full, rng.normal(size=4))[1] == pytest.approx(0.0, abs=1e-12)
    part = pca_fit(y, m=2)
    inside = part.components @ np.array([2.0, -1.0])
    assert pca_score(part, inside) == pytest.approx((np.sqrt(5.0), 0.0), abs=1e-12)
    q = np.linalg.qr(part.components, mode="complete")[0]
    out = q[:, 3] * 7.0
    assert pca_score(part, out) == pytest.approx((0.0, 7.0), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 15), st.integers(0, 2**31))
def test_pca_pythagoras(p, t, seed):
    rng = np.random.default_rng(seed)
    model = pca_fit(rng.normal(size=(p, t)), m=1)
    y = rng.normal(size=p)
    proj, res = pca_score(model, y)
    assert proj**2 + res**2 == pytest.approx(float(y @ y), rel=1e-9, abs=1e-12)


def test_pca_errors():
    y = np.ones((3, 5))
    with pytest.raises(ConfigError):
        pca_fit(y, m=0)
    with pytest.raises(ConfigError):
        pca_fit(y, m=4)
    with pytest.raises(ConfigError):
        pca_fit(y, m="many")
    with pytest.raises(DimensionError):
        pca_score(pca_fit(y, 1), [1.0, 2.0])


def test_pca_stationary_low_rank_stream():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 2)) @ rng.normal(size=(2, 300))
    pts = pca_series(_frames_from(x), T=10, m=2)
    assert len(pts) == 290
    assert max(p.residual for p in pts) < 1e-9


def test_pca_scalar_multiple_channels():
    rng = np.random.default_rng(6)
    sigma, p = 0.01, 6
    x = np.outer(rng.uniform(1, 3, p), 10 + np.sin(np.arange(500) / 7)) + sigma * rng.normal(size=(p, 500))
    pts = pca_series(_frames_from(x), T=10, m=1)
    assert len(pts) == 490
    assert max(pt.residual for pt in pts) < 10 * sigma * np.sqrt(p)


def test_pca_peak_follows_step():
    rng = np.random.default_rng(2)
    x = 100.0 + 0.1 * rng.normal(size=(5, 400))
    x[0, 250:] -= 50.0
    x[1, 250:] += 50.0
    pts = pca_series(_frames_from(x), T=10, m="auto")
    assert len(pts) == 390
    assert 250 <= pca_peak(pts).t <= 260


def test_pca_series_stride_and_missing():
    x = np.random.default_rng(1).normal(size=(3, 50))
    x[2, 20] = np.nan
    pts = pca_series(_frames_from(x), T=10, stride=5, m=1)
    assert [p.t for p in pts] == list(range(10, 50, 5))
    assert all(np.isfinite(p.residual) for p in pts)
