import numpy as np
import pytest

from layerlab.envelope import EnvelopeParams, GenerationClock, calibrate_Cstar
from layerlab.geometry import Field, InitialProfile, RadialGrid, build_u0, gamma0_locate
from layerlab.reaction import cubic
from layerlab.solver import Snapshot, SolverConfig, default_snapshot_times, run
from layerlab.verify import (BoxTestFunction, LayerNotFoundError,
                             RadialTestFunction, VerifyParams, classify_bands,
                             compare_on_fine, convergence_study, measure_width,
                             optimality_scan, sandwich_check, weak_residual)

R = cubic(0.3)
PROF = InitialProfile()
MU = R.mu()
EPS = 0.05


@pytest.fixture(scope="module")
def coarse_run():
    grid = RadialGrid(2, 1.0, 512)
    clock = GenerationClock(mu=MU, eps=EPS)
    tg = clock.t_eps
    times = default_snapshot_times(tg, clock.t_eps_b, tg)
    cfg = SolverConfig(m=2, eps=EPS, t_end=tg, snapshot_times=times)
    u0 = build_u0(grid, PROF, a=R.a)
    return grid, u0, tg, run(cfg, R, grid, u0)


@pytest.fixture(scope="module")
def calibrated():
    p, rec = calibrate_Cstar(PROF, R, eps=EPS, n_radii=101)
    return p, rec


def test_sandwich_zero_margin_at_time_zero():
    grid = RadialGrid(2, 1.0, 128)
    u0 = build_u0(grid, PROF, a=R.a)
    p = EnvelopeParams(eps=EPS, Cstar=8.0, mu=MU, m=2)
    rep = sandwich_check([Snapshot(0.0, u0)], p, PROF, R, 1.0, 0.0)
    assert rep.violations == 0
    assert rep.worst_margin == 0.0


def test_sandwich_holds_on_coarse_run(coarse_run, calibrated):
    grid, u0, tg, res = coarse_run
    p, _ = calibrated
    rep = sandwich_check(res.snapshots, p, PROF, R, tg, tol=0.02)
    assert rep.violations == 0
    assert rep.n_points > 0


def test_sandwich_fails_without_drift(coarse_run):
    # C* = 0 turns both envelopes into the bare reaction flow, which the
    # diffusing solution crosses.
    grid, u0, tg, res = coarse_run
    p0 = EnvelopeParams(eps=EPS, Cstar=0.0, mu=MU, m=2)
    rep = sandwich_check(res.snapshots, p0, PROF, R, tg, tol=0.02)
    assert rep.violations > 0
    assert rep.worst_margin < -0.02


def test_classify_bands_on_coarse_run(coarse_run):
    grid, u0, tg, res = coarse_run
    snap_g = min(res.snapshots, key=lambda s: abs(s.t - tg))
    vp = VerifyParams()
    fit = classify_bands(snap_g, u0, R, vp, EPS)
    assert fit.range_ok
    assert fit.M0 is not None and fit.M0 > 0
    # at this coarse eps the lower exclusion a - M0 eps can drop below 0,
    # leaving no lower-band cells; the upper band must be populated
    assert fit.n_upper_cells > 0
    # cells outside the initial support must already have collapsed
    outside = u0.values == 0.0
    assert np.all(snap_g.field.values[outside] <= vp.gamma)


def test_fitted_M0_nonincreasing_in_gamma(coarse_run):
    grid, u0, tg, res = coarse_run
    snap_g = min(res.snapshots, key=lambda s: abs(s.t - tg))
    fits = [classify_bands(snap_g, u0, R, VerifyParams(gamma=g), EPS).M0
            for g in (0.05, 0.1, 0.2)]
    assert all(m is not None for m in fits)
    assert fits[0] >= fits[1] >= fits[2]


def test_width_linear_ramp_hand_value():
    # Ramp from 1 to 0 over [r0 - s, r0 + s]: width = 2 s (1 - 2 eta).
    grid = RadialGrid(2, 1.0, 2048)
    r0, s = 0.3, 0.05
    vals = np.clip((r0 + s - grid.centers) / (2 * s), 0.0, 1.0)
    snap = Snapshot(0.0, Field(grid, vals))
    w = measure_width(snap, VerifyParams(eta=0.1))
    assert w.width == pytest.approx(2 * s * 0.8, abs=1e-6)


def test_width_step_profile_within_grid_slop():
    grid = RadialGrid(2, 1.0, 512)
    vals = np.where(grid.centers < 0.3, 1.0, 0.0)
    w = measure_width(Snapshot(0.0, Field(grid, vals)), VerifyParams(eta=0.1))
    assert abs(w.width) <= 2 * grid.h


def test_width_layer_not_found():
    grid = RadialGrid(2, 1.0, 128)
    with pytest.raises(LayerNotFoundError):
        measure_width(Snapshot(0.0, Field(grid, np.zeros(128))),
                      VerifyParams(eta=0.1))


def test_width_stable_under_refinement(coarse_run):
    grid, u0, tg, res = coarse_run
    snap_g = min(res.snapshots, key=lambda s: abs(s.t - tg))
    fine = RadialGrid(2, 1.0, 1024)
    cfg = SolverConfig(m=2, eps=EPS, t_end=tg, snapshot_times=(tg,))
    res_f = run(cfg, R, fine, build_u0(fine, PROF, a=R.a))
    vp = VerifyParams()
    w_c = measure_width(snap_g, vp).width
    w_f = measure_width(res_f.snapshots[-1], vp).width
    assert abs(w_c - w_f) <= 2 * grid.h


def test_optimality_scan_on_coarse_run(coarse_run):
    grid, u0, tg, res = coarse_run
    r0 = gamma0_locate(PROF, R.a)
    vp = VerifyParams(probe_b=1.0)
    out = optimality_scan(res.snapshots, r0, R, vp, EPS, tg, u0_field=u0,
                          M0=None)
    assert out.Cthick is not None
    assert 0.0 <= out.b_fit
    assert out.t_min <= tg * (1 + 1e-12)
    assert out.probe_value is not None


def test_weak_residual_zero_solution_is_exact():
    grid = RadialGrid(2, 1.0, 128)
    snaps = [Snapshot(0.0, Field(grid, np.zeros(128))),
             Snapshot(1.0, Field(grid, np.zeros(128)))]
    tfs = [RadialTestFunction(0, 1.0), RadialTestFunction(2, 1.0)]
    res = weak_residual(snaps, R, 0.05, 2, tfs)
    assert all(v == 0.0 for v in res.values())


def test_weak_residual_small_on_run(coarse_run):
    grid, u0, tg, res = coarse_run
    tfs = [RadialTestFunction(0, 1.0), RadialTestFunction(2, 1.0),
           RadialTestFunction(3, 1.0), RadialTestFunction(2, 1.0, decay=10.0)]
    out = weak_residual(res.snapshots, R, EPS, 2, tfs)
    mass_scale = u0.mass()
    for name, val in out.items():
        assert val < 0.05 * mass_scale, name


def test_radial_test_function_k1_rejected():
    with pytest.raises(ValueError):
        RadialTestFunction(1, 1.0)


def test_radial_test_function_laplacian_vs_fd():
    tf = RadialTestFunction(3, 1.0)
    rr = np.linspace(0.05, 0.9, 50)
    h = 1e-5
    phi = lambda r: tf.phi(r, 0.0)
    lap_fd = ((phi(rr + h) - 2 * phi(rr) + phi(rr - h)) / h ** 2
              + (phi(rr + h) - phi(rr - h)) / (2 * h) / rr)
    assert np.allclose(tf.lap_phi(rr, 0.0, 2), lap_fd, rtol=1e-5, atol=1e-6)


def test_box_test_function_laplacian_vs_fd():
    tf = BoxTestFunction(2, 1, 2.0, 2.0)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.1, 1.9, 30)
    y = rng.uniform(0.1, 1.9, 30)
    h = 1e-5
    lap_fd = ((tf.phi(x + h, y, 0) - 2 * tf.phi(x, y, 0) + tf.phi(x - h, y, 0))
              + (tf.phi(x, y + h, 0) - 2 * tf.phi(x, y, 0) + tf.phi(x, y - h, 0))) / h ** 2
    assert np.allclose(tf.lap_phi(x, y, 0), lap_fd, rtol=1e-4, atol=1e-5)
    assert np.all(tf.phi(x, y, 0) >= 0.0)


def test_convergence_study_bookkeeping():
    ref_grid = RadialGrid(2, 1.0, 256)
    ref = Field(ref_grid, np.ones(256))
    fields = {}
    for n, off in ((64, 0.04), (128, 0.01)):
        g = RadialGrid(2, 1.0, n)
        fields[n] = Field(g, np.full(n, 1.0 + off))
    rep = convergence_study(fields, ref)
    vol = ref_grid.domain_volume
    assert rep.err_l1[0] == pytest.approx(0.04 * vol, rel=1e-12)
    assert rep.err_l1[1] == pytest.approx(0.01 * vol, rel=1e-12)
    assert rep.orders_l1[0] == pytest.approx(2.0, abs=1e-12)
    assert rep.monotone


def test_compare_on_fine_requires_nested():
    a = Field(RadialGrid(2, 1.0, 96), np.zeros(96))
    b = Field(RadialGrid(2, 1.0, 256), np.zeros(256))
    with pytest.raises(ValueError):
        compare_on_fine(a, b)
