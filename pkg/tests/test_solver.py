import math

import numpy as np
import pytest

from layerlab.envelope import GenerationClock
from layerlab.geometry import CartesianGrid2D, Field, InitialProfile, RadialGrid, build_u0
from layerlab.ode_kernel import KernelConfig, flow_targets
from layerlab.reaction import cubic, perturb
from layerlab.solver import (CFLError, SolverConfig, cfl_dt, run,
                             step_diffusion, step_reaction, strang_step,
                             _advance_radial_cubic)

R = cubic(0.3)
PROF = InitialProfile()
MU = R.mu()


def _grid(n=256):
    return RadialGrid(2, 1.0, n)


def test_cfl_dt_frozen_value():
    g = RadialGrid(2, 1.0, 1024)
    f = Field(g, np.ones(1024))
    cfg = SolverConfig(m=2, eps=0.01, cfl_safety=0.4)
    assert cfl_dt(cfg, f) == pytest.approx(0.4 * (1.0 / 1024) ** 2 / 4.0,
                                           rel=1e-15)


def test_cfl_dt_zero_field_is_huge():
    g = _grid()
    cfg = SolverConfig(m=2, eps=0.01)
    assert cfl_dt(cfg, Field(g, np.zeros(g.ncells))) > 1e20


def test_cfl_dt_quarters_when_h_halves():
    cfg = SolverConfig(m=2, eps=0.01)
    d1 = cfl_dt(cfg, Field(RadialGrid(2, 1.0, 512), np.ones(512)))
    d2 = cfl_dt(cfg, Field(RadialGrid(2, 1.0, 1024), np.ones(1024)))
    assert d1 / d2 == pytest.approx(4.0, rel=1e-12)


def test_diffusion_constant_field_unchanged():
    g = _grid()
    cfg = SolverConfig(m=2, eps=0.01)
    f = Field(g, np.full(g.ncells, 0.37))
    out = step_diffusion(cfg, g, f, cfl_dt(cfg, f))
    assert np.array_equal(out.values, f.values)


def test_diffusion_mass_conserved_per_step():
    g = _grid(512)
    cfg = SolverConfig(m=2, eps=0.01)
    f = build_u0(g, PROF, a=0.3)
    out = step_diffusion(cfg, g, f, cfl_dt(cfg, f))
    assert abs(out.mass() - f.mass()) <= 1e-12 * f.mass()


def test_diffusion_refuses_unstable_step():
    g = _grid()
    cfg = SolverConfig(m=2, eps=0.01)
    f = build_u0(g, PROF, a=0.3)
    with pytest.raises(CFLError):
        step_diffusion(cfg, g, f, 10.0 * cfl_dt(cfg, f))


def test_diffusion_self_convergence_order_at_least_one():
    # Diffusion-only bump against a fine-grid reference.
    from layerlab.verify import compare_on_fine
    T = 2e-3
    fields = {}
    for n in (128, 256, 512, 1024):
        g = RadialGrid(2, 1.0, n)
        cfg = SolverConfig(m=2, eps=0.05, t_end=T, snapshot_times=(T,),
                           reaction_on=False)
        fields[n] = run(cfg, R, g, build_u0(g, PROF, a=0.3)).snapshots[-1].field
    errs = [compare_on_fine(fields[n], fields[1024])[0] for n in (128, 256, 512)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.0
    assert errs[0] > errs[1] > errs[2]


def test_reaction_equilibria_unchanged():
    g = _grid(64)
    cfg = SolverConfig(m=2, eps=0.02)
    for z in (0.0, 0.3, 1.0):
        f = Field(g, np.full(g.ncells, z))
        out = step_reaction(cfg, R, f, 0.02 ** 2)
        assert np.array_equal(out.values, f.values)


def test_reaction_near_unstable_zero_growth():
    g = _grid(64)
    eps = 0.01
    cfg = SolverConfig(m=2, eps=eps)
    f = Field(g, np.full(g.ncells, 0.3 + 1e-4))
    out = step_reaction(cfg, R, f, eps ** 2)  # tau = 1
    expected = 0.3 + 1e-4 * math.exp(MU)
    assert np.max(np.abs(out.values - expected)) < 1e-8


def test_reaction_full_field_matches_kernel():
    g = _grid(512)
    eps = 0.01
    cfg = SolverConfig(m=2, eps=eps)
    f = build_u0(g, PROF, a=0.3)
    out = step_reaction(cfg, R, f, eps ** 2)
    Y, _, _ = flow_targets(R, KernelConfig(), np.ones(g.ncells), f.values)
    assert np.max(np.abs(out.values - Y)) <= 1e-8


def test_reaction_substep_order_about_four():
    # Refining the substeps cuts the error at the classical 4th order;
    # the realized substep size is quantized by the ceil() in the rule.
    g = _grid(128)
    eps = 0.02
    f = build_u0(g, PROF, a=0.3)
    tau_span = 4.0
    Y, _, _ = flow_targets(R, KernelConfig(), np.full(g.ncells, tau_span),
                           f.values)
    pts = []
    for nsub in (4, 8, 16):
        dtau = tau_span / nsub
        cfg = SolverConfig(m=2, eps=eps,
                           substep_safety=dtau * 0.7 * (1 + 1e-9))
        out = step_reaction(cfg, R, f, tau_span * eps ** 2)
        pts.append((dtau, np.max(np.abs(out.values - Y))))
    orders = [math.log(e1 / e2) / math.log(d1 / d2)
              for (d1, e1), (d2, e2) in zip(pts, pts[1:])]
    assert min(orders) > 3.5


def test_strang_with_reaction_off_equals_diffusion():
    g = _grid()
    cfg = SolverConfig(m=2, eps=0.02, reaction_on=False)
    f = build_u0(g, PROF, a=0.3)
    dt = cfl_dt(cfg, f)
    a = strang_step(cfg, R, g, f, dt)
    b = step_diffusion(cfg, g, f, dt)
    assert np.array_equal(a.values, b.values)


def test_strang_zero_field_stays_zero():
    g = _grid()
    cfg = SolverConfig(m=2, eps=0.02)
    f = Field(g, np.zeros(g.ncells))
    out = strang_step(cfg, R, g, f, 1e-6)
    assert np.array_equal(out.values, f.values)


def test_strang_dt_self_convergence_order_two():
    # Smooth early window, fixed grid: dt-refinement converges at order ~2.
    g = _grid(256)
    eps = 0.05
    T = 0.2 * GenerationClock(mu=MU, eps=eps).t_eps
    base_dt = cfl_dt(SolverConfig(m=2, eps=eps), Field(g, np.ones(g.ncells))) / 4
    sols = {}
    for k in (1, 2, 4, 16):
        n = int(round(T / (base_dt / k)))
        u = build_u0(g, PROF, a=0.3)
        cfg = SolverConfig(m=2, eps=eps)
        for _ in range(n):
            u = strang_step(cfg, R, g, u, T / n)
        sols[k] = u.values
    e1 = np.abs(sols[1] - sols[16]).max()
    e2 = np.abs(sols[2] - sols[16]).max()
    e4 = np.abs(sols[4] - sols[16]).max()
    assert math.log2(e1 / e2) > 1.9
    assert math.log2(e2 / e4) > 1.9


def test_run_zero_horizon_returns_initial_snapshot():
    g = _grid(64)
    cfg = SolverConfig(m=2, eps=0.02, t_end=0.0)
    f = build_u0(g, PROF, a=0.3)
    res = run(cfg, R, g, f)
    assert len(res.snapshots) == 1
    assert np.array_equal(res.snapshots[0].field.values, f.values)


def test_run_bounds_and_boundary_inactivity():
    g = _grid(512)
    eps = 0.05
    tg = GenerationClock(mu=MU, eps=eps).t_eps
    cfg = SolverConfig(m=2, eps=eps, t_end=2 * tg, snapshot_times=(tg, 2 * tg))
    res = run(cfg, R, g, build_u0(g, PROF, a=0.3))
    assert res.min_value >= 0.0
    assert res.max_value <= 1.0 + 1e-12
    assert res.boundary_inactive


def test_run_mass_conserved_without_reaction():
    g = RadialGrid(2, 1.0, 2048)
    cfg = SolverConfig(m=2, eps=0.02, t_end=2e-4, snapshot_times=(2e-4,),
                       reaction_on=False)
    f = build_u0(g, PROF, a=0.3)
    res = run(cfg, R, g, f)
    assert abs(res.snapshots[-1].field.mass() - f.mass()) <= 1e-12 * f.mass()


def test_run_comparison_principle_for_nested_data():
    g = _grid(512)
    eps = 0.05
    tg = GenerationClock(mu=MU, eps=eps).t_eps
    times = tuple(np.linspace(0, tg, 5)[1:])
    cfg = SolverConfig(m=2, eps=eps, t_end=tg, snapshot_times=times)
    lo = run(cfg, R, g, build_u0(g, InitialProfile(c0=0.7, R0=0.5), a=0.3))
    hi = run(cfg, R, g, build_u0(g, InitialProfile(c0=0.8, R0=0.5), a=0.3))
    for slo, shi in zip(lo.snapshots, hi.snapshots):
        assert slo.t == shi.t
        assert np.all(shi.field.values - slo.field.values >= -1e-12)


def test_run_with_perturbed_reaction():
    g = _grid(128)
    eps = 0.05
    pr = perturb(R, 0.005)
    cfg = SolverConfig(m=2, eps=eps, t_end=1e-4, snapshot_times=(1e-4,))
    res = run(cfg, pr, g, build_u0(g, PROF, a=R.a))
    assert res.min_value >= 0.0


def test_advance_reports_bound_violation_status():
    # Direct white-box check of the abort path with an unstable step.
    g = _grid(64)
    u = build_u0(g, PROF, a=0.3).values.copy()
    bad_dt = 100.0 * cfl_dt(SolverConfig(m=2, eps=0.05), Field(g, np.ones(64)))
    done, lo, hi, status = _advance_radial_cubic(
        u, 500, bad_dt, g.face_areas / g.h, 1.0 / g.volumes, 2,
        1.0 / 0.05 ** 2, 0.3, 0.0, 1, True, True, 1.0 + 1e-12)
    assert status == 1
    assert done <= 500


def test_run_2d_mass_and_symmetry():
    g = CartesianGrid2D(2.0, 2.0, 64, 64)
    cfg = SolverConfig(m=2, eps=0.05, t_end=5e-4, snapshot_times=(5e-4,),
                       reaction_on=False)
    f = build_u0(g, PROF, a=0.3)
    res = run(cfg, R, g, f)
    out = res.snapshots[-1].field
    assert abs(out.mass() - f.mass()) <= 1e-12 * f.mass()
    assert np.allclose(out.values, out.values.T, atol=1e-13)  # radial symmetry
    assert res.boundary_inactive


def test_finite_propagation_of_compact_support():
    # Degenerate diffusion spreads the bump at finite speed: over the run
    # the numerical support stays well inside the domain.
    g = _grid(512)
    cfg = SolverConfig(m=2, eps=0.02, t_end=5e-3, snapshot_times=(5e-3,),
                       reaction_on=False)
    res = run(cfg, R, g, build_u0(g, PROF, a=0.3))
    occupied = np.nonzero(res.snapshots[-1].field.values > 1e-12)[0]
    edge = g.centers[occupied.max()]
    assert 0.5 <= edge + g.h and edge < 0.75
    assert res.boundary_inactive
