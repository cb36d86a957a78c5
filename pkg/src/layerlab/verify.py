"""Quantitative verdicts: sandwich, bands, layer width, optimality, weak form.

Everything here is pure post-processing over immutable snapshots; the only
numerics shared with the solver is the ODE kernel used to evaluate the
envelopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from layerlab.envelope import EnvelopeParams, drift, kernel_cfg_for
from layerlab.geometry import Field, InitialProfile
from layerlab.ode_kernel import KernelConfig, flow_targets
from layerlab.reaction import BistableReaction
from layerlab.solver import Snapshot


class LayerNotFoundError(RuntimeError):
    """The profile never crosses the requested levels."""


@dataclass(frozen=True)
class VerifyParams:
    gamma: float = 0.1
    eta: float = 0.1
    sandwich_tol: float = 5e-3
    M0_ladder_max: float = 4096.0
    Cthick_ladder_max: float = 512.0
    probe_b: float = 3.0

    def validate_against(self, a: float):
        cap = min(a, 1.0 - a)
        if not 0.0 < self.gamma < cap:
            raise ValueError(f"gamma must lie in (0, {cap})")
        if not 0.0 < self.eta < cap:
            raise ValueError(f"eta must lie in (0, {cap})")
        if self.sandwich_tol < 0.0:
            raise ValueError("sandwich_tol must be >= 0")


def _geometric_ladder(lo: float, hi: float, ratio: float) -> np.ndarray:
    n = int(math.floor(math.log(hi / lo) / math.log(ratio))) + 1
    return lo * ratio ** np.arange(n)


# ---------------------------------------------------------------------------
# Sandwich w^- <= u <= w^+ over [0, t_gen].
# ---------------------------------------------------------------------------

@dataclass
class SandwichReport:
    n_points: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    tol: float = 0.0


def sandwich_check(
    snapshots: list[Snapshot],
    p: EnvelopeParams,
    profile: InitialProfile,
    reaction: BistableReaction,
    t_gen: float,
    tol: float,
    cfg: KernelConfig | None = None,
) -> SandwichReport:
    """Count cells violating w^- - tol <= u <= w^+ + tol on [0, t_gen].

    The envelopes are evaluated per snapshot on the deduplicated set of
    drifted arguments (cells outside the initial support share one value),
    all within a single batched kernel integration.
    """
    cfg = kernel_cfg_for(p, profile, cfg)
    report = SandwichReport(tol=tol)
    window = [s for s in snapshots if s.t <= t_gen * (1.0 + 1e-12)]
    if not window:
        return report

    uniq_list, inverse_list, tau_list = [], [], []
    for snap in window:
        grid = snap.field.grid
        u0c = profile.u0(grid.centers)
        P = float(drift(p, snap.t))
        xi = np.concatenate([u0c - P, u0c + P])
        uniq, inv = np.unique(xi, return_inverse=True)
        uniq_list.append(uniq)
        inverse_list.append(inv)
        tau_list.append(np.full(len(uniq), snap.t / p.eps ** 2))

    Y, _, _ = flow_targets(reaction, cfg, np.concatenate(tau_list),
                           np.concatenate(uniq_list))
    offset = 0
    for snap, uniq, inv in zip(window, uniq_list, inverse_list):
        w = np.maximum(Y[offset:offset + len(uniq)], 0.0)[inv]
        offset += len(uniq)
        n = len(snap.field.values)
        w_minus, w_plus = w[:n], w[n:]
        u = snap.field.values
        margin = np.minimum(u - w_minus, w_plus - u)
        report.n_points += n
        report.violations += int(np.count_nonzero(margin < -tol))
        report.worst_margin = min(report.worst_margin, float(margin.min()))
    return report


# ---------------------------------------------------------------------------
# Band classification at the generation time.
# ---------------------------------------------------------------------------

@dataclass
class BandFit:
    M0: float | None
    range_ok: bool
    n_upper_cells: int = 0
    n_lower_cells: int = 0
    violations: list[str] = dc_field(default_factory=list)


def classify_bands(
    snap_at_tgen: Snapshot,
    u0_field: Field,
    reaction: BistableReaction,
    vp: VerifyParams,
    eps: float,
) -> BandFit:
    """Fit the smallest M0 with u >= 1-gamma where u0 >= a + M0 eps and
    u <= gamma where u0 <= a - M0 eps; checks 0 <= u <= 1+gamma first."""
    vp.validate_against(reaction.a)
    u = snap_at_tgen.field.values
    u0 = u0_field.values
    a, gamma = reaction.a, vp.gamma

    fit = BandFit(M0=None, range_ok=True)
    if float(u.min()) < -1e-13 or float(u.max()) > 1.0 + gamma:
        fit.range_ok = False
        fit.violations.append(
            f"range: u in [{float(u.min()):.6g}, {float(u.max()):.6g}] "
            f"outside [0, {1.0 + gamma:.3g}]")

    for M0 in _geometric_ladder(0.25, vp.M0_ladder_max, 2.0 ** 0.125):
        hi = u0 >= a + M0 * eps
        lo = u0 <= a - M0 * eps
        if np.all(u[hi] >= 1.0 - gamma) and np.all(u[lo] <= gamma):
            fit.M0 = float(M0)
            fit.n_upper_cells = int(hi.sum())
            fit.n_lower_cells = int(lo.sum())
            return fit
    fit.violations.append(f"band failure: no M0 <= {vp.M0_ladder_max} works")
    return fit


# ---------------------------------------------------------------------------
# Layer thickness at the generation time (corollary statement).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WidthResult:
    width: float
    r_inner: float
    r_outer: float


def _outermost_crossing(rr: np.ndarray, u: np.ndarray, level: float) -> float:
    """Radius of the outermost down-crossing of ``level``, interpolated."""
    above = u >= level
    idx = np.nonzero(above[:-1] & ~above[1:])[0]
    if len(idx) == 0:
        raise LayerNotFoundError(f"profile never crosses level {level!r}")
    k = int(idx[-1])
    t = (u[k] - level) / (u[k] - u[k + 1])
    return float(rr[k] + t * (rr[k + 1] - rr[k]))


def measure_width(snap_at_tgen: Snapshot, vp: VerifyParams,
                  values: np.ndarray | None = None,
                  radii: np.ndarray | None = None) -> WidthResult:
    """Radial extent of the transition band {eta <= u <= 1 - eta}.

    Measured as the outermost crossing of eta minus the outermost crossing
    of 1 - eta, by monotone (linear) interpolation of the cell profile.
    """
    if values is None:
        values = snap_at_tgen.field.values
        radii = snap_at_tgen.field.grid.centers
    eta = vp.eta
    r_outer = _outermost_crossing(radii, values, eta)
    r_inner = _outermost_crossing(radii, values, 1.0 - eta)
    return WidthResult(width=r_outer - r_inner, r_inner=r_inner, r_outer=r_outer)


# ---------------------------------------------------------------------------
# Optimality of the generation time.
# ---------------------------------------------------------------------------

@dataclass
class OptimalityResult:
    Cthick: float | None
    t_min: float | None
    b_fit: float | None
    probe_time: float | None = None
    probe_value: float | None = None
    probe_ok: bool | None = None
    notes: list[str] = dc_field(default_factory=list)


def _three_band_holds(u: np.ndarray, dist: np.ndarray, ceps: float,
                      eta: float) -> bool:
    if float(u.min()) < -1e-13:
        return False
    near = np.abs(dist) < ceps
    inside = dist <= -ceps
    outside = dist >= ceps
    if np.any(u[near] > 1.0 + eta):
        return False
    if inside.any() and (np.any(u[inside] < 1.0 - eta) or np.any(u[inside] > 1.0 + eta)):
        return False
    if outside.any() and np.any(u[outside] > eta):
        return False
    return True


def optimality_scan(
    snapshots: list[Snapshot],
    r0: float,
    reaction: BistableReaction,
    vp: VerifyParams,
    eps: float,
    t_gen: float,
    u0_field: Field | None = None,
    M0: float | None = None,
) -> OptimalityResult:
    """Earliest time the three-band classification holds, and the shave b.

    The band constant is fitted at the snapshot nearest t_gen (smallest
    ladder value making the classification hold there); t_min is then the
    earliest snapshot from which the classification holds all the way to
    t_gen, and b = |ln eps| - mu t_min / eps^2 is reported.  A probe point
    at distance Cthick*eps inside the interface is read off at t_gen(b=3)
    as a witness that the layer is not formed yet at that earlier time.
    """
    vp.validate_against(reaction.a)
    mu = reaction.mu()
    out = OptimalityResult(Cthick=None, t_min=None, b_fit=None)
    window = [s for s in snapshots if s.t <= t_gen * (1.0 + 1e-12)]
    if not window:
        out.notes.append("no snapshots at or before t_gen")
        return out
    snap_g = min(window, key=lambda s: abs(s.t - t_gen))
    grid = snap_g.field.grid
    dist = grid.centers - r0

    for c in _geometric_ladder(0.25, vp.Cthick_ladder_max, 2.0 ** 0.125):
        if c * eps >= 0.95 * r0:
            break
        if _three_band_holds(snap_g.field.values, dist, c * eps, vp.eta):
            out.Cthick = float(c)
            break
    if out.Cthick is None:
        out.notes.append("three-band classification fails at t_gen")
        return out

    ceps = out.Cthick * eps

    def holds(u: np.ndarray) -> bool:
        if not _three_band_holds(u, dist, ceps, vp.eta):
            return False
        if u0_field is not None and M0 is not None:
            hi = u0_field.values >= reaction.a + M0 * eps
            lo = u0_field.values <= reaction.a - M0 * eps
            if np.any(u[hi] < 1.0 - vp.gamma) or np.any(u[lo] > vp.gamma):
                return False
        return True

    t_min = snap_g.t
    for snap in reversed(window):
        if snap.t > snap_g.t:
            continue
        if holds(snap.field.values):
            t_min = snap.t
        else:
            break
    out.t_min = t_min
    out.b_fit = abs(math.log(eps)) - mu * t_min / eps ** 2

    t_probe = (abs(math.log(eps)) - vp.probe_b) * eps ** 2 / mu
    if t_probe > 0.0:
        snap_b = min(snapshots, key=lambda s: abs(s.t - t_probe))
        r_probe = r0 - ceps
        val = float(np.interp(r_probe, grid.centers, snap_b.field.values))
        out.probe_time = snap_b.t
        out.probe_value = val
        out.probe_ok = val < 1.0 - vp.eta
    else:
        out.notes.append("t_gen(b) nonpositive; probe skipped")
    return out


# ---------------------------------------------------------------------------
# Weak-form residual (integral identity of the weak solution).
# ---------------------------------------------------------------------------

class RadialTestFunction:
    """phi(r, t) = shape(r) * amp(t) with zero normal derivative at r = R.

    shape(r) = (1 - (r/R)^2)^k with k = 0 or k >= 2; k = 1 is rejected
    because its radial derivative does not vanish on the boundary.
    """

    def __init__(self, k: int, R: float, decay: float = 0.0):
        if k == 1:
            raise ValueError("k = 1 has nonzero normal derivative at r = R")
        self.k, self.R, self.decay = int(k), float(R), float(decay)
        self.name = f"poly{k}" + (f"_decay{decay:g}" if decay else "")

    def _shape(self, r):
        return (1.0 - (r / self.R) ** 2) ** self.k

    def _amp(self, t: float) -> float:
        return math.exp(-self.decay * t)

    def phi(self, r, t):
        return self._shape(r) * self._amp(t)

    def phi_t(self, r, t):
        return -self.decay * self._shape(r) * self._amp(t)

    def lap_phi(self, r, t, ndim: int):
        if self.k == 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        k, R2 = self.k, self.R ** 2
        rho = np.asarray(r, dtype=float) ** 2
        base = 1.0 - rho / R2
        gp = -k / R2 * base ** (k - 1)
        gpp = k * (k - 1) / R2 ** 2 * base ** (k - 2)
        return (4.0 * rho * gpp + 2.0 * ndim * gp) * self._amp(t)


class BoxTestFunction:
    """phi(x, y) = (1 + cos(j pi x / Lx)) (1 + cos(k pi y / Ly)), nonnegative
    with zero normal derivative on all four sides of the box."""

    def __init__(self, j: int, k: int, Lx: float, Ly: float):
        self.j, self.k, self.Lx, self.Ly = j, k, float(Lx), float(Ly)
        self.name = f"cos{j}{k}"

    def phi(self, x, y, t):
        return (1.0 + np.cos(self.j * np.pi * x / self.Lx)) * (
            1.0 + np.cos(self.k * np.pi * y / self.Ly))

    def phi_t(self, x, y, t):
        return np.zeros(np.broadcast(x, y).shape)

    def lap_phi(self, x, y, t, ndim: int = 2):
        cj = np.cos(self.j * np.pi * x / self.Lx)
        ck = np.cos(self.k * np.pi * y / self.Ly)
        wj = (self.j * np.pi / self.Lx) ** 2
        wk = (self.k * np.pi / self.Ly) ** 2
        return -wj * cj * (1.0 + ck) - wk * ck * (1.0 + cj)


def weak_residual(
    snapshots: list[Snapshot],
    reaction: BistableReaction | None,
    eps: float,
    m: int,
    test_functions: list,
    reaction_on: bool = True,
) -> dict[str, float]:
    """Residual of the integral identity, per test function.

    Space integrals are midpoint sums over cells, the time integral a
    trapezoid over the snapshot times.  phi must have zero normal
    derivative on the boundary (guaranteed by the provided families).
    """
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    grid = snapshots[0].field.grid
    if grid.mode != "radial":
        raise NotImplementedError("weak residual is assembled in radial mode; "
                                  "use BoxTestFunction pieces directly in 2-d")
    rr = grid.centers
    vol = grid.volumes
    times = np.array([s.t for s in snapshots])
    out: dict[str, float] = {}
    for tf in test_functions:
        interior = np.empty(len(snapshots))
        source = np.empty(len(snapshots))
        for i, s in enumerate(snapshots):
            u = s.field.values
            interior[i] = float(
                (u * tf.phi_t(rr, s.t) + u ** m * tf.lap_phi(rr, s.t, grid.ndim))
                @ vol)
            if reaction_on and reaction is not None:
                source[i] = float((np.asarray(reaction.f(u)) * tf.phi(rr, s.t))
                                  @ vol) / eps ** 2
            else:
                source[i] = 0.0
        u_end = snapshots[-1].field.values
        u_start = snapshots[0].field.values
        lhs = float((u_end * tf.phi(rr, times[-1])) @ vol) - float(
            np.trapezoid(interior, times))
        rhs = float((u_start * tf.phi(rr, times[0])) @ vol) + float(
            np.trapezoid(source, times))
        out[tf.name] = abs(lhs - rhs)
    return out


# ---------------------------------------------------------------------------
# Self-convergence of the full solver.
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    ncells: list[int]
    err_l1: list[float]
    err_linf: list[float]
    orders_l1: list[float]
    monotone: bool


def compare_on_fine(coarse: Field, fine: Field) -> tuple[float, float]:
    """(L1, Linf) distance, mapping coarse cells onto the nested fine grid."""
    ratio = fine.grid.ncells // coarse.grid.ncells
    if ratio * coarse.grid.ncells != fine.grid.ncells:
        raise ValueError("grids must be nested (cell counts divide)")
    coarse_on_fine = np.repeat(coarse.values, ratio)
    diff = np.abs(coarse_on_fine - fine.values)
    return float(diff @ fine.grid.volumes), float(diff.max())


def convergence_study(fields_by_ncells: dict[int, Field],
                      ref: Field) -> ConvergenceReport:
    """Self-convergence orders against the finest (reference) solution."""
    ncells = sorted(fields_by_ncells)
    e1, einf = [], []
    for n in ncells:
        l1, linf = compare_on_fine(fields_by_ncells[n], ref)
        e1.append(l1)
        einf.append(linf)
    orders = [math.log2(e1[i] / e1[i + 1]) for i in range(len(e1) - 1)]
    monotone = all(e1[i] > e1[i + 1] for i in range(len(e1) - 1))
    return ConvergenceReport(ncells=ncells, err_l1=e1, err_linf=einf,
                             orders_l1=orders, monotone=monotone)
