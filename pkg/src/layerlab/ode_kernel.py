"""Flow of the bistable ODE Y' = f(Y) with first and second sensitivities.

Integrates, jointly and to tight tolerance,

    Y'   = f(Y),            Y(0)    = xi,
    V'   = f'(Y) V,         V(0)    = 1,      (V = dY/dxi)
    W'   = f''(Y) V^2 + f'(Y) W,  W(0) = 0,   (W = d2Y/dxi2)

with an adaptive Dormand-Prince 4(5) pair, vectorized over batches of
initial values.  Every quantitative check in the package leans on this
kernel, so its tolerance is chosen to dominate all other error budgets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from layerlab.reaction import BistableReaction

# Dormand-Prince coefficients (RK45, the classic dopri5 tableau).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([], dtype=float),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)

_MAX_STEPS = 2_000_000


class KernelRangeError(ValueError):
    """Initial value xi outside the configured amplitude window."""


class StepOverflowError(RuntimeError):
    """Adaptive stepping exceeded the step budget."""


@dataclass(frozen=True)
class KernelConfig:
    """Integrator controls and the amplitude bound C0 = ||u0||_inf + 1."""

    dtau_max: float = 1.0
    tol: float = 1e-12
    C0: float = 1.8

    def __post_init__(self):
        if self.dtau_max <= 0.0:
            raise ValueError("dtau_max must be positive")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.C0 <= 1.0:
            raise ValueError("C0 must exceed 1")


@dataclass(frozen=True)
class KernelResult:
    """Flow value and sensitivities at one (tau, xi)."""

    Y: float
    Y_xi: float
    Y_xixi: float
    tau: float
    xi: float


@dataclass(frozen=True)
class LinearizationFit:
    """Sampled bounds C1 <= (Y - a) / (e^{mu tau} (xi - a)) <= C2 on (a, 1 - eta)."""

    C1: float
    C2: float
    eta: float


@dataclass(frozen=True)
class KernelBoundFit:
    """Sampled constant C in |Y_xixi / Y_xi| <= C (e^{mu tau} - 1)."""

    C: float


def _rhs(r: BistableReaction, y: np.ndarray) -> np.ndarray:
    Y, V, W = y[0], y[1], y[2]
    fp = r.fprime(Y)
    out = np.empty_like(y)
    out[0] = r.f(Y)
    out[1] = fp * V
    out[2] = r.fsecond(Y) * V * V + fp * W
    return out


def flow_targets(
    r: BistableReaction,
    cfg: KernelConfig,
    taus: np.ndarray,
    xis: np.ndarray,
    check_range: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched flow: returns (Y, Y_xi, Y_xixi) at each (taus[i], xis[i]).

    One adaptive integration advances the whole batch; each column is frozen
    once its target time is reached, and the error control only sees the
    still-active columns.  Targets need not be sorted.
    """
    taus = np.asarray(taus, dtype=float)
    xis = np.asarray(xis, dtype=float)
    if taus.shape != xis.shape or taus.ndim != 1:
        raise ValueError("taus and xis must be 1-d arrays of equal length")
    if np.any(taus < 0.0) or not np.all(np.isfinite(taus)):
        raise ValueError("tau targets must be finite and >= 0")
    if not np.all(np.isfinite(xis)):
        raise ValueError("xi values must be finite")
    if check_range and np.any(np.abs(xis) >= cfg.C0):
        bad = float(xis[np.argmax(np.abs(xis))])
        raise KernelRangeError(f"xi={bad!r} outside (-C0, C0) with C0={cfg.C0!r}")

    n = len(xis)
    out = np.empty((3, n))
    done = taus == 0.0
    out[0, done] = xis[done]
    out[1, done] = 1.0
    out[2, done] = 0.0
    active_idx = np.nonzero(~done)[0]
    if len(active_idx) == 0:
        return out[0].copy(), out[1].copy(), out[2].copy()

    # Process in order of increasing target time, shrinking the batch.
    order = active_idx[np.argsort(taus[active_idx], kind="stable")]
    y = np.zeros((3, len(order)))
    y[0] = xis[order]
    y[1] = 1.0
    t_targets = taus[order]

    tau = 0.0
    dt = min(cfg.dtau_max, 1e-3)
    pos = 0  # columns < pos are frozen into `out`
    k = np.empty((7,) + y.shape)
    tol = cfg.tol
    steps = 0
    while pos < len(order):
        # Freeze every column whose target is (numerically) reached.
        while pos < len(order) and t_targets[pos] <= tau * (1.0 + 1e-15):
            out[:, order[pos]] = y[:, pos]
            pos += 1
        if pos == len(order):
            break
        t_next = t_targets[pos]
        dt = min(dt, cfg.dtau_max)
        if tau + dt > t_next:
            dt = t_next - tau

        act = slice(pos, None)
        ya = y[:, act]
        k[0, :, act.start:] = _rhs(r, ya)
        for s in range(1, 7):
            acc = ya + dt * np.tensordot(_A[s], k[:s, :, act.start:], axes=(0, 0))
            k[s, :, act.start:] = _rhs(r, acc)
        y5 = ya + dt * np.tensordot(_B5, k[:, :, act.start:], axes=(0, 0))
        y4 = ya + dt * np.tensordot(_B4, k[:, :, act.start:], axes=(0, 0))
        scale = tol + tol * np.maximum(np.abs(ya), np.abs(y5))
        err = float(np.max(np.abs(y5 - y4) / scale)) if y5.size else 0.0

        if err <= 1.0:
            tau += dt
            y[:, act] = y5
            grow = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
            dt *= grow
        else:
            dt *= max(0.2, 0.9 * err ** -0.2)
        steps += 1
        if steps > _MAX_STEPS:
            raise StepOverflowError(f"exceeded {_MAX_STEPS} steps at tau={tau!r}")
        if dt <= 1e-15 * max(1.0, tau):
            raise StepOverflowError(f"step size underflow at tau={tau!r}")
    return out[0].copy(), out[1].copy(), out[2].copy()


def flow_checkpoints(
    r: BistableReaction,
    cfg: KernelConfig,
    taus: np.ndarray,
    xis: np.ndarray,
    check_range: bool = True,
) -> np.ndarray:
    """Record one xi-batch at a whole increasing sequence of times.

    Returns an array of shape (len(taus), 3, len(xis)) holding (Y, Y_xi,
    Y_xixi) for every checkpoint; a single integration serves all of them.
    """
    taus = np.asarray(taus, dtype=float)
    xis = np.asarray(xis, dtype=float)
    if np.any(np.diff(taus) <= 0.0) or np.any(taus < 0.0):
        raise ValueError("checkpoint times must be strictly increasing and >= 0")
    if check_range and np.any(np.abs(xis) >= cfg.C0):
        bad = float(xis[np.argmax(np.abs(xis))])
        raise KernelRangeError(f"xi={bad!r} outside (-C0, C0) with C0={cfg.C0!r}")

    out = np.empty((len(taus), 3, len(xis)))
    y = np.zeros((3, len(xis)))
    y[0] = xis
    y[1] = 1.0
    tau = 0.0
    dt = min(cfg.dtau_max, 1e-3)
    tol = cfg.tol
    pos = 0
    steps = 0
    while pos < len(taus):
        while pos < len(taus) and taus[pos] <= tau * (1.0 + 1e-15) + 1e-300:
            out[pos] = y
            pos += 1
        if pos == len(taus):
            break
        dt = min(dt, cfg.dtau_max)
        if tau + dt > taus[pos]:
            dt = taus[pos] - tau
        k0 = _rhs(r, y)
        ks = [k0]
        for s in range(1, 7):
            acc = y + dt * sum(a * kk for a, kk in zip(_A[s], ks))
            ks.append(_rhs(r, acc))
        y5 = y + dt * sum(b * kk for b, kk in zip(_B5, ks) if b != 0.0)
        y4 = y + dt * sum(b * kk for b, kk in zip(_B4, ks) if b != 0.0)
        scale = tol + tol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.max(np.abs(y5 - y4) / scale))
        if err <= 1.0:
            tau += dt
            y = y5
            dt *= 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
        else:
            dt *= max(0.2, 0.9 * err ** -0.2)
        steps += 1
        if steps > _MAX_STEPS:
            raise StepOverflowError(f"exceeded {_MAX_STEPS} steps at tau={tau!r}")
        if dt <= 1e-15 * max(1.0, tau):
            raise StepOverflowError(f"step size underflow at tau={tau!r}")
    return out


def flow(r: BistableReaction, cfg: KernelConfig, tau: float, xi: float,
         check_range: bool = True) -> KernelResult:
    """Flow map and sensitivities at a single point (tau, xi)."""
    Y, V, W = flow_targets(
        r, cfg, np.array([tau], dtype=float), np.array([xi], dtype=float),
        check_range=check_range,
    )
    return KernelResult(Y=float(Y[0]), Y_xi=float(V[0]), Y_xixi=float(W[0]),
                        tau=float(tau), xi=float(xi))


def curvature_ratio(r: BistableReaction, cfg: KernelConfig, tau: float,
                    xi: float) -> float:
    """|Y_xixi / Y_xi| at (tau, xi); zero at tau = 0 by the initial data."""
    res = flow(r, cfg, tau, xi)
    return abs(res.Y_xixi) / res.Y_xi


def fit_curvature_bound(
    r: BistableReaction,
    cfg: KernelConfig,
    tau_max: float,
    n_samples: int = 4000,
    seed: int = 20260810,
) -> KernelBoundFit:
    """Sampled constant for the curvature bound |W/V| <= C (e^{mu tau} - 1).

    Uniform random (tau, xi) over (0, tau_max] x (-C0, C0), drawn as rows of
    one stream: with a fixed seed a smaller sample is a prefix of a larger
    one, so enlarging the sample can only push the estimate up toward the
    supremum.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n_samples, 2))
    taus = 1e-6 + pts[:, 0] * (tau_max - 1e-6)
    xis = (-cfg.C0 + 1e-9) + pts[:, 1] * (2 * cfg.C0 - 2e-9)
    _, V, W = flow_targets(r, cfg, taus, xis)
    m = r.mu()
    ratios = np.abs(W) / V / np.expm1(m * taus)
    return KernelBoundFit(C=float(ratios.max()))


def after_time_check(
    r: BistableReaction,
    cfg: KernelConfig,
    eps: float,
    gamma: float,
    C_Y: float,
    n_samples: int = 10_001,
) -> list[str]:
    """Band estimates for Y at tau = |ln eps| / mu; returns violations.

    Checks, over a dense xi sample of (-C0, C0):
      (i)   -gamma <= Y <= 1 + gamma everywhere,
      (ii)  xi >= a + C_Y eps  implies  Y >= 1 - gamma,
      (iii) xi <= a - C_Y eps  implies  Y <= gamma.
    Diagnostics only; never raises on a violation.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    if not 0.0 < gamma < min(r.a, 1.0 - r.a):
        raise ValueError("gamma must lie in (0, min(a, 1-a))")
    if C_Y <= 0.0:
        raise ValueError("C_Y must be positive")
    m = r.mu()
    tau = abs(np.log(eps)) / m
    xis = np.linspace(-cfg.C0 + 1e-9, cfg.C0 - 1e-9, n_samples)
    Y, _, _ = flow_targets(r, cfg, np.full(n_samples, tau), xis)

    bad: list[str] = []
    out_range = (Y < -gamma) | (Y > 1.0 + gamma)
    for i in np.nonzero(out_range)[0][:20]:
        bad.append(f"range: Y({tau:.4g}, {xis[i]:.6g}) = {Y[i]:.6g}")
    hi = xis >= r.a + C_Y * eps
    lo = xis <= r.a - C_Y * eps
    for i in np.nonzero(hi & (Y < 1.0 - gamma))[0][:20]:
        bad.append(f"upper-band: Y({tau:.4g}, {xis[i]:.6g}) = {Y[i]:.6g} < 1-gamma")
    for i in np.nonzero(lo & (Y > gamma))[0][:20]:
        bad.append(f"lower-band: Y({tau:.4g}, {xis[i]:.6g}) = {Y[i]:.6g} > gamma")
    return bad


def find_CY(
    r: BistableReaction,
    cfg: KernelConfig,
    eps: float,
    gamma: float,
    n_samples: int = 10_001,
    inflation: float = 1.02,
) -> float:
    """Smallest C_Y (up to 0.1% and a small safety factor) passing the bands.

    No closed form for C_Y is available, so it is discovered by bisection
    on a precomputed Y(tau_eps, xi) table; the band predicate is monotone in
    C_Y, which makes bisection exact on the sample.
    """
    m = r.mu()
    tau = abs(np.log(eps)) / m
    xis = np.linspace(-cfg.C0 + 1e-9, cfg.C0 - 1e-9, n_samples)
    Y, _, _ = flow_targets(r, cfg, np.full(n_samples, tau), xis)

    def ok(cy: float) -> bool:
        hi = xis >= r.a + cy * eps
        lo = xis <= r.a - cy * eps
        return bool(np.all(Y[hi] >= 1.0 - gamma) and np.all(Y[lo] <= gamma))

    lo_c, hi_c = 1e-3, (cfg.C0 - r.a) / eps
    if not ok(hi_c):
        raise RuntimeError("band estimate fails even for the widest exclusion")
    if ok(lo_c):
        return lo_c * inflation
    while hi_c / lo_c > 1.001:
        mid = np.sqrt(lo_c * hi_c)
        if ok(mid):
            hi_c = mid
        else:
            lo_c = mid
    return float(hi_c * inflation)


def fit_linearization(
    r: BistableReaction,
    cfg: KernelConfig,
    eta: float,
    n_xi: int = 400,
    dtau_checkpoint: float = 0.05,
) -> LinearizationFit:
    """Ratio bounds (Y - a) / (e^{mu tau} (xi - a)) while Y stays in (a, 1 - eta).

    Samples xi in (a, 1 - eta) on a geometric offset grid and records the
    ratio along each trajectory on a uniform tau grid until every trajectory
    has left the strip.  tau = 0 is included, where the ratio equals 1.
    """
    if not 0.0 < eta < min(r.a, 1.0 - r.a):
        raise ValueError("eta must lie in (0, min(a, 1-a))")
    top = 1.0 - eta
    if top - r.a <= 1e-9:
        raise ValueError("eta leaves no admissible xi in (a, 1 - eta)")
    offsets = np.geomspace(1e-6, (top - r.a) * (1.0 - 1e-9), n_xi)
    xis = r.a + offsets
    m = r.mu()
    # Slowest trajectory leaves the strip after ~ ln(range/offset)/mu.
    tau_max = np.log((top - r.a) / offsets[0]) / m * 1.8 + 1.0

    c1, c2 = 1.0, 1.0  # tau = 0 contributes ratio exactly 1
    taus = np.arange(dtau_checkpoint, tau_max, dtau_checkpoint)
    snaps = flow_checkpoints(r, cfg, taus, xis)  # (n_tau, 3, n_xi)
    Y = snaps[:, 0, :]
    inside = (Y > r.a) & (Y < top)
    if np.any(inside):
        growth = np.exp(m * taus)[:, None] * (xis - r.a)[None, :]
        ratios = (Y[inside] - r.a) / growth[inside]
        c1 = min(c1, float(ratios.min()))
        c2 = max(c2, float(ratios.max()))
    return LinearizationFit(C1=c1, C2=c2, eta=eta)
