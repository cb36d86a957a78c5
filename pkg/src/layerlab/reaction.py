"""Bistable reaction terms with three zeros 0 < a < 1 and their perturbations.

The stable states are 0 and 1, the middle zero a is unstable:
f'(0) < 0, f'(a) > 0, f'(1) < 0, and f > 0 on (-inf,0) u (a,1),
f < 0 on (0,a) u (1,inf).  The default is the cubic
f(u) = u (1 - u) (u - a), for which f'(a) = a (1 - a).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NoBracketError(ValueError):
    """Raised when a perturbation destroys the three-zero structure."""


@dataclass(frozen=True)
class BistableReaction:
    """A bistable nonlinearity: the unstable zero plus eval rules for f, f', f''.

    The callables must be numpy-vectorized.  Instances are immutable and
    safe to share across concurrent evaluations.
    """

    a: float
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    fsecond: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"

    def mu(self) -> float:
        """Slope f'(a) at the unstable zero; positive for a valid reaction."""
        return float(self.fprime(self.a))


@dataclass(frozen=True)
class PerturbedReaction(BistableReaction):
    """f_delta(u) = f(u) + delta, still bistable for |delta| small.

    ``a`` holds the shifted unstable zero a(delta); ``mu_delta`` its slope.
    The base (unperturbed) unstable zero is kept as ``a_base``.
    """

    delta: float = 0.0
    a_base: float = float("nan")

    @property
    def a_delta(self) -> float:
        return self.a

    @property
    def mu_delta(self) -> float:
        return self.mu()


def cubic(a: float = 0.3) -> BistableReaction:
    """The default cubic f(u) = u (1 - u) (u - a)."""
    if not 0.0 < a < 1.0:
        raise ValueError(f"unstable zero must lie in (0,1), got a={a}")

    def f(u):
        u = np.asarray(u, dtype=float)
        return u * (1.0 - u) * (u - a)

    def fprime(u):
        u = np.asarray(u, dtype=float)
        return -3.0 * u * u + 2.0 * (1.0 + a) * u - a

    def fsecond(u):
        u = np.asarray(u, dtype=float)
        return -6.0 * u + 2.0 * (1.0 + a)

    return BistableReaction(a=a, f=f, fprime=fprime, fsecond=fsecond, kind="cubic")


def eval_f(r: BistableReaction, u) -> float | np.ndarray:
    out = r.f(u)
    return float(out) if np.isscalar(u) else out


def mu(r: BistableReaction) -> float:
    return r.mu()


def validate_bistable(r: BistableReaction, n_samples: int = 10_000) -> list[str]:
    """Check the bistable hypotheses on a dense sample of [-2, 2].

    Returns a list of named violations; empty iff the reaction satisfies
    the zero positions, slope signs and the sign pattern of f.  Never raises.
    """
    issues: list[str] = []
    a = r.a
    if not 0.0 < a < 1.0:
        issues.append(f"zero-position: a={a!r} not in (0,1)")
        return issues

    for z, name in ((0.0, "0"), (a, "a"), (1.0, "1")):
        fz = float(r.f(z))
        if abs(fz) > 1e-14:
            issues.append(f"zero-mismatch: f({name}) = {fz:.3e}")
    for z, name, sign in ((0.0, "0", -1), (a, "a", +1), (1.0, "1", -1)):
        s = float(r.fprime(z))
        if s * sign <= 0.0:
            issues.append(f"slope-sign: f'({name}) = {s:.3e}")

    u = np.linspace(-2.0, 2.0, n_samples)
    fu = np.asarray(r.f(u))
    tol = 1e-13
    pos = ((u < -tol) | ((u > a + tol) & (u < 1.0 - tol)))
    neg = (((u > tol) & (u < a - tol)) | (u > 1.0 + tol))
    if np.any(fu[pos] <= 0.0):
        k = int(np.argmax(fu[pos] <= 0.0))
        issues.append(f"sign-pattern: f <= 0 at u={u[pos][k]:.6f} where f > 0 expected")
    if np.any(fu[neg] >= 0.0):
        k = int(np.argmax(fu[neg] >= 0.0))
        issues.append(f"sign-pattern: f >= 0 at u={u[neg][k]:.6f} where f < 0 expected")
    return issues


def delta_threshold(r: BistableReaction, n_scan: int = 4001) -> float:
    """Largest |delta| for which f + delta keeps three zeros on [-1, 2].

    Discovered by scanning the local extrema of f between its zeros rather
    than assumed: the structure is lost when delta cancels the shallower of
    the two interior extrema.
    """
    u = np.linspace(-1.0, 2.0, n_scan)
    fu = np.asarray(r.f(u))
    in_mid = (u > 0.0) & (u < r.a)
    in_top = (u > r.a) & (u < 1.0)
    f_min = float(fu[in_mid].min())
    f_max = float(fu[in_top].max())
    return min(-f_min, f_max)


def _three_zero_brackets(r: BistableReaction, delta: float, n_scan: int = 4001):
    """Sign-change brackets of f + delta on [-1, 2]; raises if not exactly 3."""
    u = np.linspace(-1.0, 2.0, n_scan)
    fu = np.asarray(r.f(u)) + delta
    s = np.sign(fu)
    flips = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if len(flips) != 3:
        raise NoBracketError(
            f"f + {delta!r} has {len(flips)} sign changes on [-1,2]; "
            "three-zero structure lost"
        )
    return [(u[k], u[k + 1]) for k in flips]


def perturb(r: BistableReaction, delta: float, tol: float = 1e-12) -> PerturbedReaction:
    """Shift the reaction by a constant: f_delta = f + delta.

    Locates the shifted unstable zero a(delta) by safeguarded Newton started
    at a, with bisection fallback inside the bracket found by a sign scan.
    Raises NoBracketError when |delta| is large enough to destroy bistability.
    """
    brackets = _three_zero_brackets(r, delta)
    lo, hi = brackets[1]  # middle zero = the unstable one (up-crossing)

    x = min(max(r.a, lo), hi)
    for _ in range(100):
        fx = float(r.f(x)) + delta
        if fx > 0.0:
            hi = x
        elif fx < 0.0:
            lo = x
        dfx = float(r.fprime(x))
        step_ok = dfx != 0.0
        if step_ok:
            x_new = x - fx / dfx
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)  # bisect when Newton leaves the bracket
        if abs(x_new - x) <= tol:
            x = x_new
            break
        x = x_new
    a_delta = x

    base_f, base_fp, base_fs = r.f, r.fprime, r.fsecond

    def f(u):
        return base_f(u) + delta

    mu_delta = float(base_fp(a_delta))
    if mu_delta <= 0.0:
        raise NoBracketError(f"f'(a(delta)) = {mu_delta:.3e} <= 0 at delta={delta!r}")
    return PerturbedReaction(
        a=float(a_delta),
        f=f,
        fprime=base_fp,
        fsecond=base_fs,
        kind=f"{r.kind}+delta",
        delta=float(delta),
        a_base=r.a,
    )
