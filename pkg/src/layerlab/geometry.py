"""Domains, grids, fields, and the compactly supported initial bump.

The domain is a ball of radius R in N >= 2 dimensions (radial mode, the
default) or a rectangle (2-d cross-check mode).  The initial datum is

    u0(r) = c0 (1 - (r/R0)^2)^3   for r < R0,   0 otherwise,

which is C^2 across the support edge r = R0, takes its peak value c0 > a
at the center, and crosses the level a exactly once, on the sphere of
radius r0 = R0 sqrt(1 - (a/c0)^(1/3)) (the initial interface).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ProfileError(ValueError):
    """Initial profile inconsistent with the reaction or the domain."""


class NoCrossingError(ValueError):
    """The initial datum never reaches the requested level."""


def unit_ball_volume(ndim: int) -> float:
    return math.pi ** (ndim / 2.0) / math.gamma(ndim / 2.0 + 1.0)


class RadialGrid:
    """Uniform cell-centered radial grid on the ball of radius R.

    Cell i occupies [faces[i], faces[i+1]]; volumes are exact shell volumes
    so that the cell volumes sum to |Omega| up to rounding, and face areas
    carry the r^(N-1) weight of the conservative radial divergence.
    """

    mode = "radial"

    def __init__(self, ndim: int, radius: float, ncells: int):
        if ndim < 2:
            raise ValueError("spatial dimension must be >= 2")
        if radius <= 0.0:
            raise ValueError("domain radius must be positive")
        if ncells < 16:
            raise ValueError("need at least 16 cells")
        self.ndim = int(ndim)
        self.radius = float(radius)
        self.ncells = int(ncells)
        self.h = self.radius / self.ncells
        self.faces = np.linspace(0.0, self.radius, self.ncells + 1)
        self.centers = 0.5 * (self.faces[:-1] + self.faces[1:])
        vn = unit_ball_volume(self.ndim)
        self.volumes = vn * (self.faces[1:] ** self.ndim - self.faces[:-1] ** self.ndim)
        self.face_areas = self.ndim * vn * self.faces ** (self.ndim - 1)

    @property
    def domain_volume(self) -> float:
        return unit_ball_volume(self.ndim) * self.radius ** self.ndim


class CartesianGrid2D:
    """Uniform square-cell grid on [0, Lx] x [0, Ly] (2-d cross-check mode)."""

    mode = "cartesian2d"
    ndim = 2

    def __init__(self, Lx: float, Ly: float, Nx: int, Ny: int):
        if Nx < 16 or Ny < 16:
            raise ValueError("need at least 16 cells per direction")
        if Lx <= 0.0 or Ly <= 0.0:
            raise ValueError("box lengths must be positive")
        hx, hy = Lx / Nx, Ly / Ny
        if not math.isclose(hx, hy, rel_tol=1e-12):
            raise ValueError(f"cells must be square: Lx/Nx={hx!r} != Ly/Ny={hy!r}")
        self.Lx, self.Ly = float(Lx), float(Ly)
        self.Nx, self.Ny = int(Nx), int(Ny)
        self.h = hx
        self.x = (np.arange(Nx) + 0.5) * hx
        self.y = (np.arange(Ny) + 0.5) * hy

    @property
    def domain_volume(self) -> float:
        return self.Lx * self.Ly


class Field:
    """Cell-centered values on a grid; value semantics via .copy()."""

    def __init__(self, grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        expected = (grid.ncells,) if grid.mode == "radial" else (grid.Nx, grid.Ny)
        if values.shape != expected:
            raise ValueError(f"field shape {values.shape} != grid shape {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def mass(self) -> float:
        if self.grid.mode == "radial":
            return float(self.values @ self.grid.volumes)
        return float(self.values.sum()) * self.grid.h ** 2


@dataclass(frozen=True)
class InitialProfile:
    """Compact radial bump of height c0 and support radius R0.

    ``center`` is only used in 2-d Cartesian mode and defaults to the box
    midpoint.  The gradient and Laplacian rules are analytic; with
    s = r/R0, for r < R0:

        u0   = c0 (1 - s^2)^3
        u0'  = -(6 c0 / R0)   s (1 - s^2)^2
        lap  = -(6 c0 / R0^2) (1 - s^2) [(1 - 5 s^2) + (N - 1)(1 - s^2)]
    """

    c0: float = 0.8
    R0: float = 0.5
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.c0 <= 0.0 or self.R0 <= 0.0:
            raise ProfileError("c0 and R0 must be positive")

    def u0(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        s2 = np.clip(r / self.R0, 0.0, None) ** 2
        out = self.c0 * np.clip(1.0 - s2, 0.0, None) ** 3
        return out

    def du0(self, r) -> np.ndarray:
        """Radial derivative du0/dr (zero outside the support)."""
        r = np.asarray(r, dtype=float)
        s = r / self.R0
        inside = s < 1.0
        g = np.zeros_like(r, dtype=float)
        g[inside] = -(6.0 * self.c0 / self.R0) * s[inside] * (1.0 - s[inside] ** 2) ** 2
        return g

    def grad_sq_u0(self, r) -> np.ndarray:
        return self.du0(r) ** 2

    def lap_u0(self, r, ndim: int) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        s2 = (r / self.R0) ** 2
        inside = s2 < 1.0
        out = np.zeros_like(r, dtype=float)
        q = s2[inside]
        out[inside] = -(6.0 * self.c0 / self.R0 ** 2) * (1.0 - q) * (
            (1.0 - 5.0 * q) + (ndim - 1.0) * (1.0 - q)
        )
        return out

    def radius_at_level(self, level: float) -> float:
        """Radius where u0 equals ``level`` (closed form; level in (0, c0])."""
        if not 0.0 < level <= self.c0:
            raise NoCrossingError(f"level {level!r} outside (0, c0={self.c0!r}]")
        return self.R0 * math.sqrt(1.0 - (level / self.c0) ** (1.0 / 3.0))

    def sup_norm(self) -> float:
        return self.c0


def build_u0(grid, profile: InitialProfile, a: float | None = None) -> Field:
    """Sample the initial bump at cell centers, after consistency checks."""
    if a is not None and profile.c0 <= a:
        raise ProfileError(f"peak c0={profile.c0!r} must exceed the level a={a!r}")
    if grid.mode == "radial":
        if profile.R0 >= grid.radius:
            raise ProfileError("support must lie strictly inside the domain")
        return Field(grid, profile.u0(grid.centers))
    cx, cy = profile.center if profile.center is not None else (grid.Lx / 2, grid.Ly / 2)
    rr = np.sqrt((grid.x[:, None] - cx) ** 2 + (grid.y[None, :] - cy) ** 2)
    if profile.R0 >= min(cx, grid.Lx - cx, cy, grid.Ly - cy):
        raise ProfileError("support must lie strictly inside the box")
    return Field(grid, profile.u0(rr))


def gamma0_locate(profile: InitialProfile, a: float, grid=None):
    """Initial interface {u0 = a}: a radius, or level-set segments in 2-d.

    Radial mode (grid None or radial): returns the closed-form crossing
    radius.  2-d mode: marching squares on the sampled field, returned as
    an (n, 2, 2) array of segment endpoints.
    """
    if profile.c0 < a:
        raise NoCrossingError(f"u0 peaks at {profile.c0!r} < a={a!r}: no interface")
    if profile.c0 == a:
        raise NoCrossingError("u0 only touches the level a: interface degenerate "
                              "(tangency excluded by the nonzero-gradient hypothesis)")
    if grid is None or grid.mode == "radial":
        return profile.radius_at_level(a)
    field = build_u0(grid, profile, a=None)
    return _marching_squares(grid.x, grid.y, field.values, a)


def _marching_squares(x: np.ndarray, y: np.ndarray, z: np.ndarray,
                      level: float) -> np.ndarray:
    """Level-set segments of a sampled scalar field (asymptotic decider free).

    Classic 16-case lookup on each grid square with linear interpolation
    along crossed edges; saddles are split arbitrarily but consistently.
    Returns an array of shape (n_segments, 2, 2) of (x, y) endpoints.
    """
    zz = z - level
    segs: list[tuple[tuple[float, float], tuple[float, float]]] = []
    nx, ny = zz.shape

    def interp(xa, ya, va, xb, yb, vb):
        t = va / (va - vb)
        return (xa + t * (xb - xa), ya + t * (yb - ya))

    for i in range(nx - 1):
        for j in range(ny - 1):
            v00, v10 = zz[i, j], zz[i + 1, j]
            v01, v11 = zz[i, j + 1], zz[i + 1, j + 1]
            idx = ((v00 > 0) | ((v10 > 0) << 1) | ((v11 > 0) << 2) | ((v01 > 0) << 3))
            if idx in (0, 15):
                continue
            x0, x1 = x[i], x[i + 1]
            y0, y1 = y[j], y[j + 1]
            # Edge crossings: bottom (00-10), right (10-11), top (01-11), left (00-01).
            pts = {}
            if (v00 > 0) != (v10 > 0):
                pts["b"] = interp(x0, y0, v00, x1, y0, v10)
            if (v10 > 0) != (v11 > 0):
                pts["r"] = interp(x1, y0, v10, x1, y1, v11)
            if (v01 > 0) != (v11 > 0):
                pts["t"] = interp(x0, y1, v01, x1, y1, v11)
            if (v00 > 0) != (v01 > 0):
                pts["l"] = interp(x0, y0, v00, x0, y1, v01)
            keys = sorted(pts)
            if len(keys) == 2:
                segs.append((pts[keys[0]], pts[keys[1]]))
            elif len(keys) == 4:  # saddle: pair bottom-left and top-right
                segs.append((pts["b"], pts["l"]))
                segs.append((pts["t"], pts["r"]))
    if not segs:
        raise NoCrossingError(f"sampled field never crosses level {level!r}")
    return np.asarray(segs)


def dist_to_gamma0(gamma0, point, profile: InitialProfile, a: float,
                   center: tuple[float, float] | None = None) -> float:
    """Signed distance to the initial interface; positive outside (u0 < a).

    Radial mode: gamma0 is the crossing radius and ``point`` a radius.
    2-d mode: gamma0 is the segment array and ``point`` an (x, y) pair.
    """
    if np.isscalar(gamma0):
        return float(point) - float(gamma0)
    p = np.asarray(point, dtype=float)
    d = _min_dist_to_segments(np.asarray(gamma0), p)
    cx, cy = center if center is not None else (0.0, 0.0)
    r = math.hypot(p[0] - cx, p[1] - cy)
    sign = -1.0 if float(profile.u0(r)) > a else 1.0
    return sign * d


def _min_dist_to_segments(segs: np.ndarray, p: np.ndarray) -> float:
    a = segs[:, 0, :]
    b = segs[:, 1, :]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom == 0.0, 1.0, denom)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.sqrt(((proj - p) ** 2).sum(axis=1)).min())


def classify_regions(grid: RadialGrid, r0: float, band_halfwidth: float) -> dict:
    """Partition cells into inside / interface band / outside by |r - r0|."""
    d = grid.centers - r0
    band = np.abs(d) < band_halfwidth
    inside = (d <= -band_halfwidth)
    outside = (d >= band_halfwidth)
    return {"inside": inside, "band": band, "outside": outside}
