"""The four figure kinds: profiles, bands, width-fit, optimality.

Each builder validates its inputs first (so failures happen before any file
is touched), computes the annotated values from the tabulated data alone,
and renders with pinned styling so identical inputs give identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "layerplots"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from layerplots.io import SchemaError, read_report, read_snapshots, read_sweep  # noqa: E402

_FIGSIZE = (6.4, 4.2)
_DPI = 150


def _savefig(fig, out: Path) -> None:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if out.suffix.lower() == ".svg" else {
        "Software": "layerplots"}
    fig.savefig(out, dpi=_DPI, metadata=meta)
    plt.close(fig)


def _group_by_time(data: dict[str, np.ndarray]):
    times = np.unique(data["t"])
    for t in times:
        mask = data["t"] == t
        order = np.argsort(data["r"][mask])
        yield float(t), data["r"][mask][order], data["u"][mask][order]


def plot_profiles(snapshots_path: str | Path, out: str | Path,
                  report_path: str | Path | None = None) -> dict:
    """Overlaid u(r) curves over time, with the initial interface marked."""
    data = read_snapshots(snapshots_path)
    report = read_report(report_path) if report_path else None

    groups = list(_group_by_time(data))
    t_max = max(t for t, _, _ in groups) or 1.0
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    cmap = plt.get_cmap("viridis")
    for t, rr, uu in groups:
        ax.plot(rr, uu, lw=1.0, color=cmap(0.05 + 0.9 * t / t_max))
    if report is not None:
        a = report["a"]
        ax.axhline(a, color="0.4", lw=0.8, ls="--")
        t0, rr0, uu0 = groups[0]
        cross = np.nonzero((uu0[:-1] >= a) & (uu0[1:] < a))[0]
        if len(cross):
            k = int(cross[0])
            frac = (uu0[k] - a) / (uu0[k] - uu0[k + 1])
            r_gamma = rr0[k] + frac * (rr0[k + 1] - rr0[k])
            ax.axvline(r_gamma, color="0.4", lw=0.8, ls=":")
            ax.annotate("interface", (r_gamma, 1.02), fontsize=8, color="0.3")
        ax.annotate("level a", (0.985, a + 0.02), fontsize=8, color="0.3",
                    ha="right")
    sm = plt.cm.ScalarMappable(cmap=cmap,
                               norm=plt.Normalize(vmin=0.0, vmax=t_max))
    fig.colorbar(sm, ax=ax, label="time")
    ax.set_xlabel("r")
    ax.set_ylabel("u")
    ax.set_title("layer formation")
    fig.tight_layout()
    _savefig(fig, Path(out))
    return {"n_curves": len(groups), "t_max": t_max}


def plot_bands(report_path: str | Path, snapshots_path: str | Path,
               out: str | Path) -> dict:
    """Solution at the generation time with the fitted exclusion bands."""
    report = read_report(report_path)
    data = read_snapshots(snapshots_path)
    groups = list(_group_by_time(data))
    t_gen = report["t_gen"]
    eps, a, m0 = report["eps"], report["a"], report["M0"]
    gamma = report.get("gamma", 0.1)
    t, rr, uu = min(groups, key=lambda g: abs(g[0] - t_gen))
    _, rr0, uu0 = groups[0]

    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(rr0, uu0, color="0.6", lw=1.0, label="initial data")
    ax.plot(rr, uu, color="C0", lw=1.4, label=f"t = {t:.3g}")
    for level, style in ((gamma, ":"), (a, "--"), (1.0 - gamma, ":")):
        ax.axhline(level, color="0.4", lw=0.8, ls=style)
    if m0 is not None:
        hi = uu0 >= a + m0 * eps
        lo = uu0 <= a - m0 * eps
        ax.fill_between(rr0, -0.05, 1.15, where=hi, color="C2", alpha=0.15,
                        label="expect u >= 1-gamma")
        ax.fill_between(rr0, -0.05, 1.15, where=lo, color="C3", alpha=0.10,
                        label="expect u <= gamma")
    ax.set_xlabel("r")
    ax.set_ylabel("u")
    ax.set_ylim(-0.05, 1.15)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"bands at the generation time (eps = {eps:g}, M0 = "
                 f"{m0 if m0 is None else round(m0, 2)})")
    fig.tight_layout()
    _savefig(fig, Path(out))
    return {"t_used": t, "M0": m0}


def width_fit_values(sweep_path: str | Path) -> dict:
    """Log-log least squares width = C * eps^slope from the sweep table."""
    data = read_sweep(sweep_path)
    keep = np.isfinite(data["width"]) & (data["width"] > 0)
    eps = data["epsilon"][keep]
    width = data["width"][keep]
    if len(eps) < 2:
        raise SchemaError("width fit needs at least 2 positive width entries")
    x = np.log(eps)
    y = np.log(width)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "C": float(math.exp(intercept)),
            "R2": float(r2), "eps": eps, "width": width}


def plot_width_fit(sweep_path: str | Path, out: str | Path) -> dict:
    fit = width_fit_values(sweep_path)
    eps, width = fit["eps"], fit["width"]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.loglog(eps, width, "o", color="C0", label="measured width")
    xs = np.linspace(eps.min(), eps.max(), 50)
    ax.loglog(xs, fit["C"] * xs ** fit["slope"], "-", color="C1",
              label=f"fit: slope = {fit['slope']:.3f}")
    ax.annotate(f"slope = {fit['slope']:.3f}\nR2 = {fit['R2']:.4f}\n"
                f"C = {fit['C']:.3f}",
                xy=(0.05, 0.95), xycoords="axes fraction", va="top",
                fontsize=9)
    ax.set_xlabel("eps")
    ax.set_ylabel("layer width")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("layer thickness scaling")
    fig.tight_layout()
    _savefig(fig, Path(out))
    return {k: fit[k] for k in ("slope", "C", "R2")}


def plot_optimality(sweep_path: str | Path, out: str | Path) -> dict:
    """Shave b = |ln eps| - mu t_min / eps^2 across the sweep."""
    data = read_sweep(sweep_path)
    keep = np.isfinite(data["b_fit"])
    if not np.any(keep):
        raise SchemaError("no finite b_fit entries to plot")
    eps = data["epsilon"][keep]
    b = data["b_fit"][keep]
    frac = np.where(np.isfinite(data["t_min"][keep]),
                    data["t_min"][keep] / data["t_gen"][keep], np.nan)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(_FIGSIZE[0] * 1.4,
                                                  _FIGSIZE[1]))
    ax1.semilogx(eps, b, "o-", color="C0")
    ax1.set_xlabel("eps")
    ax1.set_ylabel("empirical b")
    ax1.set_title("generation-time shave b")
    ax2.semilogx(eps, frac, "s-", color="C1")
    ax2.set_xlabel("eps")
    ax2.set_ylabel("t_min / t_gen")
    ax2.set_ylim(0.0, 1.05)
    ax2.set_title("earliest banded time")
    fig.tight_layout()
    _savefig(fig, Path(out))
    return {"b_max": float(b.max()), "n": int(len(b))}
