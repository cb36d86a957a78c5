"""Run configuration: flat dotted-key text files plus command-line overrides.

The format is one ``key = value`` pair per line, ``#`` comments allowed.
Unknown keys, type mismatches, and invariant violations are reported with
their key path.  The effective (defaults-filled) configuration is echoed
next to every output so runs are reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from layerlab.geometry import CartesianGrid2D, InitialProfile, RadialGrid
from layerlab.ode_kernel import KernelConfig
from layerlab.reaction import BistableReaction, cubic, perturb
from layerlab.verify import VerifyParams

SCHEMA_VERSION = "layerlab.v1"


class ConfigError(ValueError):
    """Bad key, bad type, or violated invariant, reported with its key path."""


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str) -> tuple[float, ...]:
    items = [p.strip() for p in s.replace("[", "").replace("]", "").split(",")]
    return tuple(float(p) for p in items if p)


# key -> (type tag, default); types: float, int, bool, str, float_list
_DEFAULTS: dict[str, tuple[str, Any]] = {
    "reaction.kind": ("str", "cubic"),
    "reaction.a": ("float", 0.3),
    "reaction.delta": ("float", 0.0),
    "grid.mode": ("str", "radial"),
    "grid.N": ("int", 2),
    "grid.R": ("float", 1.0),
    "grid.Nr": ("int", 2048),
    "grid.Lx": ("float", 2.0),
    "grid.Ly": ("float", 2.0),
    "grid.Nx": ("int", 256),
    "grid.Ny": ("int", 256),
    "profile.c0": ("float", 0.8),
    "profile.R0": ("float", 0.5),
    "solver.m": ("int", 2),
    "solver.eps": ("float", 0.01),
    "solver.cfl_safety": ("float", 0.4),
    "solver.t_end_factor": ("float", 2.0),
    "solver.substep_safety": ("float", 0.1),
    "kernel.tol": ("float", 1e-12),
    "kernel.dtau_max": ("float", 1.0),
    "envelope.ladder_base": ("float", 0.5),
    "envelope.ladder_rungs": ("int", 14),
    "verify.gamma": ("float", 0.1),
    "verify.eta": ("float", 0.1),
    "verify.sandwich_tol": ("float", 5e-3),
    "verify.probe_b": ("float", 3.0),
    "sweep.eps_list": ("float_list", (0.02, 0.01, 0.005)),
    "sweep.orders": ("bool", True),
    "output.dir": ("str", "out"),
    "output.format": ("str", "csv+json"),
    "seed": ("int", 12345),
}

_PARSERS = {
    "float": float,
    "int": int,
    "bool": _parse_bool,
    "str": str,
    "float_list": _parse_float_list,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated, defaults-filled configuration for one experiment tree."""

    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    # -- factories for the domain objects ---------------------------------
    def reaction(self) -> BistableReaction:
        r = cubic(self["reaction.a"])
        if self["reaction.delta"] != 0.0:
            return perturb(r, self["reaction.delta"])
        return r

    def grid(self):
        if self["grid.mode"] == "radial":
            return RadialGrid(self["grid.N"], self["grid.R"], self["grid.Nr"])
        return CartesianGrid2D(self["grid.Lx"], self["grid.Ly"],
                               self["grid.Nx"], self["grid.Ny"])

    def profile(self) -> InitialProfile:
        return InitialProfile(c0=self["profile.c0"], R0=self["profile.R0"])

    def kernel_cfg(self, c0_amplitude: float | None = None) -> KernelConfig:
        amp = self["profile.c0"] if c0_amplitude is None else c0_amplitude
        return KernelConfig(dtau_max=self["kernel.dtau_max"],
                            tol=self["kernel.tol"], C0=amp + 1.0)

    def verify_params(self) -> VerifyParams:
        return VerifyParams(gamma=self["verify.gamma"], eta=self["verify.eta"],
                            sandwich_tol=self["verify.sandwich_tol"],
                            probe_b=self["verify.probe_b"])

    def with_values(self, **overrides: Any) -> "RunConfig":
        merged = dict(self.values)
        for k, v in overrides.items():
            if k not in _DEFAULTS:
                raise ConfigError(f"unknown key: {k}")
            merged[k] = v
        cfg = RunConfig(values=merged)
        _validate(cfg)
        return cfg

    def to_text(self) -> str:
        lines = [f"# effective configuration ({SCHEMA_VERSION})"]
        for key in sorted(self.values):
            lines.append(f"{key} = {format_value(self.values[key])}")
        return "\n".join(lines) + "\n"


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ", ".join(format(x, ".17g") for x in v)
    return str(v)


def parse_config(path: str | Path | None = None,
                 overrides: list[str] | None = None) -> RunConfig:
    """Read a dotted-key file (optional) and apply ``key=value`` overrides."""
    raw: dict[str, str] = {}
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in stripped.split("=", 1))
            raw[key] = val
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, val = (s.strip() for s in item.split("=", 1))
        raw[key] = val

    values: dict[str, Any] = {k: v for k, (_, v) in _DEFAULTS.items()}
    for key, sval in raw.items():
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown key: {key}")
        kind = _DEFAULTS[key][0]
        try:
            values[key] = _PARSERS[kind](sval)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {sval!r} as {kind}") from exc
    cfg = RunConfig(values=values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    v = cfg.values

    def need(cond: bool, key: str, msg: str):
        if not cond:
            raise ConfigError(f"{key}: {msg} (got {format_value(v[key])})")

    need(v["reaction.kind"] == "cubic", "reaction.kind", "only 'cubic' is supported")
    need(0.0 < v["reaction.a"] < 1.0, "reaction.a", "must lie in (0, 1)")
    need(v["grid.mode"] in ("radial", "cartesian2d"), "grid.mode",
         "must be 'radial' or 'cartesian2d'")
    need(v["grid.N"] >= 2, "grid.N", "spatial dimension must be >= 2")
    need(v["grid.R"] > 0.0, "grid.R", "must be positive")
    need(v["grid.Nr"] >= 16, "grid.Nr", "need at least 16 cells")
    need(v["grid.Nx"] >= 16 and v["grid.Ny"] >= 16, "grid.Nx", "need >= 16 cells")
    need(v["profile.c0"] > v["reaction.a"], "profile.c0",
         "peak must exceed reaction.a")
    need(v["profile.c0"] < 1.0 + 1e-12, "profile.c0",
         "peak above 1 leaves the bistable range")
    need(v["profile.R0"] < v["grid.R"], "profile.R0",
         "support must lie strictly inside the domain")
    need(v["solver.m"] >= 2, "solver.m", "diffusion exponent must be >= 2")
    need(0.0 < v["solver.eps"] < 1.0, "solver.eps", "must lie in (0, 1)")
    need(0.0 < v["solver.cfl_safety"] <= 1.0, "solver.cfl_safety",
         "must lie in (0, 1]")
    need(v["solver.t_end_factor"] > 0.0, "solver.t_end_factor", "must be positive")
    need(v["kernel.tol"] > 0.0, "kernel.tol", "must be positive")
    need(v["kernel.dtau_max"] > 0.0, "kernel.dtau_max", "must be positive")
    cap = min(v["reaction.a"], 1.0 - v["reaction.a"])
    need(0.0 < v["verify.gamma"] < cap, "verify.gamma", f"must lie in (0, {cap})")
    need(0.0 < v["verify.eta"] < cap, "verify.eta", f"must lie in (0, {cap})")
    need(v["verify.sandwich_tol"] >= 0.0, "verify.sandwich_tol", "must be >= 0")
    need(len(v["sweep.eps_list"]) >= 1, "sweep.eps_list", "must not be empty")
    for e in v["sweep.eps_list"]:
        need(0.0 < e < 1.0, "sweep.eps_list", "entries must lie in (0, 1)")
    need(v["output.format"] == "csv+json", "output.format",
         "only 'csv+json' is supported")
