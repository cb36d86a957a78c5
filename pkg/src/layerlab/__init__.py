"""Numerical laboratory for interface generation in degenerate reaction-diffusion.

Simulates u_t = lap(u^m) + f(u)/eps^2 with a bistable f and zero-flux
boundary on u^m, and checks quantitatively that a transition layer of
thickness O(eps) forms near the level set {u0 = a} on the time scale
t_gen = eps^2 |ln eps| / f'(a).
"""

from layerlab.reaction import BistableReaction, PerturbedReaction, cubic, perturb
from layerlab.ode_kernel import KernelConfig, KernelResult, flow
from layerlab.geometry import RadialGrid, CartesianGrid2D, Field, InitialProfile
from layerlab.envelope import EnvelopeParams, GenerationClock, generation_time
from layerlab.solver import SolverConfig, Snapshot

__version__ = "0.1.0"

__all__ = [
    "BistableReaction",
    "PerturbedReaction",
    "cubic",
    "perturb",
    "KernelConfig",
    "KernelResult",
    "flow",
    "RadialGrid",
    "CartesianGrid2D",
    "Field",
    "InitialProfile",
    "EnvelopeParams",
    "GenerationClock",
    "generation_time",
    "SolverConfig",
    "Snapshot",
    "__version__",
]
