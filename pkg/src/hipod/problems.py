"""The two channel-flow benchmark problems on ``(0, 6) x (0, 1)``.

Both are parametrised by the (constant) diffusivity, with Dirichlet data on
the inflow and the lateral walls and a homogeneous Neumann outflow at x = 6.
"""

from __future__ import annotations

import numpy as np

from .fields import Ellipse, Rectangle, Separable, Trig, field_sum
from .himod import CoefficientFields, FiberDomain, ParametricProblem

REFERENCE_DIFFUSIVITY = 0.24
CHANNEL = FiberDomain(0.0, 6.0, 1.0)


def two_ellipse_sources() -> ParametricProblem:
    """Two elliptic pollutant sources under sinusoidal transverse convection."""
    source = field_sum(
        [
            Ellipse(10.0, 0.75, 0.25, 1.0, 0.4, 0.01),
            Ellipse(10.0, 0.75, 0.75, 1.0, 0.4, 0.01),
        ]
    )
    coeffs = CoefficientFields.make(
        mu=REFERENCE_DIFFUSIVITY,
        b1=5.0,
        b2=Separable(1.0, (Trig("sin", 6.0),)),
        sigma=0.1,
        source=source,
    )
    return ParametricProblem(CHANNEL, coeffs, alpha_range=(0.2, 0.8))


def wall_release_sources() -> ParametricProblem:
    """Two rectangular releases along the lateral walls, stronger convection."""
    source = field_sum(
        [
            Rectangle(1000.0, 1.0, 2.0, 0.0, 0.1),
            Rectangle(1000.0, 1.0, 2.0, 0.9, 1.0),
        ]
    )
    coeffs = CoefficientFields.make(
        mu=REFERENCE_DIFFUSIVITY,
        b1=20.0,
        b2=Separable(2.0, (Trig("sin", 6.0),)),
        sigma=0.1,
        source=source,
    )
    return ParametricProblem(CHANNEL, coeffs, alpha_range=(0.2, 0.8))


def separable_diffusion(n_modes_x: int = 1) -> ParametricProblem:
    """Pure diffusion with an eigenfunction source; exact solution below."""
    source = Separable(np.sqrt(2.0), (Trig("sin", n_modes_x * np.pi / 6.0),), (Trig("sin", np.pi),))
    coeffs = CoefficientFields.make(mu=1.0, source=source)
    return ParametricProblem(CHANNEL, coeffs, alpha_range=(1.0, 1.0), dirichlet_right=True)


def separable_exact(x, y, n_modes_x: int = 1):
    lam = (n_modes_x * np.pi / 6.0) ** 2 + np.pi**2
    return np.sqrt(2.0) * np.sin(n_modes_x * np.pi * x / 6.0) * np.sin(np.pi * y) / lam


PROBLEMS = {"tc1": two_ellipse_sources, "tc2": wall_release_sources}
