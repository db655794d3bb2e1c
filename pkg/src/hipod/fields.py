"""Scalar coefficient fields over the rectangle (x, y).

Only a handful of expression shapes are needed by the test cases: constants,
products of one-dimensional trigonometric / polynomial factors, indicators of
axis-aligned ellipses and rectangles, and sums of these.  Every field is a
frozen dataclass, evaluates vectorised over broadcastable ``x`` and ``y``
arrays and carries two assembly hints:

``depends``
    ``"const"``, ``"x"`` or ``"xy"``.  Fields that do not vary in ``y`` are
    assembled against closed-form modal correlations.
``smooth``
    ``False`` for indicator functions, whose integrals are computed with a
    midpoint subsampling rule instead of Gauss quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

_RANK = {"const": 0, "x": 1, "xy": 2}


def _join(*deps: str) -> str:
    return max(deps, key=_RANK.__getitem__, default="const")


class Field:
    depends: str = "xy"
    smooth: bool = True

    def __call__(self, x, y):  # pragma: no cover - abstract
        raise NotImplementedError

    def __add__(self, other: "Field") -> "Field":
        return FieldSum((self, other))

    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class Constant(Field):
    value: float

    @property
    def depends(self) -> str:
        return "const"

    def __call__(self, x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(self.value))

    def is_zero(self) -> bool:
        return self.value == 0.0


@dataclass(frozen=True)
class Trig:
    """``sin(freq * t + phase)`` or ``cos(freq * t + phase)``."""

    kind: str
    freq: float
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"unknown trigonometric factor {self.kind!r}")

    def __call__(self, t):
        fn = np.sin if self.kind == "sin" else np.cos
        return fn(self.freq * np.asarray(t, dtype=float) + self.phase)


@dataclass(frozen=True)
class Poly:
    """Polynomial factor with coefficients in increasing degree."""

    coeffs: tuple

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coeffs)


@dataclass(frozen=True)
class Separable(Field):
    """``scale * prod(fx(x)) * prod(fy(y))``."""

    scale: float
    fx: tuple = ()
    fy: tuple = ()

    @property
    def depends(self) -> str:
        if self.fy:
            return "xy"
        return "x" if self.fx else "const"

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.full(np.broadcast(x, y).shape, float(self.scale))
        for f in self.fx:
            out = out * f(x)
        for f in self.fy:
            out = out * f(y)
        return out

    def is_zero(self) -> bool:
        return self.scale == 0.0


@dataclass(frozen=True)
class Ellipse(Field):
    """``value`` on ``{wx (x-cx)^2 + wy (y-cy)^2 < radius2}``, zero elsewhere."""

    value: float
    cx: float
    cy: float
    wx: float
    wy: float
    radius2: float

    depends = "xy"
    smooth = False

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = self.wx * (x - self.cx) ** 2 + self.wy * (y - self.cy) ** 2 < self.radius2
        return np.where(inside, float(self.value), 0.0)


@dataclass(frozen=True)
class Rectangle(Field):
    """``value`` on the open box ``(x0, x1) x (y0, y1)``."""

    value: float
    x0: float
    x1: float
    y0: float
    y1: float

    depends = "xy"
    smooth = False

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)
        return np.where(inside, float(self.value), 0.0)


@dataclass(frozen=True)
class FieldSum(Field):
    terms: tuple

    @property
    def depends(self) -> str:
        return _join(*(t.depends for t in self.terms))

    @property
    def smooth(self) -> bool:
        return all(t.smooth for t in self.terms)

    def __call__(self, x, y):
        out = self.terms[0](x, y)
        for t in self.terms[1:]:
            out = out + t(x, y)
        return out

    def is_zero(self) -> bool:
        return all(t.is_zero() for t in self.terms)


def as_field(value) -> Field:
    if isinstance(value, Field):
        return value
    return Constant(float(value))


def field_sum(terms: Sequence[Field]) -> Field:
    terms = tuple(terms)
    if len(terms) == 1:
        return terms[0]
    return FieldSum(terms)
