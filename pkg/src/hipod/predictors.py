"""Scalar predictors for the parameter-to-coefficient maps ``alpha -> Q(alpha)``.

Three kinds share one interface (:func:`fit` then :meth:`evaluate`):

* ``pch``: shape-preserving piecewise cubic Hermite interpolation;
* ``poly:<n>``: least-squares polynomial of degree ``n``;
* ``gp`` / ``gp:paper`` / ``gp:standard``: Gaussian-process regression with the
  quadratic prior mean ``alpha**2 / 4`` and a unit squared-exponential kernel.

The ``paper`` GP mode evaluates the posterior mean exactly as the method
describes it, ``q_prior(a*) - k*^T (K + nugget I)^-1 Q``; the ``standard`` mode
is the textbook posterior ``q_prior(a*) + k*^T (K + nugget I)^-1 (Q - q_prior)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError

RANGE_TOL = 1e-12
GP_JITTER = 1e-8


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Training pairs sorted by abscissa."""

    alpha: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float).ravel()
        q = np.asarray(self.q, dtype=float).ravel()
        if a.shape != q.shape or a.size == 0:
            raise ConfigError("abscissae and ordinates must be non-empty and of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(q))):
            raise ConfigError("samples must be finite")
        order = np.argsort(a, kind="stable")
        a, q = a[order], q[order]
        if np.any(np.diff(a) <= 0):
            raise ConfigError("duplicate abscissae in sample set")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "q", q)

    def __len__(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class PredictorSpec:
    kind: str
    degree: int = 3
    gp_mode: str = "paper"
    nugget: float | None = None

    def __post_init__(self):
        if self.kind not in ("pch", "polynomial", "gp"):
            raise ConfigError(f"unknown predictor kind {self.kind!r}")
        if self.degree < 0:
            raise ConfigError("polynomial degree must be >= 0")
        if self.gp_mode not in ("paper", "standard"):
            raise ConfigError(f"unknown GP mode {self.gp_mode!r}")
        if self.nugget is not None and not self.nugget >= 0:
            raise ConfigError("nugget must be >= 0")

    def __str__(self) -> str:
        if self.kind == "pch":
            s = "pch"
        elif self.kind == "polynomial":
            s = f"poly:{self.degree}"
        else:
            s = f"gp:{self.gp_mode}"
        if self.nugget is not None:
            s += f":nugget={self.nugget:g}"
        return s


_NUGGET = re.compile(r"^nugget=(.+)$")


def parse_predictor(text: str) -> PredictorSpec:
    """Parse ``pch``, ``poly:<degree>``, ``gp``, ``gp:paper``, ``gp:standard``,
    each optionally followed by ``:nugget=<real>``."""
    parts = [p.strip() for p in text.strip().split(":") if p.strip()]
    if not parts:
        raise ConfigError("empty predictor spec")
    nugget = None
    if parts and (mt := _NUGGET.match(parts[-1])):
        try:
            nugget = float(mt.group(1))
        except ValueError:
            raise ConfigError(f"bad nugget in predictor spec {text!r}") from None
        parts = parts[:-1]
    head, rest = parts[0].lower(), parts[1:]
    try:
        if head == "pch" and not rest:
            return PredictorSpec("pch", nugget=nugget)
        if head in ("poly", "polynomial") and len(rest) <= 1:
            return PredictorSpec("polynomial", degree=int(rest[0]) if rest else 3, nugget=nugget)
        if head == "gp" and len(rest) <= 1:
            return PredictorSpec("gp", gp_mode=rest[0] if rest else "paper", nugget=nugget)
    except ValueError as exc:
        raise ConfigError(f"bad predictor spec {text!r}: {exc}") from None
    raise ConfigError(f"bad predictor spec {text!r}")


class FittedPredictor:
    kind: str = ""

    def __init__(self, samples: SampleSet):
        self.samples = samples

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.samples.alpha[0]), float(self.samples.alpha[-1])

    def _check_range(self, alpha, extrapolate):
        if extrapolate:
            return
        lo, hi = self.bounds
        a = np.asarray(alpha)
        if np.any(a < lo - RANGE_TOL) or np.any(a > hi + RANGE_TOL):
            raise ConfigError(f"alpha={alpha} outside the fitted range [{lo}, {hi}]")

    def evaluate(self, alpha, extrapolate: bool = False):
        self._check_range(alpha, extrapolate)
        out = self._evaluate(np.asarray(alpha, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    __call__ = evaluate

    def _evaluate(self, alpha):  # pragma: no cover - abstract
        raise NotImplementedError


# --------------------------------------------------------------------------
# Piecewise cubic Hermite
# --------------------------------------------------------------------------


def _pch_end_slope(h0, h1, d0, d1):
    """One-sided three-point end slope with the shape-preserving limiter."""
    s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if np.sign(s) != np.sign(d0):
        return 0.0
    if np.sign(d0) != np.sign(d1) and abs(s) > abs(3.0 * d0):
        return 3.0 * d0
    return s


def pch_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Monotonicity-preserving knot derivatives (weighted harmonic mean of secants)."""
    h = np.diff(x)
    delta = np.diff(y) / h
    n = len(x)
    if n == 2:
        return np.array([delta[0], delta[0]])
    d = np.zeros(n)
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    same = np.sign(delta[:-1]) * np.sign(delta[1:]) > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        harmonic = (w1 + w2) / (w1 / delta[:-1] + w2 / delta[1:])
    d[1:-1] = np.where(same, harmonic, 0.0)
    d[0] = _pch_end_slope(h[0], h[1], delta[0], delta[1])
    d[-1] = _pch_end_slope(h[-1], h[-2], delta[-1], delta[-2])
    return d


class PchPredictor(FittedPredictor):
    kind = "pch"

    def __init__(self, samples: SampleSet):
        if len(samples) < 2:
            raise ConfigError("PCH interpolation needs at least 2 samples")
        super().__init__(samples)
        self.slopes = pch_slopes(samples.alpha, samples.q)

    def _evaluate(self, alpha):
        x, y, d = self.samples.alpha, self.samples.q, self.slopes
        i = np.clip(np.searchsorted(x, alpha, side="right") - 1, 0, len(x) - 2)
        h = x[i + 1] - x[i]
        t = (alpha - x[i]) / h
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        return h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1]


# --------------------------------------------------------------------------
# Polynomial least squares
# --------------------------------------------------------------------------


class PolynomialPredictor(FittedPredictor):
    """Least squares on the affinely rescaled abscissae ``t in [-1, 1]``."""

    kind = "polynomial"
    max_condition = 1e14

    def __init__(self, samples: SampleSet, degree: int):
        if len(samples) <= degree:
            raise ConfigError(f"degree {degree} fit is underdetermined with {len(samples)} samples")
        super().__init__(samples)
        self.degree = degree
        lo, hi = self.bounds
        self.center = 0.5 * (lo + hi)
        self.halfwidth = 0.5 * (hi - lo) if hi > lo else 1.0
        V = np.vander(self._t(samples.alpha), degree + 1, increasing=True)
        Qm, R = np.linalg.qr(V)
        cond = np.linalg.cond(R)
        if not cond < self.max_condition:
            raise NumericalError(f"Vandermonde system severely ill-conditioned (cond {cond:.2e})")
        self.condition = float(cond)
        self.scaled_coef = scipy.linalg.solve_triangular(R, Qm.T @ samples.q)

    def _t(self, alpha):
        return (np.asarray(alpha, dtype=float) - self.center) / self.halfwidth

    @property
    def coefficients(self) -> np.ndarray:
        """Monomial coefficients ``beta_0..beta_n`` in the original variable."""
        P = np.polynomial.Polynomial
        shift = P([-self.center / self.halfwidth, 1.0 / self.halfwidth])
        beta = P(self.scaled_coef)(shift).coef
        return np.pad(beta, (0, self.degree + 1 - len(beta)))

    def _evaluate(self, alpha):
        return np.polynomial.polynomial.polyval(self._t(alpha), self.scaled_coef)


# --------------------------------------------------------------------------
# Gaussian process
# --------------------------------------------------------------------------


def se_kernel(a, b) -> np.ndarray:
    """Unit squared-exponential kernel ``exp(-(a - b)^2 / 2)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.exp(-0.5 * np.subtract.outer(a, b) ** 2)


def prior_mean(alpha):
    return 0.25 * np.asarray(alpha, dtype=float) ** 2


class GaussianProcessPredictor(FittedPredictor):
    kind = "gp"

    def __init__(self, samples: SampleSet, mode: str = "paper", nugget: float = GP_JITTER):
        if mode not in ("paper", "standard"):
            raise ConfigError(f"unknown GP mode {mode!r}")
        super().__init__(samples)
        self.mode = mode
        self.nugget = float(nugget)
        a = samples.alpha
        self.prior_cov = se_kernel(a, a) + self.nugget * np.eye(len(a))
        try:
            self.chol = scipy.linalg.cho_factor(self.prior_cov, lower=True)
        except np.linalg.LinAlgError:
            raise NumericalError(
                f"GP kernel matrix not positive definite with nugget {self.nugget:g}; "
                "use a larger nugget"
            ) from None
        if mode == "paper":
            self.weights = scipy.linalg.cho_solve(self.chol, samples.q)
        else:
            self.weights = scipy.linalg.cho_solve(self.chol, samples.q - prior_mean(a))
        self.variance_fallback = False
        self._like_chol = None
        if mode == "paper":
            like = se_kernel(samples.q, samples.q) + self.nugget * np.eye(len(a))
            try:
                self._like_chol = scipy.linalg.cho_factor(like, lower=True)
            except np.linalg.LinAlgError:
                self.variance_fallback = True

    def _evaluate(self, alpha):
        k = se_kernel(self.samples.alpha, alpha)
        if self.mode == "paper":
            return prior_mean(alpha) - k.T @ self.weights
        return prior_mean(alpha) + k.T @ self.weights

    def predict(self, alpha, extrapolate: bool = False):
        """Posterior ``(mean, variance)`` at ``alpha``."""
        self._check_range(alpha, extrapolate)
        a = np.asarray(alpha, dtype=float)
        k = se_kernel(self.samples.alpha, a)
        mean = self._evaluate(a)
        chol = self._like_chol if (self.mode == "paper" and not self.variance_fallback) else self.chol
        var = 1.0 - np.sum(k * scipy.linalg.cho_solve(chol, k), axis=0)
        var = np.where((var < 0) & (var >= -1e-12), 0.0, var)
        if np.ndim(mean) == 0:
            return float(mean), float(var)
        return mean, var


def gp_predict(fp: GaussianProcessPredictor, alpha_star: float, extrapolate: bool = False):
    return fp.predict(alpha_star, extrapolate)


def fit_pch(samples: SampleSet) -> PchPredictor:
    return PchPredictor(samples)


def fit_polynomial(samples: SampleSet, degree: int = 3) -> PolynomialPredictor:
    return PolynomialPredictor(samples, degree)


def fit_gp(samples: SampleSet, mode: str = "paper", nugget: float = GP_JITTER) -> GaussianProcessPredictor:
    return GaussianProcessPredictor(samples, mode, nugget)


def fit(samples: SampleSet, spec: PredictorSpec, default_nugget: float = GP_JITTER) -> FittedPredictor:
    if spec.kind == "pch":
        return fit_pch(samples)
    if spec.kind == "polynomial":
        return fit_polynomial(samples, spec.degree)
    nugget = spec.nugget if spec.nugget is not None else default_nugget
    return fit_gp(samples, spec.gp_mode, nugget)


def evaluate(fp: FittedPredictor, alpha_star, extrapolate: bool = False):
    return fp.evaluate(alpha_star, extrapolate)
