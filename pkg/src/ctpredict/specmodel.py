"""Spectral densities, covariance functions and the Szegő regularity test.

Frequencies ``mu`` are in cycles per unit time; the transform pair is

    r(t) = ∫ exp(2πitμ) G'(μ) dμ,

with no angular-frequency variant anywhere in the package.  A model lives on
the symmetric uniform grid ``mu_j = j * dmu``, ``|j| <= M / dmu``, and every
band quadrature is the composite trapezoid rule on that grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, TruncationError, ValidationError

TWO_PI = 2.0 * math.pi

DEFAULT_M = 64.0
DEFAULT_DMU = 1.0 / 256.0
DEFAULT_FLOOR = 1e-12
DEFAULT_THRESHOLD = -50.0
DEFAULT_SUBFLOOR_FRACTION = 0.01

_CHUNK = 256


# ---------------------------------------------------------------------------
# closed-form families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rational:
    """Sum of Ornstein-Uhlenbeck components.

    ``G'(μ) = Σ a_k² · 2 b_k / (b_k² + 4π²μ²)`` with covariance
    ``r(t) = Σ a_k² exp(-b_k |t|)``.  One component with ``a = b = 1`` is the
    unit OU process.
    """

    amplitudes: tuple[float, ...] = (1.0,)
    rates: tuple[float, ...] = (1.0,)
    name: str = "rational"

    def __post_init__(self):
        if len(self.amplitudes) != len(self.rates) or not self.rates:
            raise ConfigurationError("rational family needs matching amplitudes and rates")
        if any(b <= 0 for b in self.rates):
            raise ConfigurationError("rational family rates must be positive")

    def density(self, mu):
        w2 = (TWO_PI * np.asarray(mu, dtype=float)) ** 2
        return sum(a * a * 2.0 * b / (b * b + w2) for a, b in zip(self.amplitudes, self.rates))

    def log_density(self, mu):
        with np.errstate(divide="ignore"):
            return np.log(self.density(mu))

    def covariance(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        return sum(a * a * np.exp(-b * t) for a, b in zip(self.amplitudes, self.rates)) + 0j

    @property
    def variance(self) -> float:
        return float(sum(a * a for a in self.amplitudes))


@dataclass(frozen=True)
class BandLimited:
    """Flat density ``height`` on ``[-width/2, width/2]``, zero elsewhere.

    The edge samples take half the height so the trapezoid mass is exact when
    the edges fall on grid points.
    """

    width: float = 1.0
    height: float = 1.0
    name: str = "bandlimited"

    def density(self, mu):
        mu = np.abs(np.asarray(mu, dtype=float))
        edge = 0.5 * self.width
        return np.where(mu < edge, self.height, np.where(mu == edge, 0.5 * self.height, 0.0))

    def log_density(self, mu):
        with np.errstate(divide="ignore"):
            return np.log(self.density(mu))

    def covariance(self, t):
        t = np.asarray(t, dtype=float)
        return self.height * self.width * np.sinc(self.width * t) + 0j

    @property
    def variance(self) -> float:
        return float(self.height * self.width)


@dataclass(frozen=True)
class Gaussian:
    """``G'(μ) = amplitude · exp(-(μ/scale)²)``: regular-looking but thin-tailed."""

    amplitude: float = 1.0
    scale: float = 1.0
    name: str = "gaussian"

    def density(self, mu):
        return np.exp(self.log_density(mu))

    def log_density(self, mu):
        mu = np.asarray(mu, dtype=float)
        return math.log(self.amplitude) - (mu / self.scale) ** 2

    def covariance(self, t):
        t = np.asarray(t, dtype=float)
        s = self.scale
        return self.amplitude * s * math.sqrt(math.pi) * np.exp(-((math.pi * s * t) ** 2)) + 0j

    @property
    def variance(self) -> float:
        return float(self.amplitude * self.scale * math.sqrt(math.pi))


def _scalar(params, *names, default=None):
    for n in names:
        if n in params:
            v = params[n]
            if isinstance(v, (tuple, list)):
                if len(v) != 1:
                    raise ConfigurationError(f"parameter {n!r} takes a single value")
                v = v[0]
            return float(v)
    if default is None:
        raise ConfigurationError(f"missing parameter {names[0]!r}")
    return float(default)


def _vector(params, name, default):
    v = params.get(name, default)
    if isinstance(v, (int, float)):
        v = (v,)
    return tuple(float(x) for x in v)


def make_family(name: str, **params):
    """Build a closed-form family from its registry name and parameters."""
    key = name.lower().replace("-", "").replace("_", "")
    known = {"a", "b", "amplitude", "amplitudes", "rate", "rates", "width", "height", "scale"}
    unknown = set(params) - known
    if unknown:
        raise ConfigurationError(f"unknown family parameter(s): {', '.join(sorted(unknown))}")
    if key == "ou":
        a = _scalar(params, "a", "amplitude", default=1.0)
        b = _scalar(params, "b", "rate", default=1.0)
        return Rational((a,), (b,), name="ou")
    if key == "rational":
        amps = _vector(params, "a", params.get("amplitudes", (1.0,)))
        rates = _vector(params, "b", params.get("rates", (1.0,)))
        return Rational(amps, rates)
    if key in ("bandlimited", "band"):
        return BandLimited(_scalar(params, "width", default=1.0), _scalar(params, "height", default=1.0))
    if key == "gaussian":
        return Gaussian(_scalar(params, "amplitude", "a", default=1.0), _scalar(params, "scale", default=1.0))
    raise ConfigurationError(f"unknown density family {name!r}")


# ---------------------------------------------------------------------------
# model types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceFunction:
    """Callable ``t -> r(t)`` plus the reference variance ``r(0)``."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    r0: float

    def __call__(self, t):
        return np.asarray(self.evaluator(np.asarray(t, dtype=float)), dtype=complex)


@dataclass(frozen=True)
class RegularityReport:
    classification: str  # "Regular" | "Deterministic"
    szego_value: float  # -inf when Deterministic
    floored_value: float
    subfloor_fraction: float
    floor: float
    threshold: float
    max_subfloor_fraction: float

    @property
    def regular(self) -> bool:
        return self.classification == "Regular"

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "szego_value": self.szego_value if math.isfinite(self.szego_value) else "-inf",
            "floored_value": self.floored_value,
            "subfloor_fraction": self.subfloor_fraction,
            "floor": self.floor,
            "threshold": self.threshold,
            "max_subfloor_fraction": self.max_subfloor_fraction,
        }


@dataclass(frozen=True)
class SpectralModel:
    """A spectral density on the working band ``[-M, M]``.

    Use :meth:`closed_form` or :meth:`sampled` rather than the raw constructor.
    Outside the band a closed-form model evaluates its family; a sampled model
    continues with a power-law tail fitted to the outer band samples.
    """

    kind: str
    M: float
    dmu: float
    family: object | None = None
    samples: np.ndarray | None = field(default=None, repr=False)
    real: bool = True
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.dmu > 0 and math.isfinite(self.dmu)):
            raise ConfigurationError(f"grid spacing dmu must be positive, got {self.dmu}")
        if not (self.M > 0 and math.isfinite(self.M)):
            raise ConfigurationError(f"band cutoff M must be positive, got {self.M}")
        ratio = self.M / self.dmu
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigurationError(f"M={self.M} is not a multiple of dmu={self.dmu}")
        if self.kind not in ("closed_form", "sampled"):
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if self.kind == "closed_form" and self.family is None:
            raise ConfigurationError("closed-form model needs a family")
        vals = self.values
        if vals.shape != self.mu.shape:
            raise ValidationError(f"expected {self.mu.size} density samples, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("density samples must be finite")
        if np.any(vals < 0):
            j = int(np.argmin(vals))
            raise ValidationError(f"negative density {vals[j]:.3g} at mu={self.mu[j]:.6g}")
        if self.real and not np.allclose(vals, vals[::-1], rtol=1e-10, atol=1e-14 * max(vals.max(), 1e-300)):
            raise ValidationError("real-process mode requires G'(-mu) = G'(mu)")

    # construction -------------------------------------------------------

    @classmethod
    def closed_form(cls, family, M: float = DEFAULT_M, dmu: float = DEFAULT_DMU, real: bool = True, **params):
        if isinstance(family, str):
            family = make_family(family, **params)
        elif params:
            raise ConfigurationError("parameters are only accepted with a family name")
        return cls("closed_form", float(M), float(dmu), family=family, real=real)

    @classmethod
    def sampled(cls, mu, density, real: bool | None = None, meta: Mapping | None = None):
        mu = np.asarray(mu, dtype=float)
        g = np.asarray(density, dtype=float)
        if mu.ndim != 1 or mu.size < 3 or g.shape != mu.shape:
            raise ConfigurationError("sampled density needs matching 1-d mu and density arrays (>= 3 points)")
        d = np.diff(mu)
        dmu = float(np.mean(d))
        if dmu <= 0 or np.max(np.abs(d - dmu)) > 1e-6 * dmu:
            raise ConfigurationError("density grid must be uniform and increasing")
        if abs(mu[0] + mu[-1]) > 1e-6 * dmu or mu.size % 2 == 0:
            raise ConfigurationError("density grid must be symmetric about 0")
        K = mu.size // 2
        if real is None:
            real = bool(np.allclose(g, g[::-1], rtol=1e-10, atol=1e-300))
        return cls("sampled", K * dmu, dmu, samples=g, real=real, meta=dict(meta or {}))

    def with_grid(self, M: float | None = None, dmu: float | None = None) -> "SpectralModel":
        if self.kind != "closed_form":
            raise ConfigurationError("only closed-form models can be re-gridded")
        return replace(self, M=float(M or self.M), dmu=float(dmu or self.dmu))

    def scaled(self, k: float) -> "SpectralModel":
        """Model of ``k · G'`` on the same grid."""
        if k <= 0:
            raise ValidationError("scale factor must be positive")
        return SpectralModel.sampled(self.mu, k * self.values, real=self.real) if self.kind == "sampled" else replace(
            self, family=_Scaled(self.family, float(k))
        )

    # grid ---------------------------------------------------------------

    @property
    def K(self) -> int:
        return int(round(self.M / self.dmu))

    @cached_property
    def mu(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1) * self.dmu

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.mu.size, self.dmu)
        w[0] = w[-1] = 0.5 * self.dmu
        return w

    @cached_property
    def values(self) -> np.ndarray:
        if self.kind == "sampled":
            return np.asarray(self.samples, dtype=float)
        return np.asarray(self.family.density(self.mu), dtype=float)

    @cached_property
    def _weighted(self) -> np.ndarray:
        return self.weights * self.values

    @property
    def grid_mass(self) -> float:
        """Trapezoid mass on the band; identical to ``covariance_from_density(model, 0)``."""
        return float(_band_transform(self, np.zeros(1)).real[0])

    # evaluation off the grid ---------------------------------------------

    def log_density(self, mu, floor: float = 0.0) -> np.ndarray:
        """log G' anywhere on the line, clamped below at ``log(floor)``."""
        mu = np.asarray(mu, dtype=float)
        if self.kind == "closed_form":
            out = np.asarray(self.family.log_density(mu), dtype=float)
        else:
            out = self._sampled_log_density(mu)
        if floor > 0:
            out = np.maximum(out, math.log(floor))
        return out

    def density(self, mu) -> np.ndarray:
        return np.exp(self.log_density(mu))

    def _sampled_log_density(self, mu):
        with np.errstate(divide="ignore"):
            inside = np.interp(mu, self.mu, self.values)
            out = np.log(inside)
        hi = mu > self.M
        lo = mu < -self.M
        if np.any(hi):
            out[hi] = self._tail(+1, mu[hi])
        if np.any(lo):
            out[lo] = self._tail(-1, mu[lo])
        return out

    @cached_property
    def _tail_fits(self) -> dict:
        return {side: _fit_tail(self.mu, self.values, side) for side in (+1, -1)}

    def _tail(self, side, mu):
        coef = self._tail_fits[side]
        if coef is None:
            return np.full(mu.shape, -np.inf)
        x = np.abs(mu)
        return coef[0] + coef[1] * np.log(x) + coef[2] / mu + coef[3] / x**2

    def tail_mass(self) -> float:
        """Mass of the continued density outside the band."""
        return sum(_tail_integral(lambda x, s=side: self.density(s * x), self.M) for side in (+1, -1))

    @cached_property
    def total_mass(self) -> float:
        """r(0) on the whole line: band trapezoid plus continued tails."""
        return self.grid_mass + self.tail_mass()

    def covariance(self, exact: bool = True) -> CovarianceFunction:
        """Covariance of this model; closed-form families use their own r(t)."""
        if exact and self.kind == "closed_form" and hasattr(self.family, "covariance"):
            fam = self.family
            return CovarianceFunction(fam.covariance, float(fam.covariance(np.zeros(1)).real[0]))
        return CovarianceFunction(lambda t: covariance_from_density(self, t), self.grid_mass)


@dataclass(frozen=True)
class _Scaled:
    base: object
    k: float

    @property
    def name(self):
        return getattr(self.base, "name", "scaled")

    def density(self, mu):
        return self.k * self.base.density(mu)

    def log_density(self, mu):
        return math.log(self.k) + self.base.log_density(mu)

    def covariance(self, t):
        return self.k * self.base.covariance(t)

    @property
    def variance(self):
        return self.k * self.base.variance


def _tail_integral(f, M):
    # ∫_M^∞ f(x) dx with x = M·exp(v): algebraic tails become exponential in v
    def g(v):
        x = M * math.exp(v)
        return float(np.asarray(f(np.array([x])))[0]) * x

    val, _ = integrate.quad(g, 0.0, 200.0, limit=400, epsabs=1e-15, epsrel=1e-11)
    return val


def _fit_tail(mu, g, side):
    # log G' ≈ α + β log|μ| + γ/μ + δ/μ² on the outer samples of one side of the band
    K = mu.size // 2
    n = max(16, K // 64)
    sl = slice(mu.size - n, mu.size) if side > 0 else slice(0, n)
    x = np.abs(mu[sl])
    y = g[sl]
    ok = (y > 0) & (x > 0)
    if ok.sum() < 5:
        return None
    m = mu[sl][ok]
    A = np.column_stack([np.ones(m.size), np.log(x[ok]), 1.0 / m, 1.0 / m**2])
    coef, *_ = np.linalg.lstsq(A, np.log(y[ok]), rcond=None)
    if coef[1] >= -1.0:
        # non-integrable continuation: treat the outside as empty
        return None
    return coef


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def _band_transform(model: SpectralModel, t: np.ndarray) -> np.ndarray:
    wg = model._weighted
    mu = model.mu
    out = np.empty(t.shape, dtype=complex)
    flat_t = t.ravel()
    flat = out.ravel()
    for i in range(0, flat_t.size, _CHUNK):
        ph = np.multiply.outer(TWO_PI * flat_t[i : i + _CHUNK], mu)
        flat[i : i + _CHUNK] = np.cos(ph) @ wg + 1j * (np.sin(ph) @ wg)
    return flat.reshape(t.shape)


def covariance_from_density(model: SpectralModel, t):
    """Trapezoid approximation of ``∫_{-M}^{M} exp(2πitμ) G'(μ) dμ``.

    Scalar ``t`` gives a complex scalar, arrays give arrays.  The cosine and
    sine sums are formed separately, so ``r(-t)`` is the exact conjugate of
    ``r(t)``.
    """
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("covariance lag must be finite")
    out = _band_transform(model, np.atleast_1d(arr))
    return complex(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def szego_integral(
    model: SpectralModel,
    floor: float = DEFAULT_FLOOR,
    threshold: float = DEFAULT_THRESHOLD,
    max_subfloor_fraction: float = DEFAULT_SUBFLOOR_FRACTION,
) -> RegularityReport:
    """Band value of ``∫ log G'(μ) / (1 + μ²) dμ`` and the regular/deterministic call.

    ``log G'`` is clamped at ``log(floor)``.  The process is called
    Deterministic when the clamped integral drops below ``threshold`` or when
    more than ``max_subfloor_fraction`` of the band sits under the floor.
    """
    if floor <= 0:
        raise ConfigurationError("density floor must be positive")
    mu = model.mu
    logg = model.log_density(mu)
    below = logg < math.log(floor)
    floored = np.maximum(logg, math.log(floor))
    value = float(np.sum(model.weights * floored / (1.0 + mu**2)))
    frac = float(np.sum(model.weights[below]) / (2.0 * model.M))
    regular = value >= threshold and frac <= max_subfloor_fraction
    return RegularityReport(
        classification="Regular" if regular else "Deterministic",
        szego_value=value if regular else -math.inf,
        floored_value=value,
        subfloor_fraction=frac,
        floor=floor,
        threshold=threshold,
        max_subfloor_fraction=max_subfloor_fraction,
    )


def szego_trajectory(model: SpectralModel, levels) -> list[float]:
    """Clamped Szegő integral along a sequence of ``(M, floor)`` refinements.

    A regular density settles down; a deterministic one keeps falling.
    """
    out = []
    for M, floor in levels:
        m = model.with_grid(M=M) if model.kind == "closed_form" else model
        out.append(szego_integral(m, floor=floor).floored_value)
    return out


def poisson_log_integral(model: SpectralModel, floor: float = DEFAULT_FLOOR) -> float:
    """Whole-line ``∫ log G'(μ) / (1 + μ²) dμ``: band trapezoid plus tail quadrature."""
    mu = model.mu
    band = float(np.sum(model.weights * model.log_density(mu, floor) / (1.0 + mu**2)))
    # the floor guards the band classification; beyond the band the continued
    # density is used as is unless it vanishes outright
    tails = 0.0
    for side in (+1, -1):
        t = _tail_integral(lambda x, s=side: model.log_density(s * x) / (1.0 + x * x), model.M)
        if not math.isfinite(t):
            t = _tail_integral(lambda x, s=side: model.log_density(s * x, floor) / (1.0 + x * x), model.M)
        tails += t
    return band + tails


def density_from_covariance(
    r: CovarianceFunction,
    M: float,
    dmu: float,
    *,
    window: float = 50.0,
    dt: float = 0.01,
    decay_tol: float = 1e-3,
) -> SpectralModel:
    """Invert ``r`` onto the grid ``[-M, M]`` by trapezoid quadrature over ``[-window, window]``.

    Negative ripple is clamped to zero; its largest magnitude is kept in
    ``model.meta["clamp"]`` and the decay diagnostic in ``meta["tail_ratio"]``.
    """
    if dt <= 0 or window <= 0:
        raise ConfigurationError("window and dt must be positive")
    n = int(round(window / dt))
    t = np.arange(-n, n + 1) * dt
    rt = r(t)
    r0 = abs(complex(r(np.zeros(1))[0]))
    edge = np.abs(t) >= 0.95 * window
    tail = float(np.max(np.abs(rt[edge]))) if r0 > 0 else 0.0
    ratio = tail / r0 if r0 > 0 else 0.0
    if ratio > decay_tol:
        raise TruncationError(
            f"covariance has not decayed within |t| <= {window}: tail |r|/r(0) = {ratio:.3g} > {decay_tol:g}",
            tail_ratio=ratio,
            window=window,
        )
    w = np.full(t.size, dt)
    w[0] = w[-1] = 0.5 * dt
    K = int(round(M / dmu))
    mu = np.arange(-K, K + 1) * dmu
    wr = w * rt
    g = np.empty(mu.size)
    for i in range(0, mu.size, _CHUNK):
        ph = np.multiply.outer(TWO_PI * mu[i : i + _CHUNK], t)
        # exp(-2πiμt): real part of the transform of a Hermitian r
        g[i : i + _CHUNK] = np.cos(ph) @ wr.real + np.sin(ph) @ wr.imag
    clamp = float(max(0.0, -g.min()))
    g = np.maximum(g, 0.0)
    real = bool(np.max(np.abs(rt.imag)) <= 1e-12 * max(r0, 1e-300))
    if real:
        g = 0.5 * (g + g[::-1])
    return SpectralModel.sampled(mu, g, real=real, meta={"clamp": clamp, "tail_ratio": ratio})
