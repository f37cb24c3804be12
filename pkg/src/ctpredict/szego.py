"""Outer spectral factor ``c(μ)`` and its anticausal kernel ``c*(s)``.

The factor satisfies ``|c(μ)|² = G'(μ)`` and

    c(μ) = ∫_{-∞}^{0} exp(2πiμs) c*(s) ds,

so ``c`` extends analytically into the lower half-plane ``Im μ < 0``.

Phase construction
------------------
The line is mapped onto the circle by ``μ = a·tan(θ/2)``.  There the
harmonic conjugate of ``½ log G'`` is one FFT away: keep the mean, drop one
half of the spectrum and double the other.  Working on the circle instead of
the truncated band keeps the slowly decaying part of ``log G'`` at large
``|μ|`` in the computation, which is what makes the phase accurate to
``O(Δμ²)``.  The factor ``(1 + (μ/a)²)`` is divided out beforehand so that
the circle function is bounded, and its own outer factor ``1/(1 + iμ/a)`` is
multiplied back in closed form.

Kernel construction
-------------------
An anticausal kernel with ``c*(0-) = J ≠ 0`` has ``c(μ) ≈ J/(2πiμ)`` at high
frequency, which a truncated inverse FFT turns into Gibbs ringing.  The
kernel is therefore built as ``J·exp(βs)·1{s≤0}`` in closed form plus the FFT
of the smooth remainder ``c(μ) − J/(β + 2πiμ)``.  ``J`` and ``β`` come from
Richardson-extrapolated high-frequency asymptotics of ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import FactorizationError, RegularityError
from .specmodel import (
    DEFAULT_FLOOR,
    TWO_PI,
    SpectralModel,
    poisson_log_integral,
    szego_integral,
)

DEFAULT_H = 1.0 / 256.0
DEFAULT_L = 40.0
TOL_FACTOR = 1e-10
TOL_SUPPORT = 1e-6
TOL_PLANCHEREL = 1e-6
TOL_TAIL = 1e-6
TOL_TRUNCATION = 1e-8


@dataclass(frozen=True)
class SzegoFactor:
    """Outer factor sampled on the frequency grid and on the time grid ``[-L, 0]``.

    Attributes
    ----------
    mu, c_freq : ndarray
        Frequency grid of the source model and ``c(μ_j)``.
    h, L : float
        Time step and kernel extent.
    s, c_time : ndarray
        Nodes ``s_k = -L, ..., -h, 0`` and ``c*(s_k)``; the value at ``s = 0``
        is the left limit ``c*(0-)``.
    c_time_pos : ndarray
        What the inverse transform put on ``s = h, ..., L``.  Ideally zero;
        kept so the support contract can be re-verified.
    leak_energy : float
        ``Σ_{s>0} |c*|² h`` as a fraction of the whole-line discrete energy.
    log_integral : float
        ``(1/2π) ∫ log G'(μ)/(1 + μ²) dμ`` over the whole line.
    total_mass : float
        ``r(0)`` of the source model, band plus tails.
    """

    mu: np.ndarray = field(repr=False)
    c_freq: np.ndarray = field(repr=False)
    h: float
    L: float
    s: np.ndarray = field(repr=False)
    c_time: np.ndarray = field(repr=False)
    c_time_pos: np.ndarray = field(repr=False)
    leak_energy: float
    log_integral: float
    total_mass: float
    flipped: bool = False
    evaluator: Callable | None = field(default=None, repr=False, compare=False)
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dmu(self) -> float:
        return float(self.mu[1] - self.mu[0])

    @property
    def n(self) -> int:
        return self.s.size - 1

    def c(self, mu) -> np.ndarray:
        """``c(μ)`` off the grid (needs the evaluator kept by :func:`factorize`)."""
        if self.evaluator is None:
            raise FactorizationError("factor carries no frequency evaluator")
        return self.evaluator(np.atleast_1d(np.asarray(mu, dtype=float)))

    # time-domain quadrature -------------------------------------------

    @cached_property
    def _power(self) -> CubicSpline:
        return CubicSpline(self.s, np.abs(self.c_time) ** 2)

    @cached_property
    def _kernel_spline(self) -> CubicSpline:
        return CubicSpline(self.s, self.c_time)

    def energy(self, a: float = -math.inf, b: float = 0.0) -> float:
        """``∫_a^b |c*(s)|² ds`` with ``a, b`` clipped to ``[-L, 0]``."""
        a = min(max(a, -self.L), 0.0)
        b = min(max(b, -self.L), 0.0)
        if b <= a:
            return 0.0
        return float(self._power.integrate(a, b))

    def kernel(self, s) -> np.ndarray:
        """``c*(s)``; zero for ``s > 0`` and ``s < -L``."""
        s = np.asarray(s, dtype=float)
        out = np.where((s <= 0) & (s >= -self.L), self._kernel_spline(np.clip(s, -self.L, 0.0)), 0.0)
        return out.astype(complex)

    def taps(self, h: float | None = None, length: float | None = None) -> np.ndarray:
        """Cell averages ``g_j = (1/h) ∫_{-(j+1)h}^{-jh} c*``, ``j = 0, 1, ...``.

        These are the weights of the discrete moving average driven by
        increments of variance ``h``.  ``length`` limits the support (default
        ``L``).
        """
        h = self.h if h is None else float(h)
        length = self.L if length is None else min(float(length), self.L)
        n = int(math.ceil(length / h - 1e-9))
        edges = -np.arange(n + 1) * h
        edges = np.maximum(edges, -self.L)
        anti = self._kernel_spline.antiderivative()
        vals = anti(edges)
        return (vals[:-1] - vals[1:]) / h

    def effective_support(self, eps: float = 1e-8) -> float:
        """Smallest ``S`` with ``∫_{-S}^{0}|c*|² ≥ (1 - eps) · ∫_{-L}^{0}|c*|²``."""
        anti = self._power.antiderivative()
        cum = anti(0.0) - anti(self.s[::-1])  # energy on [s, 0] for s = 0, -h, ...
        total = cum[-1]
        if total <= 0:
            return 0.0
        k = int(np.searchsorted(cum, (1.0 - eps) * total))
        return float(min(k, self.n) * self.h)

    def rotated(self, theta: float) -> "SzegoFactor":
        """The same factor times the unimodular constant ``exp(iθ)``."""
        u = complex(np.exp(1j * theta))
        ev = None if self.evaluator is None else (lambda m, f=self.evaluator: u * f(m))
        return replace(
            self,
            c_freq=u * self.c_freq,
            c_time=u * self.c_time,
            c_time_pos=u * self.c_time_pos,
            evaluator=ev,
            diagnostics={**self.diagnostics, "gauge_rotation": float(theta)},
        )

    def freq_csv_rows(self):
        return np.column_stack([self.mu, self.c_freq.real, self.c_freq.imag])

    def time_csv_rows(self):
        return np.column_stack([self.s, self.c_time.real, self.c_time.imag])


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _half_power_scale(model: SpectralModel) -> float:
    mu = model.mu
    g = model.values
    j0 = mu.size // 2
    g0 = g[j0]
    if not g0 > 0:
        return 1.0
    right = np.nonzero(g[j0:] <= 0.5 * g0)[0]
    left = np.nonzero(g[: j0 + 1][::-1] <= 0.5 * g0)[0]
    cands = [mu[j0 + right[0]]] if right.size else []
    if left.size:
        cands.append(-mu[j0 - left[0]])
    a = min(cands) if cands else 0.0
    return float(a) if a > 0 else 1.0


def _log_extension(model: SpectralModel, floor: float):
    """log G' on the whole line: cubic spline of the band samples, model tails outside."""
    spline = CubicSpline(model.mu, model.log_density(model.mu, floor))
    M = model.M

    def ext(m):
        m = np.asarray(m, dtype=float)
        out = np.empty(m.shape)
        inside = np.abs(m) <= M
        out[inside] = spline(m[inside])
        if not inside.all():
            out[~inside] = model.log_density(m[~inside], floor)
        return out

    return ext


def _phase_on_circle(ext, M: float, dmu: float, a: float):
    N = 1 << int(math.ceil(math.log2(4.0 * M / dmu)))
    theta = -math.pi + TWO_PI * (np.arange(N) + 0.5) / N
    m = a * np.tan(theta / 2.0)
    ell = 0.5 * ext(m) + 0.5 * np.log1p((m / a) ** 2)
    mask = np.zeros(N)
    mask[0] = mask[N // 2] = 1.0
    mask[N // 2 + 1 :] = 2.0
    phi = np.fft.ifft(np.fft.fft(ell) * mask).imag
    spline = CubicSpline(np.append(theta, theta[0] + TWO_PI), np.append(phi, phi[0]), bc_type="periodic")
    return spline, N


def _make_evaluator(ext, phase, a: float, sign: float):
    def c_of(m):
        m = np.asarray(m, dtype=float)
        arg = np.arctan(m / a)
        return np.exp(0.5 * ext(m) + 1j * sign * (phase(2.0 * arg) - arg))

    return c_of


def _gauge_point(model: SpectralModel, floor: float) -> float:
    ok = np.nonzero(model.values > floor)[0]
    if ok.size == 0:
        return 0.0
    return float(model.mu[ok[np.argmin(np.abs(model.mu[ok]))]])


def _plain_leak(c_of, h: float, Nt: int, n: int) -> float:
    d = 1.0 / (Nt * h)
    mu = np.arange(-Nt // 2, Nt // 2) * d
    vals = d * np.fft.fft(np.fft.ifftshift(c_of(mu)))
    k = np.arange(-n, n + 1)
    v = np.abs(vals[k % Nt]) ** 2
    tot = v.sum()
    return float(v[n + 1 :].sum() / tot) if tot > 0 else 0.0


def _richardson(fn, lam):
    return (4.0 * fn(2.0 * lam) - fn(lam)) / 3.0


def _jump(c_of, h: float, a: float, M: float):
    """``c*(0-)`` and the (complex) rate of the leading exponential, from high-frequency asymptotics."""
    lam = min(2.0 / h, M / 4.0)

    def j_at(x):
        m = np.array([x, -x])
        return np.mean(TWO_PI * 1j * m * c_of(m))

    J = complex(_richardson(j_at, lam))
    scale = float(np.max(np.abs(c_of(np.array([0.0, lam, -lam])) * np.array([1.0, TWO_PI * lam, TWO_PI * lam]))))
    if not np.isfinite(J) or abs(J) <= 1e-10 * max(scale, 1e-300):
        return 0.0j, complex(TWO_PI * a)

    def jp_at(x):
        m = np.array([x, -x])
        w = TWO_PI * 1j * m
        return np.mean(-(w**2) * (c_of(m) - J / w))

    Jp = complex(_richardson(jp_at, lam))
    beta = Jp / J
    # complex rate: a density centred off zero gives an oscillating leading term
    lo, hi = 1e-3 * TWO_PI * a, 10.0 / h
    if not np.isfinite(beta) or beta.real <= 0:
        beta = complex(TWO_PI * a)
    return J, complex(min(max(beta.real, lo), hi), beta.imag)


def factorize(
    model: SpectralModel,
    h: float = DEFAULT_H,
    L: float = DEFAULT_L,
    *,
    floor: float = DEFAULT_FLOOR,
    tol_support: float = TOL_SUPPORT,
    scale: float | None = None,
    regularity: dict | None = None,
) -> SzegoFactor:
    """Outer factor of ``model`` with kernel on ``[-L, 0]`` at step ``h``.

    Parameters
    ----------
    model : SpectralModel
        Must pass :func:`szego_integral`.
    h, L : float
        Time grid; ``L/h`` is rounded to an integer.
    floor : float
        Density floor used for ``log G'``.
    tol_support : float
        Largest acceptable leak fraction onto ``s > 0``.
    scale : float, optional
        Circle-map scale ``a``; default is the half-power frequency of ``G'``.
    regularity : dict, optional
        Extra keyword arguments for :func:`szego_integral`.

    Raises
    ------
    RegularityError
        ``model`` is Deterministic.
    FactorizationError
        Neither phase orientation gives an anticausal kernel.
    """
    if not (h > 0 and L > 0):
        from .errors import ConfigurationError

        raise ConfigurationError("time grid needs h > 0 and L > 0")
    report = szego_integral(model, floor=floor, **(regularity or {}))
    if not report.regular:
        raise RegularityError(
            "Deterministic: density fails the Szegő condition: "
            f"floored integral {report.floored_value:.6g}, sub-floor fraction {report.subfloor_fraction:.3g}",
            **report.to_dict(),
        )
    a = float(scale) if scale else _half_power_scale(model)
    ext = _log_extension(model, floor)
    phase, n_circle = _phase_on_circle(ext, model.M, model.dmu, a)

    n = int(round(L / h))
    L = n * h
    Nt = 1 << int(math.ceil(math.log2(4 * n)))

    candidates = {}
    for sign in (+1.0, -1.0):
        raw = _make_evaluator(ext, phase, a, sign)
        mu_g = _gauge_point(model, floor)
        g = np.exp(-1j * np.angle(raw(np.array([mu_g]))[0]))
        c_of = lambda m, raw=raw, g=g: g * raw(m)
        candidates[sign] = (c_of, _plain_leak(c_of, h, Nt, n))
    sign = +1.0 if candidates[+1.0][1] <= candidates[-1.0][1] else -1.0
    c_of = candidates[sign][0]
    plain = {("plus" if k > 0 else "minus"): v[1] for k, v in candidates.items()}

    J, beta = _jump(c_of, h, a, model.M)
    d = 1.0 / (Nt * h)
    mu_t = np.arange(-Nt // 2, Nt // 2) * d
    rem = c_of(mu_t) - J / (beta + TWO_PI * 1j * mu_t)
    vals = d * np.fft.fft(np.fft.ifftshift(rem))
    k = np.arange(-Nt // 2, Nt // 2)
    s_all = k * h
    cs = vals[k % Nt]
    neg = s_all <= 0
    cs[neg] = cs[neg] + J * np.exp(beta * s_all[neg])

    keep = (k >= -n) & (k <= 0)
    pos = (k >= 1) & (k <= n)
    far = k < -n
    p = np.abs(cs) ** 2 * h
    total_disc = float(p[keep].sum() + p[pos].sum() + p[far].sum())
    leak = float(p[k >= 1].sum() / total_disc) if total_disc > 0 else 0.0
    if leak > tol_support:
        raise FactorizationError(
            f"kernel leaks {leak:.3g} of its energy onto s > 0 (tolerance {tol_support:g})",
            leak_energy=leak,
            plain_leak=plain,
        )
    truncated = float(p[far].sum() / total_disc) if total_disc > 0 else 0.0

    s = s_all[keep]
    c_time = cs[keep]
    c_freq = c_of(model.mu)
    log_int = poisson_log_integral(model, floor) / TWO_PI
    diag = {
        "scale": a,
        "circle_points": n_circle,
        "fft_points": Nt,
        "orientation": "plus" if sign > 0 else "minus",
        "plain_leak": plain,
        "jump": [J.real, J.imag],
        "jump_rate": [beta.real, beta.imag],
        "truncated_energy": truncated,
        "szego_value": report.szego_value,
        "floor": floor,
    }
    return SzegoFactor(
        mu=model.mu,
        c_freq=c_freq,
        h=h,
        L=L,
        s=s,
        c_time=c_time,
        c_time_pos=cs[pos],
        leak_energy=leak,
        log_integral=float(log_int),
        total_mass=float(model.total_mass),
        flipped=sign < 0,
        evaluator=c_of,
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def log_integral_sides(factor: SzegoFactor, model: SpectralModel | None = None, floor: float = DEFAULT_FLOOR):
    """Both sides of the outer-function log identity.

    The left side is ``log|c(-i)| = log|∫ c*(s) exp(2πs) ds|``: the factor at
    the lower half-plane point ``μ = -i``, where ``Re log c`` is the Poisson
    average of ``½ log G'`` with kernel ``(1/π)/(1 + μ²)``.  The right side is
    ``(1/2π) ∫ log G'(μ)/(1 + μ²) dμ`` over the whole line.
    """
    weight = np.exp(TWO_PI * factor.s)
    lhs_val = complex(CubicSpline(factor.s, factor.c_time * weight).integrate(-factor.L, 0.0))
    lhs = math.log(abs(lhs_val)) if lhs_val != 0 else -math.inf
    rhs = factor.log_integral if model is None else poisson_log_integral(model, floor) / TWO_PI
    return lhs, rhs


def log_integral_check(factor: SzegoFactor, model: SpectralModel | None = None, floor: float = DEFAULT_FLOOR) -> float:
    """``|lhs - rhs|`` for :func:`log_integral_sides`."""
    lhs, rhs = log_integral_sides(factor, model, floor)
    return abs(lhs - rhs)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self):
        return {"value": self.value, "tolerance": self.tolerance, "passed": self.passed}


@dataclass(frozen=True)
class FactorDiagnostics:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = {c.name: c.to_dict() for c in self.checks}
        out["passed"] = self.passed
        # flat aliases for report consumers
        out["leak_energy"] = self["support"].value
        out["plancherel_gap"] = self["plancherel"].value
        out["log_integral_gap"] = self["log_integral"].value
        return out


def verify_factor(
    factor: SzegoFactor,
    model: SpectralModel,
    *,
    tol_factor: float = TOL_FACTOR,
    tol_support: float = TOL_SUPPORT,
    tol_plancherel: float = TOL_PLANCHEREL,
    tol_tail: float = TOL_TAIL,
    tol_log: float = 1e-3,
) -> FactorDiagnostics:
    """Recompute every factor invariant from the stored arrays.

    Nothing is taken on trust from the factor's summary fields: leak and
    energy are recomputed from ``c_time`` and ``c_time_pos``, so a tampered
    factor fails the relevant check.
    """
    g = model.values
    mod = float(np.max(np.abs(np.abs(factor.c_freq) ** 2 - g)) / max(float(g.max()), 1e-300))

    pos = float(np.sum(np.abs(factor.c_time_pos) ** 2) * factor.h)
    neg = float(np.sum(np.abs(factor.c_time) ** 2) * factor.h)
    leak = pos / (pos + neg) if pos + neg > 0 else 0.0

    mass = float(model.total_mass)
    energy = factor.energy(-factor.L, 0.0)
    plan = abs(energy - mass) / mass if mass > 0 else abs(energy)

    peak = float(np.max(np.abs(factor.c_time))) if factor.c_time.size else 0.0
    tail = float(np.abs(factor.c_time[0]) / peak) if peak > 0 else 0.0

    trunc = float(factor.diagnostics.get("truncated_energy", 0.0))
    log_gap = log_integral_check(factor, model, floor=float(factor.diagnostics.get("floor", DEFAULT_FLOOR)))
    checks = (
        Check("modulus", mod, tol_factor, mod <= tol_factor),
        Check("support", leak, tol_support, leak <= tol_support),
        Check("plancherel", plan, tol_plancherel, plan <= tol_plancherel),
        Check("tail_decay", tail, tol_tail, tail <= tol_tail),
        Check("truncation", trunc, TOL_TRUNCATION, trunc <= TOL_TRUNCATION),
        Check("log_integral", log_gap, tol_log, bool(log_gap <= tol_log)),
    )
    return FactorDiagnostics(checks)
