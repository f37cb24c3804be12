"""Least-squares predictors built on the outer factor.

With ``X(t) = ∫_{-∞}^{t} c*(u - t) dξ(u)`` the best predictor of ``X(t)``
from the innovations before ``t - τ`` keeps the part of the integral with
``u ≤ t - τ``; its error variance is ``∫_{-τ}^{0} |c*(s)|² ds``.  The
finite-section predictor keeps only ``u ∈ [t - τ - 2T, t - τ]`` and pays the
extra far tail ``∫_{-∞}^{-2T-τ} |c*(s)|² ds``.

Discrete convention
-------------------
On a grid of step ``h`` the moving average is ``X_k = Σ_j g_j e_{k-j}`` with
``g_j`` the cell averages of ``c*`` over ``[-(j+1)h, -jh]`` and ``e_k`` the
innovation increment over ``[t_{k-1}, t_k)`` (variance ``h``).  A lag ``τ``
that is a multiple of ``h`` corresponds to ``m = τ/h`` taps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import czt

from .errors import (
    ConfigurationError,
    DegenerateDensityError,
    DomainError,
    InsufficientDataError,
    WindowError,
)
from .specmodel import TWO_PI
from .szego import SzegoFactor

PSI_MASK = 1e-8
KERNEL_EPS = 1e-12
DEFAULT_MARGIN_FACTOR = 4.0


@dataclass(frozen=True)
class PredictorSpec:
    """Lag ``tau`` and, for a finite section, the half-length ``T``."""

    tau: float
    T: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise DomainError(f"lag tau must be positive, got {self.tau}")
        if self.T is not None and not (math.isfinite(self.T) and self.T > 0):
            raise DomainError(f"half-length T must be positive, got {self.T}")

    @property
    def whole_past(self) -> bool:
        return self.T is None

    @property
    def window(self) -> str:
        return "WholePast" if self.T is None else "FiniteSection"


@dataclass(frozen=True)
class PsiSamples:
    """Prediction function on the frequency grid.

    ``values`` holds NaN at masked frequencies; ``mask`` is True where the
    sample is valid.
    """

    mu: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    masked_fraction: float
    residual_gap: float
    kit_sigma2: float

    def csv_rows(self):
        v = np.where(self.mask, self.values, np.nan)
        return np.column_stack([self.mu, v.real, v.imag, self.mask.astype(float)])


@dataclass(frozen=True)
class PredictionReport:
    """Predictor kernel, error variance and optional prediction function.

    Attributes
    ----------
    kernel_s, kernel : ndarray
        ``c*(s)`` on the predicting window, ``s ≤ -τ`` (whole past, truncated
        where the remaining energy is below 1e-12 of the total) or
        ``s ∈ [-τ - 2T, -τ]`` (finite section).
    taps : ndarray or None
        Discrete weights ``g_j`` for ``j = lag_steps, lag_steps + 1, ...``;
        None when ``τ`` (or ``2T``) is not a multiple of ``h``.
    """

    spec: PredictorSpec
    sigma2: float
    h: float
    kernel_s: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)
    taps: np.ndarray | None = field(default=None, repr=False)
    lag_steps: int | None = None
    r0: float = float("nan")
    psi: PsiSamples | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def tau(self) -> float:
        return self.spec.tau

    @property
    def T(self) -> float | None:
        return self.spec.T

    def to_dict(self) -> dict:
        out = {"tau": self.tau, "sigma2": self.sigma2, "window": self.spec.window}
        if self.T is not None:
            out["T"] = self.T
        if self.psi is not None:
            out["masked_fraction"] = self.psi.masked_fraction
            out["kit_sigma2"] = self.psi.kit_sigma2
            out["psi_residual_gap"] = self.psi.residual_gap
        out.update(self.diagnostics)
        return out


@dataclass(frozen=True)
class InnovationSeries:
    """Innovation increments ``e_k = ξ(t_k) - ξ(t_{k-1})`` on a uniform grid."""

    h: float
    times: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    start_index: int = 0
    source: dict = field(default_factory=dict)

    def __len__(self):
        return self.increments.size

    @property
    def variance_ratio(self) -> float:
        """Sample mean of ``|e_k|²`` divided by ``h``; close to 1 for true innovations."""
        if self.increments.size == 0:
            return float("nan")
        return float(np.mean(np.abs(self.increments) ** 2) / self.h)


def _steps(x: float, h: float) -> int | None:
    k = round(x / h)
    return int(k) if abs(x / h - k) <= 1e-9 * max(1.0, abs(x / h)) else None


def _check_sigma2(value: float, r0: float, what: str) -> float:
    if value < 0 or value > r0 * (1 + 1e-6) + 1e-12:
        raise DomainError(f"{what} {value:.6g} outside [0, r(0)={r0:.6g}]")
    return value


def predict_whole_past(factor: SzegoFactor, tau: float, *, psi: bool = False) -> PredictionReport:
    """Whole-past predictor at lag ``tau`` and ``σ²(τ) = ∫_{-τ}^{0} |c*|²``."""
    spec = PredictorSpec(float(tau))
    tau = spec.tau
    r0 = factor.energy(-factor.L, 0.0)
    sigma2 = _check_sigma2(factor.energy(-tau, 0.0), r0 * (1 + 1e-9), "error variance")

    support = max(factor.effective_support(KERNEL_EPS), tau + factor.h)
    support = min(support, factor.L)
    sel = (factor.s <= -tau + 1e-12 * factor.h) & (factor.s >= -support - 1e-12)
    m = _steps(tau, factor.h)
    taps = None
    if m is not None:
        all_taps = factor.taps(length=support)
        taps = all_taps[m:]
    psi_samples = prediction_function(factor, tau) if psi else None
    return PredictionReport(
        spec=spec,
        sigma2=sigma2,
        h=factor.h,
        kernel_s=factor.s[sel],
        kernel=factor.c_time[sel],
        taps=taps,
        lag_steps=m,
        r0=r0,
        psi=psi_samples,
        diagnostics={"kernel_support": support, "dropped_energy": factor.energy(-factor.L, -support)},
    )


def predict_finite_section(factor: SzegoFactor, tau: float, T: float, *, psi: bool = False) -> PredictionReport:
    """Predictor from the innovations over a window of length ``2T`` ending ``tau`` before the target.

    ``σ²(τ, T) = ∫_{-∞}^{-2T-τ} |c*|² + ∫_{-τ}^{0} |c*|²``.
    """
    spec = PredictorSpec(float(tau), float(T))
    tau, T = spec.tau, spec.T
    r0 = factor.energy(-factor.L, 0.0)
    far = factor.energy(-factor.L, -2.0 * T - tau)
    near = factor.energy(-tau, 0.0)
    sigma2 = _check_sigma2(far + near, r0 * (1 + 1e-9), "error variance")
    lo = -tau - 2.0 * T
    eps = 1e-12 * factor.h
    sel = (factor.s <= -tau + eps) & (factor.s >= lo - eps)
    m = _steps(tau, factor.h)
    w = _steps(2.0 * T, factor.h)
    taps = None
    if m is not None and w is not None:
        all_taps = factor.taps(length=min(factor.L, tau + 2.0 * T))
        taps = all_taps[m : m + w]
    return PredictionReport(
        spec=spec,
        sigma2=sigma2,
        h=factor.h,
        kernel_s=factor.s[sel],
        kernel=factor.c_time[sel],
        taps=taps,
        lag_steps=m,
        r0=r0,
        psi=prediction_function(factor, tau) if psi else None,
        diagnostics={"far_tail": far, "near": near, "whole_past_sigma2": near},
    )


# ---------------------------------------------------------------------------
# frequency domain
# ---------------------------------------------------------------------------


def _half_hat(theta):
    # ∫_{-1}^{0} (1 + x) exp(iθx) dx
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape, dtype=complex)
    small = np.abs(theta) < 1e-3
    t = theta[small]
    out[small] = 0.5 - 1j * t / 6.0 - t * t / 24.0
    t = theta[~small]
    it = 1j * t
    j0 = (1.0 - np.exp(-it)) / it
    out[~small] = j0 + np.exp(-it) / it - j0 / it
    return out


def filon_transform(values: np.ndarray, h: float, mu: np.ndarray) -> np.ndarray:
    """``∫_{-Kh}^{0} f(u) exp(2πiμu) du`` for ``f`` piecewise linear through ``values[k] = f(-kh)``.

    The piecewise-linear rule is exact for every frequency, so the
    quadrature error is ``O(h²)`` uniformly in ``μ``.  The discrete sums are
    evaluated with a chirp-z transform on the uniform grid ``mu``.
    """
    f = np.asarray(values, dtype=complex)
    mu = np.asarray(mu, dtype=float)
    K = f.size - 1
    if K < 1:
        return np.zeros(mu.shape, dtype=complex)
    theta = TWO_PI * mu * h
    # D(μ) = Σ_k f_k exp(-2πiμkh) on the uniform grid mu
    if mu.size > 1:
        dmu = mu[1] - mu[0]
        A = np.exp(TWO_PI * 1j * mu[0] * h)
        W = np.exp(-TWO_PI * 1j * dmu * h)
        D = czt(f, m=mu.size, w=W, a=A)
    else:
        D = np.array([np.sum(f * np.exp(-TWO_PI * 1j * mu[0] * h * np.arange(K + 1)))])
    half = theta / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        S = np.where(np.abs(half) < 1e-8, 1.0, (np.sin(half) / half) ** 2)
    E_right = h * _half_hat(theta)
    E_left = h * _half_hat(-theta)
    phase_end = np.exp(-1j * theta * K)
    return h * S * D + (E_right - h * S) * f[0] + (E_left - h * S) * phase_end * f[K]


def prediction_function(factor: SzegoFactor, tau: float, mask_level: float = PSI_MASK) -> PsiSamples:
    """Wiener filter ``Ψ_τ(μ) = exp(2πiτμ) ∫_{-∞}^{-τ} exp(2πiμs) c*(s) ds / c(μ)``.

    The numerator is written as ``∫_{-∞}^{0} exp(2πiμu) c*(u - τ) du``.  The
    residual identity

        exp(2πiτμ) - Ψ_τ(μ) = exp(2πiτμ) ∫_{-τ}^{0} exp(2πiμs) c*(s) ds / c(μ)

    is evaluated independently and its sup-norm discrepancy is kept in
    ``residual_gap``.  ``kit_sigma2`` is ``∫ |exp(2πiτμ) - Ψ_τ|² G'`` over
    the band plus the closed-form tail of the jump terms, which must
    reproduce ``σ²(τ)``.
    """
    if not (math.isfinite(tau) and tau > 0):
        raise DomainError(f"lag tau must be positive, got {tau}")
    h = factor.h
    mu = factor.mu
    c = factor.c_freq
    absc = np.abs(c)
    peak = float(absc.max()) if absc.size else 0.0
    mask = (absc >= mask_level * peak) & (absc > 0)
    if not mask.any():
        raise DegenerateDensityError("every frequency sample of c is below the mask level")

    # numerator: samples of c*(-kh - τ), k = 0 .. until -L
    K = int(math.floor((factor.L - tau) / h + 1e-9))
    if K >= 1:
        num = filon_transform(factor.kernel(-np.arange(K + 1) * h - tau), h, mu)
    else:
        num = np.zeros(mu.shape, dtype=complex)
    # residual: c* on [-τ, 0]; grid aligned at 0, last cell may be partial
    Kr = max(int(math.ceil(tau / h - 1e-9)), 1)
    hr = tau / Kr
    res = filon_transform(factor.kernel(-np.arange(Kr + 1) * hr), hr, mu)

    rot = np.exp(TWO_PI * 1j * tau * mu)
    psi = np.full(mu.shape, np.nan + 0j)
    psi[mask] = num[mask] / c[mask]
    resid = np.full(mu.shape, np.nan + 0j)
    resid[mask] = rot[mask] * res[mask] / c[mask]
    gap = float(np.max(np.abs(rot[mask] - psi[mask] - resid[mask])))

    g = np.abs(c) ** 2
    w = np.full(mu.size, factor.dmu)
    w[0] = w[-1] = 0.5 * factor.dmu
    band = float(np.sum((w * g * np.abs(rot - psi) ** 2)[mask]))
    # |residual transform|² ~ (|c*(0-)|² + |c*(-τ)|²)/(2πμ)² beyond the band
    j0 = abs(complex(factor.kernel(np.array([0.0]))[0])) ** 2
    jt = abs(complex(factor.kernel(np.array([-tau]))[0])) ** 2
    M = float(mu[-1])
    tail = (j0 + jt) / (2.0 * math.pi**2 * M) if M > 0 else 0.0
    return PsiSamples(
        mu=mu,
        values=psi,
        mask=mask,
        masked_fraction=float(1.0 - mask.mean()),
        residual_gap=gap,
        kit_sigma2=band + tail,
    )


# ---------------------------------------------------------------------------
# innovations
# ---------------------------------------------------------------------------


def whiten_path(path, factor: SzegoFactor, margin_factor: float = DEFAULT_MARGIN_FACTOR, eps: float = 1e-8):
    """Recover innovation increments from a sampled path.

    The path is divided, in the DFT domain, by the transfer function of the
    discrete moving-average taps ``g_j`` (the sampled counterpart of
    ``c(μ)``).  Circular wrap-around contaminates both ends, so
    ``margin_factor`` times the kernel's effective support is discarded on
    each side.

    Returns
    -------
    InnovationSeries
        ``increments[i]`` is the increment ending at ``times[i]``; it aligns
        with path index ``start_index + i``.
    """
    h = float(path.h)
    if abs(h - factor.h) > 1e-12 * factor.h:
        raise ConfigurationError(f"path step {h} differs from factor step {factor.h}")
    x = np.asarray(path.values)
    n = x.size
    support = factor.effective_support(eps)
    taps = factor.taps(length=max(support, factor.h))
    J = taps.size
    margin = int(math.ceil(margin_factor * J))
    if n <= 2 * margin:
        raise InsufficientDataError(
            f"path of {n} samples is too short for edge margins of {margin} samples on each side",
            n_points=n,
            margin=margin,
        )
    if n < J:
        raise InsufficientDataError(f"path of {n} samples is shorter than the kernel ({J} taps)")
    real = bool(getattr(path, "real", False)) and np.isrealobj(x)
    G = np.fft.fft(taps, n)
    absG = np.abs(G)
    bad = absG < 1e-8 * absG.max()
    Gs = np.where(bad, 1.0, G)
    E = np.where(bad, 0.0, np.fft.fft(x) / Gs)
    e = np.fft.ifft(E)
    if real:
        e = e.real
    sl = slice(margin, n - margin)
    times = np.asarray(path.t)[sl]
    return InnovationSeries(
        h=h,
        times=times,
        increments=e[sl],
        start_index=margin,
        source={
            "seed": getattr(path, "seed", None),
            "method": getattr(path, "method", None),
            "n_points": n,
            "margin": margin,
            "masked_bins": int(bad.sum()),
        },
    )


def innovations_from_noise(path) -> InnovationSeries:
    """Innovation series from the generator noise stored on an MA path."""
    if getattr(path, "noise", None) is None:
        raise InsufficientDataError("path carries no stored driving noise")
    noise = np.asarray(path.noise)
    off = int(path.noise_offset)
    times = path.t[0] + (np.arange(noise.size) - off) * path.h
    return InnovationSeries(h=path.h, times=times, increments=noise, start_index=-off, source={"stored": True})


def apply_predictor(innovations: InnovationSeries, report: PredictionReport, t):
    """Predict ``X(t)`` from the innovations: ``Σ_j g_j e_{k-j}`` over the report's taps.

    ``t`` may be a scalar or an array of grid times; the increments needed
    are those ending at ``t - τ`` and earlier, over the kernel support.
    """
    if report.taps is None:
        raise ConfigurationError("report has no discrete taps (lag not a multiple of the grid step)")
    if abs(innovations.h - report.h) > 1e-12 * report.h:
        raise ConfigurationError(f"innovation step {innovations.h} differs from predictor step {report.h}")
    h = innovations.h
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    k = np.rint((t_arr - innovations.times[0]) / h).astype(np.int64)
    off = np.abs(innovations.times[0] + k * h - t_arr)
    if np.any(off > 1e-6 * h):
        raise WindowError("prediction time is not on the innovation grid")
    m = int(report.lag_steps)
    g = report.taps
    newest = k - m
    oldest = k - m - (g.size - 1)
    n = innovations.increments.size
    if np.any(oldest < 0) or np.any(newest > n - 1):
        lo = float(np.min(oldest)) if np.any(oldest < 0) else 0.0
        missing_before = max(0.0, -lo * h)
        missing_after = max(0.0, float(np.max(newest) - (n - 1)) * h)
        raise WindowError(
            f"innovations miss {missing_before:.6g} time units before and {missing_after:.6g} after the kernel support",
            missing_before=missing_before,
            missing_after=missing_after,
        )
    e = innovations.increments
    # Σ_{i} g_i e_{newest - i}
    full = np.convolve(e, g)
    out = full[newest]
    return out[0] if np.ndim(t) == 0 else out
