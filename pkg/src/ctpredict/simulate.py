"""Gaussian sample paths and Monte Carlo checks of the error formulas.

Two generators are provided:

* moving average: ``X_k = Σ_j g_j e_{k-j}`` with independent Gaussian
  increments ``e`` of variance ``h`` (Brownian innovations);
* spectral: ``X(t_k) = Σ_j sqrt(G'(μ_j) w_j) Z_j exp(2πi t_k μ_j)`` with
  trapezoid weights ``w_j`` and independent standard Gaussians ``Z_j``.

Every random stream is drawn from ``SeedSequence([seed, replicate])`` so
replicates are independent and reproducible in any order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import next_fast_len
from scipy.signal import fftconvolve

from .errors import ConfigurationError, DomainError
from .predictor import (
    DEFAULT_MARGIN_FACTOR,
    PredictionReport,
    PredictorSpec,
    predict_finite_section,
    predict_whole_past,
)
from .specmodel import TWO_PI, SpectralModel
from .szego import SzegoFactor

WARMUP_EPS = 1e-8


class AliasingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SamplePath:
    """A sampled realization on the uniform grid ``t``."""

    h: float
    t: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    seed: int | None
    method: str  # "MA" | "Spectral"
    real: bool = False
    replicate: int = 0
    noise: np.ndarray | None = field(default=None, repr=False)
    noise_offset: int = 0
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.values.size < 2:
            raise ConfigurationError("a path needs at least two samples")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("path values must be finite")

    def csv_rows(self):
        v = np.asarray(self.values, dtype=complex)
        return np.column_stack([self.t, v.real, v.imag])


@dataclass(frozen=True)
class McReport:
    """Monte Carlo estimate of a mean-squared prediction error."""

    n: int
    mse: float
    stderr: float
    theory: float
    z: float
    spec: PredictorSpec | None = None
    samples: dict | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {"n": self.n, "mse": self.mse, "stderr": self.stderr, "theory": self.theory, "z": self.z}
        if self.spec is not None:
            out["tau"] = self.spec.tau
            if self.spec.T is not None:
                out["T"] = self.spec.T
        return out


def rng_for(seed: int, replicate: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replicate)]))


def gaussian_increments(rng: np.random.Generator, size, h: float, real: bool) -> np.ndarray:
    """Independent increments with ``E|e|² = h``; circular complex unless ``real``."""
    if real:
        return rng.standard_normal(size) * math.sqrt(h)
    z = rng.standard_normal(size + (2,) if isinstance(size, tuple) else (size, 2))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(h / 2.0)


def _check_step(factor: SzegoFactor, h):
    if h is None:
        return factor.h
    h = float(h)
    if abs(h - factor.h) > 1e-12 * factor.h:
        raise ConfigurationError(f"simulation step h={h} differs from the factor grid step {factor.h}")
    return h


def ma_taps(factor: SzegoFactor, real: bool = False, eps: float = WARMUP_EPS) -> np.ndarray:
    """Discrete MA taps up to the effective support (cumulative energy ``1 - eps``)."""
    support = max(factor.effective_support(eps), factor.h)
    g = factor.taps(length=support)
    if real:
        scale = float(np.max(np.abs(g))) if g.size else 0.0
        if scale > 0 and float(np.max(np.abs(g.imag))) > 1e-8 * scale:
            raise ConfigurationError("real mode needs a real kernel (symmetric density)")
        g = g.real
    return g


def simulate_ma(
    factor: SzegoFactor,
    n_points: int,
    h: float | None = None,
    seed: int = 0,
    *,
    real: bool = False,
    keep_noise: bool = True,
    replicate: int = 0,
) -> SamplePath:
    """Moving-average path from Gaussian innovations.

    The kernel is the discrete tap sequence truncated at its effective
    support; the warm-up of that many samples is generated and discarded, so
    ``values[0]`` already sees a full kernel.  ``noise[k + noise_offset]`` is
    the increment ending at ``t[k]``.
    """
    h = _check_step(factor, h)
    n_points = int(n_points)
    if n_points < 2:
        raise ConfigurationError("n_points must be at least 2")
    g = ma_taps(factor, real)
    J = g.size
    e = gaussian_increments(rng_for(seed, replicate), n_points + J - 1, h, real)
    x = fftconvolve(e, g, mode="valid") if J > 1 else g[0] * e
    if real:
        x = np.real(x)
    t = np.arange(n_points) * h
    return SamplePath(
        h=h,
        t=t,
        values=x,
        seed=seed,
        method="MA",
        real=real,
        replicate=replicate,
        noise=e if keep_noise else None,
        noise_offset=J - 1,
        meta={"taps": J},
    )


def simulate_spectral(
    model: SpectralModel, n_points: int, h: float, seed: int = 0, *, real: bool = False, replicate: int = 0
) -> SamplePath:
    """Random trigonometric sum over the model's frequency grid.

    The path is periodic with period ``1/Δμ``.  A warning carries the mass
    outside the band when ``M`` is below the Nyquist frequency ``1/(2h)``,
    since the sampled process would otherwise fold that mass into the band.
    """
    n_points = int(n_points)
    h = float(h)
    if n_points < 2 or not h > 0:
        raise ConfigurationError("need n_points >= 2 and h > 0")
    if model.M < 0.5 / h:
        missing = max(float(model.total_mass - model.grid_mass), 0.0)
        warnings.warn(
            f"band M={model.M:g} is below the Nyquist frequency {0.5 / h:g}; aliased mass estimate {missing:.3g}",
            AliasingWarning,
            stacklevel=2,
        )
    rng = rng_for(seed, replicate)
    amp = np.sqrt(model.values * model.weights)
    K = model.K
    if real:
        if not model.real:
            raise ConfigurationError("real mode needs a symmetric density")
        zp = rng.standard_normal((K, 2))
        zpos = (zp[:, 0] + 1j * zp[:, 1]) / math.sqrt(2.0)
        z = np.concatenate([np.conj(zpos[::-1]), [rng.standard_normal()], zpos])
    else:
        zz = rng.standard_normal((model.mu.size, 2))
        z = (zz[:, 0] + 1j * zz[:, 1]) / math.sqrt(2.0)
    coef = amp * z
    j = np.arange(-K, K + 1)
    P = 1.0 / (h * model.dmu)
    Pi = int(round(P))
    if abs(P - Pi) < 1e-9 * P:
        # exp(2πi k j / P): fold frequencies modulo P and use one inverse FFT
        folded = np.zeros(Pi, dtype=complex)
        np.add.at(folded, j % Pi, coef)
        base = np.fft.ifft(folded) * Pi
        x = base[np.arange(n_points) % Pi]
    else:
        x = np.empty(n_points, dtype=complex)
        t_all = np.arange(n_points) * h
        for i in range(0, n_points, 256):
            x[i : i + 256] = np.exp(TWO_PI * 1j * np.multiply.outer(t_all[i : i + 256], model.mu)) @ coef
    if real:
        x = x.real
    return SamplePath(
        h=h,
        t=np.arange(n_points) * h,
        values=x,
        seed=seed,
        method="Spectral",
        real=real,
        replicate=replicate,
        meta={"period": 1.0 / model.dmu},
    )


def empirical_autocovariance(x: np.ndarray, max_lag: int) -> np.ndarray:
    """``mean(x[k + l] · conj(x[k]))`` for ``l = 0 .. max_lag``."""
    x = np.asarray(x)
    n = x.size
    return np.array([np.mean(x[l:] * np.conj(x[: n - l])) for l in range(max_lag + 1)])


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _report_for(factor, spec: PredictorSpec) -> PredictionReport:
    if spec.whole_past:
        return predict_whole_past(factor, spec.tau)
    return predict_finite_section(factor, spec.tau, spec.T)


def monte_carlo_mse(
    factor: SzegoFactor,
    spec: PredictorSpec,
    N: int,
    seed: int = 0,
    *,
    real: bool = False,
    theory: float | None = None,
    margin_factor: float = DEFAULT_MARGIN_FACTOR,
    keep_samples: bool = False,
    min_replicates: int = 100,
    batch: int = 64,
) -> McReport:
    """Empirical mean-squared error of the innovation-based predictor.

    Replicate ``r`` draws its innovations from ``SeedSequence([seed, r])``,
    builds an MA path and predicts the path's final target value.  Whole-past
    prediction recovers the innovations from the path by whitening (DFT
    division by the tap transfer function, ``margin_factor`` kernel lengths
    discarded at each end); the finite-section predictor is applied to the
    stored generator noise, since it is defined on the innovations of the
    section.  Replicates are processed in batches that share FFT plans; the
    arithmetic per replicate is that of :func:`simulate_ma`,
    :func:`~ctpredict.predictor.whiten_path` and
    :func:`~ctpredict.predictor.apply_predictor`.

    ``theory`` defaults to the formula ``σ²`` of the matching report.
    """
    N = int(N)
    if N < 2:
        raise DomainError("Monte Carlo needs N >= 2")
    if N < min_replicates:
        warnings.warn(f"N={N} replicates is below the recommended {min_replicates}", stacklevel=2)
    report = _report_for(factor, spec)
    if report.taps is None:
        raise ConfigurationError("lag and window must be multiples of the factor step for Monte Carlo")
    theory = float(report.sigma2 if theory is None else theory)
    h = factor.h
    m = int(report.lag_steps)
    w = report.taps[::-1]  # oldest first
    g = ma_taps(factor, real)
    J = g.size
    if spec.whole_past:
        margin = int(math.ceil(margin_factor * J))
        n_points = next_fast_len(2 * margin + m + w.size + 1)
        G = np.fft.fft(g, n_points)
        bad = np.abs(G) < 1e-8 * np.abs(G).max()
        Ginv = np.where(bad, 0.0, 1.0 / np.where(bad, 1.0, G))
        k_path = n_points - margin - 1 + m
        newest = k_path - m
    else:
        n_points = m + w.size + 1
        k_path = n_points - 1
        newest = k_path - m + J - 1  # index into the stored noise
    dtype = float if real else complex
    target = np.empty(N, dtype=dtype)
    pred = np.empty(N, dtype=dtype)
    past = np.empty(N, dtype=dtype)
    n_noise = n_points + J - 1
    for b0 in range(0, N, batch):
        reps = range(b0, min(N, b0 + batch))
        e = np.stack([gaussian_increments(rng_for(seed, r), n_noise, h, real) for r in reps])
        x = fftconvolve(e, g[None, :], mode="valid", axes=1) if J > 1 else g[0] * e
        if real:
            x = x.real
        if spec.whole_past:
            src = np.fft.ifft(np.fft.fft(x, axis=1) * Ginv, axis=1)
            if real:
                src = src.real
        else:
            src = e
        sl = slice(b0, b0 + len(reps))
        pred[sl] = src[:, newest - w.size + 1 : newest + 1] @ w
        target[sl] = x[:, k_path]
        past[sl] = x[:, k_path - m]
    err = target - pred
    sq = np.abs(err) ** 2
    mse = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(N))
    z = (mse - theory) / se if se > 0 else (0.0 if mse == theory else math.inf)
    samples = None
    if keep_samples:
        samples = {
            "target": target,
            "prediction": pred,
            "residual": err,
            "past": past,
            "n_points": n_points,
            "k_path": k_path,
        }
    return McReport(n=N, mse=mse, stderr=se, theory=theory, z=float(z), spec=spec, samples=samples)
