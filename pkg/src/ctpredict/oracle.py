"""Brute-force best linear predictor from gridded observations.

The predictor of ``X(t)`` from ``X(u_1), ..., X(u_m)`` solves the normal
equations ``Σ w = ρ`` with ``Σ_{kj} = r(u_j - u_k)`` and
``ρ_k = r(t - u_k)``; its error variance is ``r(0) - Re⟨w, ρ⟩``.  Nothing
here touches the spectral factor, which makes it an independent check on the
formula-based predictors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IllConditionedError, UsageError, ValidationError

log = logging.getLogger(__name__)

JITTER_START = 1e-12
JITTER_MAX = 1e-6
COND_THRESHOLD = 1e12
DEFAULT_WINDOW = 20.0
DEFAULT_H = 0.01
COMPARE_TOL = 1e-3


@dataclass(frozen=True)
class OracleProblem:
    """Observation times ``u``, prediction target ``t_obs + tau`` and covariance ``r``.

    ``kind`` and ``T`` only label the problem ("whole_past" surrogate or
    "finite_section") so that :func:`compare` can refuse mismatched pairs.
    """

    r: Callable
    tau: float
    h: float
    u: np.ndarray = field(repr=False)
    t_obs: float = 0.0
    kind: str = "custom"
    T: float | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 1 or u.size < 1:
            raise ValidationError("an oracle problem needs at least one observation time")
        if np.unique(u).size != u.size:
            raise ValidationError("observation times must be distinct")
        if not self.h > 0:
            raise ValidationError("grid step h must be positive")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValidationError("lag tau must be finite and non-negative")

    @property
    def target(self) -> float:
        return self.t_obs + self.tau

    @property
    def uniform(self) -> bool:
        u = np.asarray(self.u, dtype=float)
        if u.size < 3:
            return u.size == 2 or u.size == 1
        d = np.diff(u)
        return bool(np.all(d > 0) and np.max(np.abs(d - d.mean())) <= 1e-9 * abs(d.mean()))


@dataclass(frozen=True)
class OracleSolution:
    weights: np.ndarray = field(repr=False)
    error_variance: float
    cond: float
    jitter: float
    method: str
    r0: float
    problem: OracleProblem = field(repr=False)
    trace: tuple = ()

    @property
    def tau(self) -> float:
        return self.problem.tau

    def to_dict(self) -> dict:
        return {
            "sigma2": self.error_variance,
            "cond": self.cond,
            "jitter": self.jitter,
            "method": self.method,
            "n_obs": int(self.weights.size),
            "tau": self.tau,
            "kind": self.problem.kind,
        }

    def csv_rows(self):
        return np.column_stack([self.problem.u, self.weights.real, self.weights.imag])


def levinson_solve(col: np.ndarray, row: np.ndarray, y: np.ndarray):
    """Solve ``A x = y`` for Toeplitz ``A`` with first column ``col`` and first row ``row``.

    Forward/backward-vector Levinson recursion in ``O(n²)``.  Returns the
    solution and the smallest pivot ``1 - ε_f ε_b`` met on the way (its
    collapse towards zero signals loss of definiteness).
    """
    col = np.asarray(col, dtype=complex)
    row = np.asarray(row, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = col.size
    if row.size != n or y.size != n:
        raise ValidationError("Toeplitz column, row and right-hand side must have equal length")
    if col[0] != row[0]:
        raise ValidationError("Toeplitz column and row disagree on the diagonal")
    m0 = col[0]
    if m0 == 0:
        return np.full(n, np.nan + 0j), 0.0
    f = np.array([1.0 / m0])
    b = np.array([1.0 / m0])
    x = np.array([y[0] / m0])
    min_pivot = 1.0
    for k in range(1, n):
        # row k of the leading (k+1)x(k+1) block against [v; 0]: Σ_i col[k-i] v_i
        lower = col[k:0:-1]  # col[k], ..., col[1]
        upper = row[1 : k + 1]  # row[1], ..., row[k]
        ef = lower @ f
        eb = upper @ b
        ex = lower @ x
        denom = 1.0 - ef * eb
        min_pivot = min(min_pivot, abs(denom))
        if denom == 0 or not np.isfinite(denom):
            return np.full(n, np.nan + 0j), 0.0
        f_ext = np.append(f, 0.0)
        b_ext = np.insert(b, 0, 0.0)
        f = (f_ext - ef * b_ext) / denom
        b = (b_ext - eb * f_ext) / denom
        x = np.append(x, 0.0) + (y[k] - ex) * b
    return x, float(min_pivot)


def _dense(Sigma, rho):
    return np.linalg.solve(Sigma, rho)


def solve_projection(
    problem: OracleProblem,
    *,
    method: str = "auto",
    jitter_start: float = JITTER_START,
    jitter_max: float = JITTER_MAX,
    cond_threshold: float = COND_THRESHOLD,
) -> OracleSolution:
    """Solve the normal equations of ``problem``.

    Uniform grids use Levinson recursion; other grids (or ``method="dense"``)
    use a dense solve.  If the system is numerically singular, diagonal
    jitter starting at ``jitter_start·r(0)`` is escalated by factors of ten up
    to ``jitter_max·r(0)``; each step is logged and kept in ``trace``.
    """
    u = np.asarray(problem.u, dtype=float)
    r = problem.r
    r0 = float(np.real(np.asarray(r(np.zeros(1)))[0]))
    rho = np.asarray(r(problem.target - u), dtype=complex)
    use_levinson = method == "levinson" or (method == "auto" and problem.uniform and u.size > 1)
    if method not in ("auto", "levinson", "dense"):
        raise UsageError(f"unknown oracle method {method!r}")

    if use_levinson:
        hh = (u[-1] - u[0]) / (u.size - 1)
        lags = np.arange(u.size) * hh
        rp = np.asarray(r(lags), dtype=complex)  # r(j h)
        row = rp  # Σ_{0j} = r(u_j - u_0)
        col = np.conj(rp)  # Σ_{k0} = r(u_0 - u_k)
        col[0] = row[0] = rp[0].real
    else:
        D = u[None, :] - u[:, None]
        Sigma = np.asarray(r(D), dtype=complex)

    trace = []
    jitter = 0.0
    while True:
        if use_levinson:
            c2 = col.copy()
            r2 = row.copy()
            c2[0] = r2[0] = col[0] + jitter * r0
            w, pivot = levinson_solve(c2, r2, rho)
            # smallest pivot bounds the conditioning from below
            cond = 1.0 / pivot if pivot > 0 else math.inf
            ok = np.all(np.isfinite(w)) and cond <= cond_threshold
        else:
            S = Sigma + jitter * r0 * np.eye(u.size)
            cond = float(np.linalg.cond(S))
            ok = math.isfinite(cond) and cond <= cond_threshold
            w = _dense(S, rho) if ok else None
        if ok:
            err = r0 - float(np.real(np.vdot(w, rho)))
            if err >= -1e-10 * max(r0, 1.0):
                break
            ok = False
        trace.append({"jitter": jitter, "cond": cond})
        nxt = jitter_start if jitter == 0.0 else jitter * 10.0
        if nxt > jitter_max * (1 + 1e-9):
            raise IllConditionedError(
                f"normal equations ill-conditioned (cond {cond:.3g}) after jitter up to {jitter_max:g}·r(0)",
                trace=trace,
            )
        log.info("oracle jitter escalated to %.1e r(0) (cond %.3g)", nxt, cond)
        jitter = nxt

    return OracleSolution(
        weights=np.asarray(w),
        error_variance=err,
        cond=float(cond),
        jitter=jitter,
        method="levinson" if use_levinson else "dense",
        r0=r0,
        problem=problem,
        trace=tuple(trace),
    )


def _grid(start: float, stop: float, h: float) -> np.ndarray:
    n = int(round((stop - start) / h))
    return start + np.arange(n + 1) * h


def whole_past_problem(r, tau: float, h: float = DEFAULT_H, window: float = DEFAULT_WINDOW) -> OracleProblem:
    """Observations on ``[-window, 0]`` at step ``h``, target ``tau``: the long-window surrogate of the whole past."""
    return OracleProblem(r=r, tau=float(tau), h=float(h), u=_grid(-window, 0.0, h), kind="whole_past")


def finite_section_problem(r, tau: float, T: float, h: float = DEFAULT_H) -> OracleProblem:
    """Observations on ``[-2T, 0]`` at step ``h``, target ``tau``."""
    return OracleProblem(r=r, tau=float(tau), h=float(h), u=_grid(-2.0 * T, 0.0, h), kind="finite_section", T=float(T))


@dataclass(frozen=True)
class Comparison:
    tau: float
    T: float | None
    sigma2_formula: float
    sigma2_oracle: float
    gap: float
    rel_gap: float
    verdict: str
    tol: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "T": self.T,
            "sigma2_formula": self.sigma2_formula,
            "sigma2_oracle": self.sigma2_oracle,
            "gap": self.gap,
            "rel_gap": self.rel_gap,
            "verdict": self.verdict,
            "tol": self.tol,
        }


def compare(report, oracle: OracleSolution, tol: float = COMPARE_TOL) -> Comparison:
    """Set the formula variance beside the oracle's; ``divergent`` when the relative gap exceeds ``tol``."""
    if abs(report.tau - oracle.tau) > 1e-12 * max(1.0, abs(report.tau)):
        raise UsageError(f"lag mismatch: report tau={report.tau}, oracle tau={oracle.tau}")
    kind = oracle.problem.kind
    if report.T is None and kind == "finite_section":
        raise UsageError("whole-past report compared with a finite-section oracle")
    if report.T is not None and kind == "whole_past":
        raise UsageError("finite-section report compared with a whole-past oracle")
    if report.T is not None and oracle.problem.T is not None and abs(report.T - oracle.problem.T) > 1e-12:
        raise UsageError(f"window mismatch: report T={report.T}, oracle T={oracle.problem.T}")
    a = float(report.sigma2)
    b = float(oracle.error_variance)
    gap = abs(a - b)
    scale = max(abs(a), abs(b))
    rel = gap / scale if scale > 0 else 0.0
    return Comparison(
        tau=report.tau,
        T=report.T,
        sigma2_formula=a,
        sigma2_oracle=b,
        gap=gap,
        rel_gap=rel,
        verdict="consistent" if rel <= tol else "divergent",
        tol=tol,
    )
