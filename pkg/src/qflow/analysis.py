"""Spectral bounds, error scans over (T0, Q_PE), and the scaling fits.

Everything here is classical post-processing around the solver: trace-only
eigenvalue bounds pick the scan window, the scan locates the simulation time
that minimizes solver error, and the fit helpers recover the power-law /
log-linear / stretched-exponential relations from measured data.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .cfd import LinearSystem
from .qlsa import (HermitianSystem, PostSelectionError, QPEConfig,
                   hermitian_dilation, hhl_solve, rhs_program)


def _dense(system) -> np.ndarray:
    if isinstance(system, LinearSystem):
        return system.dense
    return np.asarray(system, dtype=np.float64)


def condition_number(system) -> float:
    """Two-norm condition number sigma_max / sigma_min."""
    svals = np.linalg.svd(_dense(system), compute_uv=False)
    if svals[-1] <= 1e-14 * max(svals[0], 1.0):
        raise ValueError("matrix is singular")
    return float(svals[0] / svals[-1])


@dataclass(frozen=True)
class EigBounds:
    beta1: float
    beta2: float
    lambda_min_lo: float
    lambda_min_hi: float
    lambda_max_lo: float
    lambda_max_hi: float

    @property
    def abs_max(self) -> float:
        return max(abs(self.lambda_min_lo), abs(self.lambda_max_hi))


def eig_bounds(matrix) -> EigBounds:
    """Trace-only extreme-eigenvalue brackets for a symmetric matrix:
    beta1 -+ beta2*sqrt(N-1) and beta1 -+ beta2/sqrt(N-1)."""
    a = _dense(matrix)
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least a 2x2 matrix")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    beta1 = float(np.trace(a)) / n
    beta2 = math.sqrt(max(float(np.trace(a @ a)) / n - beta1 ** 2, 0.0))
    root = math.sqrt(n - 1.0)
    return EigBounds(beta1, beta2,
                     beta1 - beta2 * root, beta1 - beta2 / root,
                     beta1 + beta2 / root, beta1 + beta2 * root)


def state_rms_error(u_quantum: np.ndarray, u_classical: np.ndarray) -> float:
    """RMS distance between the unit-normalized, sign-aligned solutions."""
    a = np.asarray(u_quantum, dtype=float)
    b = np.asarray(u_classical, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    if float(a @ b) < 0:
        a = -a
    return float(np.linalg.norm(a - b) / math.sqrt(a.size))


def default_t0_range(hsys: HermitianSystem, points: int = 32) -> np.ndarray:
    """Scan window [2 pi 0.1 / L, 2 pi 0.9 / L] with L the trace-bound on
    |lambda|; the top of the window deliberately overshoots the aliasing-free
    zone so the scan sees the error wall."""
    bound = eig_bounds(hsys.dilated_matrix).abs_max
    return np.linspace(2 * math.pi * 0.1 / bound, 2 * math.pi * 0.9 / bound,
                       points)


@dataclass
class TQScanResult:
    t0_values: np.ndarray
    q_pe_values: tuple
    grid: dict
    locus: list
    t0_star: float
    kappa: float

    def eps_row(self, q_pe: int) -> np.ndarray:
        return np.array([self.grid[(float(t0), q_pe)]
                         for t0 in self.t0_values])

    def eps_min_series(self) -> np.ndarray:
        return np.array([float(np.min(self.eps_row(q)))
                         for q in self.q_pe_values])

    def to_csv(self, path) -> None:
        lines = ["t0,q_pe,epsilon"]
        for q in self.q_pe_values:
            for t0 in self.t0_values:
                lines.append(f"{float(t0)!r},{q},"
                             f"{self.grid[(float(t0), q)]!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def tq_scan(hsys: HermitianSystem, t0_values, q_pe_values,
            b_prep=None, rhs=None, workers: int | None = None
            ) -> TQScanResult:
    """Solver error on every (t0, q_pe) grid cell vs the dense solve.

    Cells are independent; they run on a small thread pool and the grid is
    assembled by cell index, so results are deterministic.
    """
    t0_values = np.asarray(list(t0_values), dtype=float)
    q_pe_values = tuple(int(q) for q in q_pe_values)
    if t0_values.size == 0 or not q_pe_values:
        raise ValueError("empty scan range")
    target = hsys.original.rhs if rhs is None else np.asarray(rhs, float)
    u_classical = np.linalg.solve(hsys.original.dense, target)
    if b_prep is None:
        b_prep = rhs_program(hsys, rhs)

    cells = [(q, float(t0)) for q in q_pe_values for t0 in t0_values]

    def solve_cell(cell):
        q, t0 = cell
        try:
            res = hhl_solve(hsys, QPEConfig(q, t0), b_prep, rhs=rhs,
                            keep_state=False)
        except PostSelectionError:
            return math.inf
        return state_rms_error(res.solution, u_classical)

    if workers is None:
        workers = min(4, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        eps = list(pool.map(solve_cell, cells))
    if not any(math.isfinite(e) for e in eps):
        raise PostSelectionError("every scan cell failed post-selection")

    grid = {(t0, q): e for (q, t0), e in zip(cells, eps)}
    locus = []
    for q in q_pe_values:
        row = np.array([grid[(float(t0), q)] for t0 in t0_values])
        locus.append(float(t0_values[int(np.argmin(row))]))
    return TQScanResult(t0_values, q_pe_values, grid, locus,
                        float(np.median(locus)),
                        condition_number(hsys.original))


@dataclass(frozen=True)
class FitResult:
    model: str
    params: tuple
    r_squared: float

    def to_json(self) -> str:
        return json.dumps({"model": self.model,
                           "params": [float(p) for p in self.params],
                           "r_squared": self.r_squared}, sort_keys=True)


def _check_fit_data(x: np.ndarray, y: np.ndarray) -> None:
    if x.size < 3:
        raise ValueError("need at least 3 points to fit")
    if np.ptp(x) < 1e-14 or np.ptp(y) < 1e-14:
        raise ValueError("degenerate (constant) fit data")


def _r_squared(y: np.ndarray, y_fit: np.ndarray) -> float:
    ss_res = float(np.sum((y - y_fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)


def fit_error_power_law(q_pe_values, eps_values) -> FitResult:
    """eps = coeff * Q_PE^exponent, fitted in log-log space.

    params = (exponent, coeff).
    """
    q = np.asarray(list(q_pe_values), dtype=float)
    e = np.asarray(list(eps_values), dtype=float)
    if np.any(q <= 0) or np.any(e <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(q), np.log(e)
    _check_fit_data(lx, ly)
    slope, intercept = np.polyfit(lx, ly, 1)
    r2 = _r_squared(ly, slope * lx + intercept)
    return FitResult("power-law", (float(slope), float(math.exp(intercept))),
                     r2)


def fit_t0_kappa(points) -> FitResult:
    """T0* = slope * ln(kappa) + intercept; params = (slope, intercept)."""
    pts = [(float(k), float(t)) for k, t in points]
    kappa = np.array([p[0] for p in pts])
    t0 = np.array([p[1] for p in pts])
    if np.any(kappa <= 0):
        raise ValueError("kappa must be positive")
    lx = np.log(kappa)
    _check_fit_data(lx, t0)
    slope, intercept = np.polyfit(lx, t0, 1)
    r2 = _r_squared(t0, slope * lx + intercept)
    return FitResult("log-linear", (float(slope), float(intercept)), r2)


def fit_kappa_model(points) -> FitResult:
    """kappa = m (e^{-a m nu} + c), fitted in log space from (m, nu, kappa)
    triples; params = (a, c)."""
    pts = [(float(m), float(nu), float(k)) for m, nu, k in points]
    m = np.array([p[0] for p in pts])
    nu = np.array([p[1] for p in pts])
    kappa = np.array([p[2] for p in pts])
    if np.any(kappa <= 0) or np.any(m <= 0):
        raise ValueError("m and kappa must be positive")
    y = np.log(kappa / m)
    _check_fit_data(m * nu, y)

    def model(x, a, c):
        mm, nn = x
        return np.log(np.exp(-a * mm * nn) + c)

    (a, c), _ = scipy.optimize.curve_fit(model, (m, nu), y, p0=(0.02, 2.0),
                                         maxfev=20000)
    r2 = _r_squared(y, model((m, nu), a, c))
    return FitResult("stretched-exponential", (float(a), float(c)), r2)


def predict_t0(kappa: float, fit: FitResult, floor: float = 0.05) -> float:
    """Evaluate the log-linear fit; clamped below because the line crosses
    zero near kappa ~ e^{-b/a} and a simulation time must stay positive."""
    if fit.model != "log-linear":
        raise ValueError("predict_t0 needs a log-linear fit")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    slope, intercept = fit.params
    return max(slope * math.log(kappa) + intercept, floor)


def bidiagonal_surrogate(kappa: float = 18.8795, dim: int = 8,
                         rhs: np.ndarray | None = None,
                         tol: float = 1e-10) -> LinearSystem:
    """Lower bidiagonal Toeplitz [[1, 0, ...], [-g, 1, ...]] with g bisected
    until the condition number matches; same shape as the one-shot family
    (identity diagonal, scaled negative subdiagonal)."""

    def kappa_of(g: float) -> float:
        mat = np.eye(dim) - g * np.diag(np.ones(dim - 1), -1)
        return condition_number(mat)

    if kappa < 1.0:
        raise ValueError("condition number cannot be below 1")
    lo, hi = 0.0, 4.0
    while kappa_of(hi) < kappa:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kappa_of(mid) < kappa:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    g = 0.5 * (lo + hi)
    mat = np.eye(dim) - g * np.diag(np.ones(dim - 1), -1)
    if rhs is None:
        rhs = np.ones(dim)
    return LinearSystem(sp.csr_array(mat), np.asarray(rhs, dtype=float),
                        "surrogate")
