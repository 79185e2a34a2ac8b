"""Finite-difference setup for 1D channel flows.

Pressure-driven (parabolic steady profile) and wall-driven (linear steady
profile) flow between parallel plates on n_grid wall-to-wall nodes with
unit gap. Dirichlet walls are folded into the interior stencil, so all
operators act on the n_grid - 2 interior unknowns and reported profiles
re-attach the boundary values.

Three ways to march du/dt = (1/re) d2u/dy2 + f:
  BE1  one implicit step, (I - A dt) u+ = u + f dt, re-solved per step;
  BE2  all m implicit steps unrolled into one block system;
  FE   the explicit update written as a block system (lower bidiagonal,
       always invertible, but the encoded recurrence keeps the usual
       courant restriction dt/h^2 <= 0.5).

Block systems carry p_pad trailing rows that copy the final state, so the
tail of the solution vector holds steady-state duplicates.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse

SERIES_TOL = 1e-14
SERIES_CAP = 100_000


class ConfigError(ValueError):
    """Rejected flow or solver configuration."""


_FLOWS = ("poiseuille", "couette")


@dataclass(frozen=True)
class FlowConfig:
    flow: str = "poiseuille"
    n_grid: int = 6
    re: float = 10.0
    dt: float = 0.01
    dpdx: float = -2.0
    u_in: float = 1.0
    u_wall: float = 1.0
    total_time: float | None = None
    m_steps: int | None = None
    p_pad: int | None = None

    def __post_init__(self):
        if self.flow not in _FLOWS:
            raise ConfigError(f"unknown flow {self.flow!r}; pick from {_FLOWS}")
        if self.n_grid < 3:
            raise ConfigError("need at least 3 grid points (1 interior)")
        if self.re <= 0:
            raise ConfigError("re must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.m_steps is not None and self.m_steps < 1:
            raise ConfigError("m_steps must be >= 1")
        if self.p_pad is not None and self.p_pad < 0:
            raise ConfigError("p_pad must be >= 0")

    @property
    def n_interior(self) -> int:
        return self.n_grid - 2

    @property
    def h(self) -> float:
        return 1.0 / (self.n_grid - 1)

    @property
    def y_interior(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_grid - 1)

    @property
    def courant(self) -> float:
        return self.dt / self.h**2

    @property
    def m(self) -> int:
        """Step count: explicit m_steps, else ceil(total_time / dt)."""
        if self.m_steps is not None:
            return self.m_steps
        if self.total_time is not None:
            return max(1, math.ceil(self.total_time / self.dt))
        raise ConfigError("set m_steps or total_time")


@dataclass
class LinearSystem:
    """Assembled system matrix with its right-hand side and scheme tag."""

    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray
    scheme: str

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m or n != len(self.rhs):
            raise ConfigError("matrix/rhs dimension mismatch")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def sparsity(self) -> int:
        """Max nonzeros per row."""
        return int(np.diff(self.matrix.indptr).max())

    @cached_property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def kappa(self) -> float:
        return float(np.linalg.cond(self.dense))

    def solve_classical(self) -> np.ndarray:
        return scipy.sparse.linalg.spsolve(self.matrix.tocsc(), self.rhs)


def build_laplacian(cfg: FlowConfig) -> scipy.sparse.csr_matrix:
    """Plain tridiagonal (1, -2, 1)/h^2 over the interior nodes.

    Viscosity is not included here; system builders scale by 1/re.
    """
    if cfg.n_grid < 3:
        raise ConfigError("need at least 3 grid points")
    n = cfg.n_interior
    c = 1.0 / cfg.h**2
    return scipy.sparse.diags_array(
        [np.full(n - 1, c), np.full(n, -2.0 * c), np.full(n - 1, c)],
        offsets=[-1, 0, 1]).tocsr()


def _viscous(cfg: FlowConfig) -> np.ndarray:
    return build_laplacian(cfg).toarray() / cfg.re


def forcing(cfg: FlowConfig) -> np.ndarray:
    """Constant forcing plus the wall value entering through the stencil."""
    n = cfg.n_interior
    if cfg.flow == "poiseuille":
        return np.full(n, -cfg.dpdx)
    f = np.zeros(n)
    f[-1] = cfg.u_wall / (cfg.re * cfg.h**2)
    return f


def initial_condition(cfg: FlowConfig) -> np.ndarray:
    return np.full(cfg.n_interior, cfg.u_in)


def check_fe_stability(cfg: FlowConfig) -> None:
    if cfg.courant > 0.5 + 1e-12:
        raise ConfigError(
            f"courant number dt/h^2 = {cfg.courant:.4g} exceeds 0.5; "
            "explicit stepping is unstable")


def build_be1_system(cfg: FlowConfig, u_prev: np.ndarray) -> LinearSystem:
    """One implicit step: (I - A dt) u+ = u_prev + f dt."""
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.shape != (cfg.n_interior,):
        raise ConfigError("u_prev length must equal the interior grid size")
    M = np.eye(cfg.n_interior) - _viscous(cfg) * cfg.dt
    return LinearSystem(scipy.sparse.csr_matrix(M),
                        u_prev + forcing(cfg) * cfg.dt, "BE1")


def _block_system(cfg, scheme, diag_block, sub_block):
    n = cfg.n_interior
    m = cfg.m
    p = resolved_p_pad(cfg)
    nb = m + p + 1
    M = scipy.sparse.lil_matrix((nb * n, nb * n))
    rhs = np.zeros(nb * n)
    rhs[:n] = cfg.u_in
    f_dt = forcing(cfg) * cfg.dt
    I = np.eye(n)
    M[:n, :n] = I
    for k in range(1, nb):
        r = slice(k * n, (k + 1) * n)
        c = slice((k - 1) * n, k * n)
        if k <= m:
            M[r, r] = diag_block
            M[r, c] = sub_block
            rhs[r] = f_dt
        else:
            M[r, r] = I
            M[r, c] = -I  # padding rows copy the final state
    return LinearSystem(M.tocsr(), rhs, scheme)


def build_be2_system(cfg: FlowConfig) -> LinearSystem:
    """All m implicit steps in one block system.

    Block row k enforces (I - A dt) u_k - u_{k-1} = f dt; row 0 pins the
    uniform inlet state and the trailing p_pad rows duplicate the last step.
    """
    n = cfg.n_interior
    A = _viscous(cfg)
    return _block_system(cfg, "BE2", np.eye(n) - A * cfg.dt, -np.eye(n))


def build_fe_system(cfg: FlowConfig) -> LinearSystem:
    """Explicit marching as a block system: u_k - (I + A dt) u_{k-1} = f dt."""
    check_fe_stability(cfg)
    n = cfg.n_interior
    A = _viscous(cfg)
    return _block_system(cfg, "FE", np.eye(n), -(np.eye(n) + A * cfg.dt))


def be_march(cfg: FlowConfig, u0: np.ndarray, steps: int) -> np.ndarray:
    M = np.eye(cfg.n_interior) - _viscous(cfg) * cfg.dt
    f = forcing(cfg)
    u = np.asarray(u0, dtype=float).copy()
    for _ in range(steps):
        u = np.linalg.solve(M, u + f * cfg.dt)
    return u


def fe_march(cfg: FlowConfig, u0: np.ndarray, steps: int) -> np.ndarray:
    A = _viscous(cfg)
    f = forcing(cfg)
    u = np.asarray(u0, dtype=float).copy()
    for _ in range(steps):
        u = u + (A @ u + f) * cfg.dt
    return u


def resolved_p_pad(cfg: FlowConfig) -> int:
    """Explicit p_pad, or the smallest p whose (m+p)-th implicit step has
    settled: ||u^{m+p} - u^{m+p-1}||_inf < 1e-6 under classical marching."""
    if cfg.p_pad is not None:
        return cfg.p_pad
    M = np.eye(cfg.n_interior) - _viscous(cfg) * cfg.dt
    f = forcing(cfg)
    u = initial_condition(cfg)
    delta = math.inf
    for step in range(1, cfg.m + SERIES_CAP):
        nxt = np.linalg.solve(M, u + f * cfg.dt)
        delta = np.max(np.abs(nxt - u))
        u = nxt
        if step >= cfg.m and delta < 1e-6:
            return step - cfg.m
    raise ConfigError("marching did not settle; set p_pad explicitly")


def pad_to_power_of_two(cfg: FlowConfig, m_steps: int, min_pad: int = 0) -> int:
    """Smallest padding making (m + p + 1) * n_interior a power of two.

    When n_interior has an odd factor no padding can get there; the solver
    pads the assembled system instead and this returns min_pad.
    """
    n = cfg.n_interior
    if n & (n - 1):
        return min_pad
    total = (m_steps + min_pad + 1) * n
    target = 1 << (total - 1).bit_length()
    return target // n - m_steps - 1


def _series_sum(coeff_fn, y, t, re, step=1, start=1):
    """Sum coeff(k) sin(k pi y) e^{-k^2 pi^2 t / re} adaptively."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros_like(y)
    chunk = 512
    k0 = start
    while k0 < start + step * SERIES_CAP:
        k = np.arange(k0, k0 + chunk * step, step, dtype=float)
        terms = coeff_fn(k) * np.exp(-(k * math.pi) ** 2 * t / re)
        out += terms @ np.sin(math.pi * np.outer(k, y))
        if np.max(np.abs(terms)) < SERIES_TOL:
            break
        k0 += chunk * step
    return out


def analytical_poiseuille(cfg: FlowConfig, y, t) -> np.ndarray:
    """Series solution from the uniform start u_in; t=None is the steady
    parabola -(re/2) dpdx y (1-y)."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    amp = -cfg.dpdx * cfg.re / 2.0
    steady = amp * y_arr * (1.0 - y_arr)
    if t is None:
        return steady if np.ndim(y) else float(steady[0])
    # odd modes only: coeff = 4 u_in/(k pi) - 8 amp/(k pi)^3
    series = _series_sum(
        lambda k: 4.0 * cfg.u_in / (k * math.pi)
        - 8.0 * amp / (k * math.pi) ** 3,
        y_arr, t, cfg.re, step=2)
    out = steady + series
    return out if np.ndim(y) else float(out[0])


def analytical_couette(cfg: FlowConfig, y, t) -> np.ndarray:
    """Series solution from the uniform start u_in toward the linear
    profile u_wall * y."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    steady = cfg.u_wall * y_arr
    if t is None:
        return steady if np.ndim(y) else float(steady[0])
    series = _series_sum(
        lambda k: (2.0 * cfg.u_in * (1.0 - np.cos(np.pi * k))
                   + 2.0 * cfg.u_wall * np.cos(np.pi * k)) / (k * math.pi),
        y_arr, t, cfg.re)
    out = steady + series
    return out if np.ndim(y) else float(out[0])


def analytic_profile(cfg: FlowConfig, t) -> np.ndarray:
    """Reference solution sampled on the interior nodes."""
    fn = analytical_poiseuille if cfg.flow == "poiseuille" \
        else analytical_couette
    return fn(cfg, cfg.y_interior, t)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap of the unit-normalized vectors, insensitive to global sign."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(abs(np.vdot(a, b)) / (na * nb))


def rms_error(u: np.ndarray, ref: np.ndarray) -> float:
    d = np.asarray(u) - np.asarray(ref)
    return float(np.sqrt(np.mean(np.abs(d) ** 2)))


def error_metrics(u_q: np.ndarray, u_ref: np.ndarray) -> dict:
    """fidelity on unit-normalized vectors, rms on the vectors as given."""
    u_q = np.asarray(u_q, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    if u_q.shape != u_ref.shape:
        raise ValueError("length mismatch")
    if np.linalg.norm(u_q) == 0.0 or np.linalg.norm(u_ref) == 0.0:
        raise ValueError("zero vector input")
    return {"rms": rms_error(u_q, u_ref), "fidelity": fidelity(u_q, u_ref)}


def export_system(ls: LinearSystem, base_path) -> tuple[str, str]:
    """Matrix to Matrix-Market text, rhs to CSV; returns the two paths."""
    import scipy.io
    m_path = f"{base_path}_matrix.mtx"
    r_path = f"{base_path}_rhs.csv"
    scipy.io.mmwrite(m_path, scipy.sparse.coo_matrix(ls.matrix))
    np.savetxt(r_path, ls.rhs, delimiter=",")
    return m_path, r_path
