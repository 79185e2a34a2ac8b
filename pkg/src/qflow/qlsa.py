"""Gate-level linear-system solver pipeline.

Non-Hermitian systems are dilated to [[0, A], [A^T, 0]], the Hamiltonian is
exponentiated exactly in its eigenbasis, and phase estimation plus a keyed
ancilla rotation realize the eigenvalue inversion. Two drivers sit on top:
a step-by-step backward-Euler loop and a one-shot solve of the space-time
block system. The LCU machinery (prepare, select, unprepare) lives here too.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .cfd import (ConfigError, LinearSystem, build_be1_system,
                  build_be2_system, build_fe_system, fidelity, forcing,
                  initial_condition)
from .engine import apply_keyed_ry, iqft_program, keyed_ry_ops, run_program
from .gates import CircuitProgram, circuit_stats, diag, h, ublock
from .qsp import qsp1_synthesize
from .state import AmplitudeState, project_and_renormalize

SINGULAR_TOL = 1e-12


class PostSelectionError(RuntimeError):
    """Flag-register projection hit a (numerically) zero branch."""


class ConvergenceError(RuntimeError):
    pass


@dataclass
class HermitianSystem:
    """Dilated Hermitian embedding of a linear system.

    The eigen decomposition is computed once and cached; controlled powers of
    e^{iHt} come from exponentiating the eigenphases, so no Trotter error
    enters anywhere.
    """

    original: LinearSystem
    dilated_matrix: np.ndarray
    dilated_rhs: np.ndarray
    eigen_cache: tuple
    padded_dim: int
    _programs: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def orig_dim(self) -> int:
        return self.original.dim

    @property
    def n_system_qubits(self) -> int:
        return int(self.dilated_matrix.shape[0]).bit_length() - 1


def hermitian_dilation(system: LinearSystem) -> HermitianSystem:
    """Embed A into [[0, A],[A^T, 0]]; solving the embedding for rhs (b, 0)
    returns x = A^{-1} b in the second block.

    Applied uniformly, symmetric input included. When the dimension is not a
    power of two the matrix is first padded with mu*I, mu = sqrt(s_min*s_max),
    which leaves the condition number untouched.
    """
    a = np.asarray(system.dense, dtype=np.float64)
    n = a.shape[0]
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= SINGULAR_TOL * max(svals[0], 1.0):
        raise ValueError("system matrix is singular")
    dim = 1 << max(n - 1, 0).bit_length()
    if dim != n:
        mu = math.sqrt(svals[0] * svals[-1])
        apad = np.zeros((dim, dim))
        apad[:n, :n] = a
        apad[range(n, dim), range(n, dim)] = mu
        a = apad
    rhs = np.zeros(2 * dim)
    rhs[:n] = system.rhs
    hmat = np.zeros((2 * dim, 2 * dim))
    hmat[:dim, dim:] = a
    hmat[dim:, :dim] = a.T
    evals, evecs = np.linalg.eigh(hmat)
    return HermitianSystem(system, hmat, rhs, (evals, evecs), dim)


def hamiltonian_unitary(hsys, t0: float) -> np.ndarray:
    """U = e^{iHt0} = V diag(e^{i lambda t0}) V^T from the cached spectrum."""
    if isinstance(hsys, HermitianSystem):
        evals, evecs = hsys.eigen_cache
    else:
        hmat = np.asarray(hsys, dtype=np.float64)
        if not np.allclose(hmat, hmat.T, atol=1e-12):
            raise ValueError("Hamiltonian must be symmetric")
        evals, evecs = np.linalg.eigh(hmat)
    phases = np.exp(1j * evals * t0)
    return (evecs * phases) @ evecs.T


def suggest_t0(hsys: HermitianSystem, margin: float = 0.9) -> float:
    """Simulation time placing the largest eigenphase at margin/2 of a turn."""
    evals = hsys.eigen_cache[0]
    return margin * math.pi / float(np.max(np.abs(evals)))


@dataclass(frozen=True)
class QPEConfig:
    q_pe: int
    t0: float
    c_rot: float | None = None

    def __post_init__(self):
        if self.q_pe < 1:
            raise ValueError("need at least one phase-estimation qubit")
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.c_rot is None:
            object.__setattr__(self, "c_rot", 2.0 ** (-self.q_pe))
        if not 0 < self.c_rot <= 0.5:
            raise ValueError("c_rot must lie in (0, 0.5]")


@dataclass
class HHLResult:
    solution: np.ndarray
    success_probability: float
    raw_state: AmplitudeState | None
    config_used: QPEConfig
    gate_stats: dict

    def to_json(self) -> str:
        cfg = self.config_used
        return json.dumps({
            "solution": [float(v) for v in self.solution],
            "success_probability": self.success_probability,
            "config": {"q_pe": cfg.q_pe, "t0": cfg.t0, "c_rot": cfg.c_rot},
            "gate_stats": self.gate_stats,
        }, indent=2, sort_keys=True)


def _inversion_angles(qcfg: QPEConfig) -> np.ndarray:
    """Ancilla rotation per clock value; the clock is read as a q_pe-bit
    two's-complement phase fraction so [0.5, 1) turns mean negative
    eigenvalues. Zero and overscaled branches are skipped."""
    q = qcfg.q_pe
    size = 1 << q
    angles = np.zeros(size)
    for c in range(1, size):
        f = (c - size if c >= size // 2 else c) / size
        ratio = qcfg.c_rot / f
        if abs(ratio) <= 1.0:
            angles[c] = 2.0 * math.asin(ratio)
    return angles


def _core(hsys: HermitianSystem, qcfg: QPEConfig):
    key = (qcfg.q_pe, qcfg.t0, qcfg.c_rot)
    cached = hsys._programs.get(key)
    if cached is not None:
        return cached
    evals, evecs = hsys.eigen_cache
    q = qcfg.q_pe
    n_sys = hsys.n_system_qubits
    n = 1 + q + n_sys
    sys0 = 1 + q

    qpe = CircuitProgram(n)
    qpe.extend(h(1 + j) for j in range(q))
    qpe.append(ublock(sys0, evecs.T))
    for k in range(q):
        phases = np.exp(1j * evals * qcfg.t0 * (1 << k))
        qpe.append(diag(sys0, phases, controls=[(1 + (q - 1 - k), 1)]))
    qpe.append(ublock(sys0, evecs))
    qpe.extend(iqft_program(n, 1, q).ops)

    angles = _inversion_angles(qcfg)
    inv_qpe = qpe.inverse()
    explicit = CircuitProgram(n, list(qpe.ops))
    explicit.extend(keyed_ry_ops(0, 1, q, angles))
    explicit.extend(inv_qpe.ops)
    out = (qpe, angles, inv_qpe, circuit_stats(explicit))
    hsys._programs[key] = out
    return out


def hhl_program(hsys: HermitianSystem, qcfg: QPEConfig,
                b_prep: CircuitProgram) -> CircuitProgram:
    """The full pipeline as one explicit gate list (inversion unrolled into
    its controlled-Ry cascade). hhl_solve runs the same pipeline with the
    cascade fused into a single keyed sweep."""
    qpe, angles, inv_qpe, _ = _core(hsys, qcfg)
    n = qpe.n_qubits
    prog = CircuitProgram(n, list(b_prep.shifted(1 + qcfg.q_pe, n).ops))
    prog.extend(qpe.ops)
    prog.extend(keyed_ry_ops(0, 1, qcfg.q_pe, angles))
    prog.extend(inv_qpe.ops)
    return prog


def rhs_program(hsys: HermitianSystem, rhs: np.ndarray | None = None
                ) -> CircuitProgram:
    """State-preparation circuit for the (dilated, normalized) right side.

    Negative entries are handled by preparing the magnitude profile and
    stamping the sign pattern with one diagonal gate.
    """
    vec = np.zeros(hsys.dilated_matrix.shape[0])
    r = hsys.original.rhs if rhs is None else np.asarray(rhs, dtype=float)
    vec[:r.size] = r
    nrm = np.linalg.norm(vec)
    if nrm == 0.0:
        raise ValueError("zero right-hand side")
    vec /= nrm
    prog = qsp1_synthesize(np.abs(vec))
    if np.any(vec < 0):
        prog.append(diag(0, np.where(vec < 0, -1.0, 1.0)))
    return prog


def hhl_solve(hsys: HermitianSystem, qcfg: QPEConfig,
              b_prep: CircuitProgram, rhs: np.ndarray | None = None,
              keep_state: bool = True) -> HHLResult:
    """b_prep -> QPE -> keyed ancilla rotation -> inverse QPE -> post-select.

    The returned solution is rescaled by least squares against the physical
    right side; the pre-rescale vector is normalized.
    """
    qpe, angles, inv_qpe, stats = _core(hsys, qcfg)
    q = qcfg.q_pe
    n = qpe.n_qubits
    n_sys = hsys.n_system_qubits

    state = AmplitudeState(n)
    run_program(state, b_prep.shifted(1 + q, n))
    run_program(state, qpe)
    apply_keyed_ry(state, 0, 1, q, angles)
    run_program(state, inv_qpe)
    try:
        state, prob = project_and_renormalize(state, 0, 1)
    except ValueError as exc:
        raise PostSelectionError(str(exc)) from exc

    base = 1 << (n - 1)  # ancilla 1, clock 0
    block = state.vec[base:base + (1 << n_sys)]
    second = block[hsys.padded_dim:hsys.padded_dim + hsys.orig_dim]
    nrm = np.linalg.norm(second)
    if nrm <= 1e-14:
        raise PostSelectionError("solution block carries no amplitude")
    pivot = second[int(np.argmax(np.abs(second)))]
    xhat = (second * np.conj(pivot / abs(pivot))).real
    xhat = xhat / np.linalg.norm(xhat)

    mat = hsys.original.dense
    target = hsys.original.rhs if rhs is None else np.asarray(rhs, dtype=float)
    mx = mat @ xhat
    scale = float(mx @ target) / float(mx @ mx)
    return HHLResult(scale * xhat, prob, state if keep_state else None,
                     qcfg, {"core": stats, "b_prep": circuit_stats(b_prep)})


def residual(system: LinearSystem, solution: np.ndarray,
             rhs: np.ndarray | None = None) -> float:
    b = system.rhs if rhs is None else np.asarray(rhs, dtype=float)
    return float(np.linalg.norm(system.dense @ solution - b)
                 / np.linalg.norm(b))


@dataclass
class IterativeResult:
    profiles: list
    fidelities: list
    converged: bool
    steps: int

    @property
    def final(self) -> np.ndarray:
        return self.profiles[-1]


def iterative_be_driver(cfg, qcfg: QPEConfig, tol: float = 1e-6,
                        max_iters: int | None = None) -> IterativeResult:
    """March (I - A dt) u+ = u + f dt with one quantum solve per step until
    the profile settles; each new right side is rebuilt from the previous
    quantum output. Per-step fidelity is recorded against an exact classical
    march of the same scheme."""
    u = initial_condition(cfg)
    sys0 = build_be1_system(cfg, u)
    hsys = hermitian_dilation(sys0)
    mat = sys0.dense
    fdt = cfg.dt * forcing(cfg)
    if max_iters is None:
        try:
            max_iters = 10 * cfg.m
        except ConfigError:
            max_iters = 5000

    u_classical = u.copy()
    profiles = []
    fidelities = []
    for step in range(1, max_iters + 1):
        b = u + fdt
        res = hhl_solve(hsys, qcfg, rhs_program(hsys, b), rhs=b,
                        keep_state=False)
        u_next = res.solution
        u_classical = np.linalg.solve(mat, u_classical + fdt)
        profiles.append(u_next)
        fidelities.append(fidelity(u_next, u_classical))
        if float(np.max(np.abs(u_next - u))) <= tol:
            return IterativeResult(profiles, fidelities, True, step)
        u = u_next
    raise ConvergenceError(f"no settling within {max_iters} steps")


@dataclass
class OneShotResult:
    final_profile: np.ndarray
    space_time: np.ndarray
    hhl: HHLResult


def one_shot_driver(cfg, scheme: str, qcfg: QPEConfig) -> OneShotResult:
    """Solve the whole space-time block system in a single quantum call.

    The global scale is pinned to the known initial block (the first block of
    the solution must reproduce the inlet profile), which is the only
    boundary-consistent normalization available without a classical solve.
    """
    if scheme == "be2":
        system = build_be2_system(cfg)
    elif scheme == "fe":
        system = build_fe_system(cfg)
    else:
        raise ValueError(f"unknown one-shot scheme {scheme!r}")
    hsys = hermitian_dilation(system)
    res = hhl_solve(hsys, qcfg, rhs_program(hsys), keep_state=False)

    xn = res.solution / np.linalg.norm(res.solution)
    n_int = cfg.n_interior
    blocks = system.dim // n_int
    u0 = initial_condition(cfg)
    head = xn[:n_int]
    scale = float(head @ u0) / float(head @ head)
    space_time = (scale * xn).reshape(blocks, n_int)
    return OneShotResult(space_time[cfg.m].copy(), space_time, res)


def lcu_apply(terms, state) -> tuple:
    """Apply sum(beta_i U_i) via prepare / select / unprepare.

    Weights must be positive (absorb signs and phases into the unitaries);
    the term list is padded to a power of two with zero-weight identities.
    Returns (normalized output vector, success probability).
    """
    terms = list(terms)
    if not terms:
        raise ValueError("empty decomposition")
    betas = np.array([float(b) for b, _ in terms])
    if np.any(betas <= 0):
        raise ValueError("weights must be positive; absorb signs into the "
                         "unitaries")
    vec = np.asarray(state, dtype=np.complex128)
    dim = vec.size
    n_sys = dim.bit_length() - 1
    if 1 << n_sys != dim:
        raise ValueError("state length must be a power of two")
    vec = vec / np.linalg.norm(vec)

    count = 1 << max(len(terms) - 1, 0).bit_length()
    if count == 1:
        out = np.asarray(terms[0][1], dtype=np.complex128) @ vec
        return out, 1.0
    l_addr = count.bit_length() - 1
    weights = np.zeros(count)
    weights[:betas.size] = np.sqrt(betas)
    weights /= np.linalg.norm(weights)

    n = l_addr + n_sys
    st = AmplitudeState(n)
    st.vec[:dim] = vec
    prep = qsp1_synthesize(weights).shifted(0, n)
    run_program(st, prep)
    for i, (beta, u_mat) in enumerate(terms):
        controls = [(j, (i >> (l_addr - 1 - j)) & 1) for j in range(l_addr)]
        run_program(st, CircuitProgram(
            n, [ublock(l_addr, np.asarray(u_mat, dtype=np.complex128),
                       controls=controls)]))
    run_program(st, prep.inverse())

    prob = float(np.sum(np.abs(st.vec[:dim]) ** 2))
    if prob <= 1e-24:
        raise PostSelectionError("address register never returns to zero "
                                 "(terms cancel)")
    return st.vec[:dim] / math.sqrt(prob), prob


def central_difference_terms(dim: int, h: float) -> list:
    """(S+ - S-)/(2h) on a periodic register, signs absorbed."""
    eye = np.eye(dim)
    s_plus = np.roll(eye, 1, axis=1)
    s_minus = np.roll(eye, -1, axis=1)
    w = 1.0 / (2.0 * h)
    return [(w, s_plus), (w, -s_minus)]


def banded_shift_terms(matrix: np.ndarray, tol: float = 1e-12) -> tuple:
    """Decompose a banded Toeplitz matrix into signed periodic shifts on the
    doubled register. Acting on a vector supported in the first half, the
    wrap-around only ever lands in (or draws from) the zero padding, so the
    first half of the output equals the banded product exactly.

    Returns (terms, padded_dim). Non-Toeplitz bands raise ValueError; use
    pauli_terms as the general fallback.
    """
    mat = np.asarray(matrix, dtype=np.float64)
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise ValueError("matrix must be square")
    dim2 = 2 * n
    if 1 << (dim2.bit_length() - 1) != dim2:
        raise ValueError("doubled dimension must be a power of two")
    eye = np.eye(dim2)
    terms = []
    for d in range(-n + 1, n):
        band = np.diagonal(mat, offset=d)
        if np.max(np.abs(band)) <= tol:
            continue
        if np.max(band) - np.min(band) > tol * max(1.0, np.max(np.abs(band))):
            raise ValueError(f"band {d} is not constant; not Toeplitz")
        v = float(band[0])
        terms.append((abs(v), math.copysign(1.0, v) * np.roll(eye, d, axis=1)))
    if not terms:
        raise ValueError("matrix has no nonzero bands")
    return terms, dim2


_PAULI = (np.eye(2), np.array([[0, 1], [1, 0]], dtype=complex),
          np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]).astype(complex))


def pauli_terms(matrix: np.ndarray, tol: float = 1e-10) -> list:
    """General fallback: expand over Pauli strings, phases absorbed so every
    weight is positive."""
    mat = np.asarray(matrix, dtype=np.complex128)
    dim = mat.shape[0]
    k = dim.bit_length() - 1
    if mat.shape != (dim, dim) or 1 << k != dim:
        raise ValueError("matrix must be square with power-of-two size")
    terms = []
    for word in product(range(4), repeat=k):
        p = _PAULI[word[0]]
        for idx in word[1:]:
            p = np.kron(p, _PAULI[idx])
        coeff = complex(np.trace(p.conj().T @ mat)) / dim
        if abs(coeff) > tol:
            terms.append((abs(coeff), (coeff / abs(coeff)) * p))
    return terms
