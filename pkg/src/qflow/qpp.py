"""Quantum post-processing of velocity fields.

Given an amplitude-encoded velocity profile this module extracts the wall
dissipation rate nu * mean((du/dy)^2) without reading the field out
term-by-term: a derivative stage (spectral for periodic grids, an LCU of
shifts for wall-bounded ones), a swap-test comparator whose success
probability encodes each point's derivative magnitude, amplitude estimation
of that probability into a phase register, a keyed squaring rotation, and a
Hadamard average that collects the grid mean into a single amplitude.

The derivative stage is simulated on its own register and its output handed
to the estimator as rotation angles; the estimator itself (comparator,
phase read, squaring, uncompute, average) runs as one composed circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .engine import (apply_keyed_ry, iqft_program, keyed_ry_ops, qft_program,
                     run_program)
from .gates import CircuitProgram, diag, h, swap, ublock
from .qlsa import (PostSelectionError, banded_shift_terms,
                   central_difference_terms, lcu_apply, pauli_terms)
from .state import AmplitudeState

__all__ = [
    "QPPRegisters", "DerivativeOp", "spectral_derivative_op",
    "lcu_fd_derivative_op", "interior_difference_matrix", "stencil_matrix",
    "quantum_derivative", "derivative_vector", "build_value_oracle",
    "swap_test_block", "qadc_phase_estimation", "phase_register_distribution",
    "squaring_angles", "squaring_rotation", "DissipationResult",
    "dissipation", "classical_dissipation", "analytic_dissipation",
    "dissipation_sweep", "sweep_to_csv",
]


# ---------------------------------------------------------------------------
# register bookkeeping


@dataclass(frozen=True)
class QPPRegisters:
    """Qubit layout for the estimator pipeline.

    Order (most significant first): squaring ancilla, r-bit phase register,
    address register, two-qubit value/reference pair, two comparator
    ancillas. All registers are disjoint by construction.
    """

    r: int = 8
    n_address: int = 3

    def __post_init__(self):
        if self.r < 3:
            raise ValueError("phase register needs at least 3 bits")
        if self.n_address < 1:
            raise ValueError("need at least one address qubit")

    @property
    def q_up(self) -> int:
        return 0

    @property
    def q_phase(self) -> tuple:
        return tuple(range(1, 1 + self.r))

    @property
    def q_address(self) -> tuple:
        return tuple(range(1 + self.r, 1 + self.r + self.n_address))

    @property
    def q_value(self) -> tuple:
        base = 1 + self.r + self.n_address
        return (base, base + 1)

    @property
    def q_a1(self) -> int:
        return 3 + self.r + self.n_address

    @property
    def q_a2(self) -> int:
        return 4 + self.r + self.n_address

    @property
    def total(self) -> int:
        return 5 + self.r + self.n_address

    @property
    def n_points(self) -> int:
        return 1 << self.n_address


# ---------------------------------------------------------------------------
# derivative stage


@dataclass(frozen=True)
class DerivativeOp:
    """A grid-derivative operator in one of two quantum encodings.

    spectral: diagonal multiplier in Fourier space, applied between a QFT
    pair with the magnitudes written onto a flag ancilla.
    lcu-fd: finite-difference matrix as a positive-weight sum of unitaries.
    """

    method: str
    n_points: int
    lambda_diag: np.ndarray | None = None
    terms: tuple = ()
    padded_dim: int = 0
    scale: float = 0.0

    def __post_init__(self):
        if self.method not in ("spectral", "lcu-fd"):
            raise ValueError(f"unknown derivative method {self.method!r}")


def spectral_derivative_op(n_points: int) -> DerivativeOp:
    """d/dy on a periodic unit interval sampled at n_points.

    The Fourier multiplier is purely imaginary, i*2*pi*k with k folded to
    (-N/2, N/2]; the unmatched Nyquist mode gets exactly zero.
    """
    n = n_points.bit_length() - 1
    if 1 << n != n_points or n < 1:
        raise ValueError("n_points must be a power of two >= 2")
    k = np.arange(n_points)
    k_signed = np.where(k > n_points // 2, k - n_points, k).astype(float)
    k_signed[n_points // 2] = 0.0
    lam = 2j * np.pi * k_signed
    return DerivativeOp("spectral", n_points, lambda_diag=lam,
                        padded_dim=n_points,
                        scale=float(np.max(np.abs(lam))))


def interior_difference_matrix(n: int, grid_h: float) -> np.ndarray:
    """Central difference on interior points with homogeneous walls.

    The rows next to the walls read the implicit zero boundary values, so
    the matrix stays Toeplitz and decomposes into two shifts.
    """
    m = np.zeros((n, n))
    w = 1.0 / (2.0 * grid_h)
    for i in range(n - 1):
        m[i, i + 1] = w
        m[i + 1, i] = -w
    return m


def stencil_matrix(n: int, grid_h: float) -> np.ndarray:
    """Second-order first-derivative stencil: central inside, one-sided at
    the two ends. Used as the classical post-processing reference."""
    if n < 3:
        raise ValueError("stencil needs at least 3 points")
    m = interior_difference_matrix(n, grid_h)
    w = 1.0 / (2.0 * grid_h)
    m[0, :3] = np.array([-3.0, 4.0, -1.0]) * w
    m[-1, -3:] = np.array([1.0, -4.0, 3.0]) * w
    return m


def lcu_fd_derivative_op(n_points: int, grid_h: float,
                         matrix: np.ndarray | None = None,
                         periodic: bool = False) -> DerivativeOp:
    """Finite-difference derivative as a sum of unitaries.

    Default is the wall-bounded central stencil (zero walls), which embeds
    exactly on a doubled register via signed shifts. A periodic grid uses
    the two cyclic shifts directly; an explicit non-Toeplitz matrix falls
    back to a Pauli expansion.
    """
    if periodic and matrix is not None:
        raise ValueError("pass either periodic=True or an explicit matrix")
    if periodic:
        terms = central_difference_terms(n_points, grid_h)
        return DerivativeOp("lcu-fd", n_points, terms=tuple(terms),
                            padded_dim=n_points,
                            scale=float(sum(b for b, _ in terms)))
    if matrix is None:
        matrix = interior_difference_matrix(n_points, grid_h)
        terms, padded = banded_shift_terms(matrix)
    else:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (n_points, n_points):
            raise ValueError("matrix shape does not match n_points")
        try:
            terms, padded = banded_shift_terms(matrix)
        except ValueError:
            terms, padded = pauli_terms(matrix), n_points
    return DerivativeOp("lcu-fd", n_points, terms=tuple(terms),
                        padded_dim=padded,
                        scale=float(sum(b for b, _ in terms)))


def quantum_derivative(u_state: AmplitudeState,
                       op: DerivativeOp) -> tuple[AmplitudeState, float]:
    """Apply the derivative operator; returns (state, success probability).

    The output amplitudes are proportional to the grid derivative with
    constant op.scale / sqrt(prob); a vanishing success probability is the
    zero-derivative signal (constant fields) and returns a blank state.
    """
    n = u_state.n
    if 1 << n != op.n_points:
        raise ValueError("state width does not match the operator")
    if op.method == "spectral":
        return _spectral_derivative(u_state, op)
    vec = np.zeros(op.padded_dim, dtype=np.complex128)
    vec[:op.n_points] = u_state.vec
    try:
        out_vec, prob = lcu_apply(list(op.terms), vec)
    except PostSelectionError:
        return AmplitudeState(op.padded_dim.bit_length() - 1), 0.0
    out = AmplitudeState(op.padded_dim.bit_length() - 1)
    out.vec[:] = out_vec
    return out, prob


def _spectral_derivative(u_state, op):
    n = u_state.n
    dim = op.n_points
    st = AmplitudeState(1 + n)
    st.vec[:dim] = u_state.vec

    mags = np.abs(op.lambda_diag)
    phases = np.where(mags > 0.0, op.lambda_diag / np.where(mags > 0, mags, 1.0),
                      1.0).astype(np.complex128)
    # engine's forward transform kernel is e^{+2 pi i jk/N}, so the inverse
    # plays the analysis role and the forward one resynthesizes
    run_program(st, iqft_program(1 + n, start=1, count=n))
    run_program(st, CircuitProgram(1 + n, [diag(1, phases)]))
    apply_keyed_ry(st, target=0, key_start=1, key_count=n,
                   angles=2.0 * np.arcsin(mags / op.scale))
    run_program(st, qft_program(1 + n, start=1, count=n))

    prob = float(np.sum(np.abs(st.vec[dim:]) ** 2))
    if prob <= 1e-24:
        return AmplitudeState(n), 0.0
    out = AmplitudeState(n)
    out.vec[:] = st.vec[dim:] / math.sqrt(prob)
    return out, prob


def derivative_vector(op: DerivativeOp, state: AmplitudeState,
                      prob: float, input_norm: float = 1.0) -> np.ndarray:
    """Undo the encoding normalizations: the physical derivative values."""
    if prob == 0.0:
        return np.zeros(op.n_points)
    block = state.vec[:op.n_points]
    return np.real_if_close(block * math.sqrt(prob) * op.scale * input_norm,
                            tol=1e6)


# ---------------------------------------------------------------------------
# swap-test comparator

_WORK_DIM = 16  # value pair + two ancillas


def _comparator_block(value: float) -> np.ndarray:
    """Dense 16x16 comparator A on (value, reference, a1, a2): prepare
    cos(theta/2)=value on the value qubit, then a swap test against the
    |0> reference driven by a2. P(a2=0) = (1 + value^2)/2."""
    theta = 2.0 * math.acos(min(1.0, max(-1.0, value)))
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    ry = np.array([[c, -s], [s, c]])
    prep = np.kron(ry, np.eye(8))
    had = np.kron(np.eye(8), np.array([[1, 1], [1, -1]]) / math.sqrt(2))
    cswap = np.eye(_WORK_DIM)
    for idx in range(_WORK_DIM):
        b_val, b_ref = (idx >> 3) & 1, (idx >> 2) & 1
        if (idx & 1) and b_val != b_ref:
            j = idx ^ 0b1100
            cswap[:, idx] = 0.0
            cswap[j, idx] = 1.0
    return had @ cswap @ had @ prep


def _grover_block(value: float) -> np.ndarray:
    """One amplitude-amplification step for the comparator: reflect about
    the all-zeros input and flip the sign of the a2=1 branch. Eigenphase
    fractions are {beta, 1-beta} with sin(pi*beta) = sqrt((1+value^2)/2)."""
    a = _comparator_block(value)
    s0 = np.eye(_WORK_DIM)
    s0[0, 0] = -1.0
    s_good = np.diag([1.0 if (i & 1) == 0 else -1.0
                      for i in range(_WORK_DIM)])
    return a @ s0 @ a.conj().T @ s_good


def _padded_values(values, n_address: int) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    if values.size > (1 << n_address):
        raise ValueError("more values than addresses")
    if np.max(np.abs(values)) > 1.0 + 1e-12:
        raise ValueError("derivative values must be scaled into [-1, 1]")
    out = np.zeros(1 << n_address)
    out[:values.size] = np.clip(values, -1.0, 1.0)
    return out


def build_value_oracle(values, regs: QPPRegisters) -> CircuitProgram:
    """Keyed rotation writing cos(theta/2)=values[address] onto the value
    qubit; the stand-in for a solver-supplied state oracle."""
    padded = _padded_values(values, regs.n_address)
    angles = 2.0 * np.arccos(padded)
    ops = keyed_ry_ops(regs.q_value[0], regs.q_address[0], regs.n_address,
                       angles, skip_zero=True)
    return CircuitProgram(regs.total, ops)


def _swap_test_ops(regs: QPPRegisters) -> list:
    return [h(regs.q_a2),
            swap(regs.q_value[0], regs.q_value[1], controls=[(regs.q_a2, 1)]),
            h(regs.q_a2)]


def swap_test_program(values, regs: QPPRegisters,
                      oracle: CircuitProgram | None = None) -> CircuitProgram:
    """Value oracle followed by the swap test (no measurement)."""
    if oracle is None:
        oracle = build_value_oracle(values, regs)
    if oracle.n_qubits != regs.total:
        raise ValueError("oracle register width does not match the layout")
    return CircuitProgram(regs.total, list(oracle.ops) + _swap_test_ops(regs))


def swap_test_block(u_state: AmplitudeState, regs: QPPRegisters,
                    values=None,
                    oracle: CircuitProgram | None = None) -> AmplitudeState:
    """Run the comparator on an address-register state.

    u_state may be the bare address state (embedded with all ancillas in
    zero) or a full-width state. Returns the joint state; P(a2=0) at
    address c is (1 + values[c]^2)/2.
    """
    if u_state.n == regs.n_address:
        st = AmplitudeState(regs.total)
        st.vec[:] = 0.0
        stride = 1 << (regs.total - 1 - regs.q_address[-1])
        for c, amp in enumerate(u_state.vec):
            st.vec[c * stride] = amp
    elif u_state.n == regs.total:
        st = u_state
    else:
        raise ValueError("state must span the address register or the full "
                         "layout")
    return run_program(st, swap_test_program(values, regs, oracle))


# ---------------------------------------------------------------------------
# amplitude estimation of the comparator probability


def _schur_blocks(values, regs: QPPRegisters):
    """Per-address Schur factors of the amplification step, assembled into
    one block-diagonal change of basis plus its eigenphase diagonal."""
    padded = _padded_values(values, regs.n_address)
    qs, lams = [], []
    for v in padded:
        t_mat, q_mat = scipy.linalg.schur(_grover_block(v), output="complex")
        lam = np.diag(t_mat)
        if np.max(np.abs(t_mat - np.diag(lam))) > 1e-8:
            raise RuntimeError("amplification step failed to diagonalize")
        qs.append(q_mat)
        lams.append(lam / np.abs(lam))
    return scipy.linalg.block_diag(*qs), np.concatenate(lams)


def qadc_program(values, regs: QPPRegisters) -> CircuitProgram:
    """Phase estimation of the amplification step onto the phase register.

    Controlled powers ride on one change of basis: conjugate the whole
    address+work block once, key unit-modulus eigenphase powers off each
    clock bit, and undo the basis change.
    """
    q_full, lam = _schur_blocks(values, regs)
    start = regs.q_address[0]
    ops = [h(q) for q in regs.q_phase]
    ops.append(ublock(start, q_full.conj().T))
    for k in range(regs.r):
        powered = lam ** (1 << k)
        ops.append(diag(start, powered / np.abs(powered),
                        controls=[(regs.q_phase[regs.r - 1 - k], 1)]))
    ops.append(ublock(start, q_full))
    return CircuitProgram(regs.total, ops + list(
        iqft_program(regs.total, start=regs.q_phase[0], count=regs.r).ops))


def qadc_phase_estimation(state: AmplitudeState, regs: QPPRegisters,
                          values) -> AmplitudeState:
    """Run the phase read in place on a post-comparator state."""
    return run_program(state, qadc_program(values, regs))


def phase_register_distribution(state: AmplitudeState,
                                regs: QPPRegisters) -> np.ndarray:
    """Marginal probability of each phase-register value."""
    shape = (2, 1 << regs.r, 1 << (regs.total - 1 - regs.r))
    probs = np.abs(state.vec.reshape(shape)) ** 2
    return probs.sum(axis=(0, 2))


# ---------------------------------------------------------------------------
# squaring rotation and the averaged readout


def squaring_angles(r: int) -> np.ndarray:
    """Rotation table gamma -> 2*arcsin(2*sin^2(pi*gamma) - 1).

    For a phase code carrying beta with sin^2(pi*beta) = (1 + v^2)/2 the
    target amplitude is exactly v^2; values outside the comparator image
    clamp to zero rotation.
    """
    gamma = np.arange(1 << r) / (1 << r)
    amp = 2.0 * np.sin(np.pi * gamma) ** 2 - 1.0
    return 2.0 * np.arcsin(np.clip(amp, 0.0, 1.0))


def squaring_rotation(state: AmplitudeState,
                      regs: QPPRegisters) -> AmplitudeState:
    """Write the squared comparator value onto the readout ancilla, keyed
    by the phase register."""
    return apply_keyed_ry(state, target=regs.q_up,
                          key_start=regs.q_phase[0], key_count=regs.r,
                          angles=squaring_angles(regs.r))


@dataclass
class DissipationResult:
    """Dissipation estimate with the bookkeeping needed to audit it."""

    epsilon: float
    mean_square: float
    readout_amplitude: float
    derivative_scale: float
    derivative_prob: float
    r: int
    n_address: int
    mode: str = "staged-derivative/composed-estimator"

    def __float__(self) -> float:  # pragma: no cover - convenience
        return self.epsilon


def _estimator_amplitude(values, regs: QPPRegisters) -> complex:
    """Composed circuit: uniform addresses, comparator, phase read, squaring
    rotation, exact uncompute, Hadamard average. Returns the amplitude at
    (readout=1, everything else 0), which is mean(values^2) over the padded
    address space up to phase-quantization leakage."""
    address_h = CircuitProgram(regs.total, [h(q) for q in regs.q_address])
    comparator = swap_test_program(values, regs)
    phase_read = qadc_program(values, regs)

    st = AmplitudeState(regs.total)
    run_program(st, address_h)
    run_program(st, comparator)
    run_program(st, phase_read)
    squaring_rotation(st, regs)
    run_program(st, phase_read.inverse())
    run_program(st, comparator.inverse())
    run_program(st, address_h)
    return complex(st.vec[1 << (regs.total - 1)])


def dissipation(u_values, nu: float, grid_h: float, r: int = 8,
                op: DerivativeOp | None = None) -> DissipationResult:
    """Dissipation rate nu * mean((du/dy)^2) through the quantum pipeline.

    The derivative runs as its own stage (LCU by default); its values are
    rescaled into [-1, 1] and drive the composed estimator. All encoding
    normalizations are undone explicitly at the end.
    """
    u = np.asarray(u_values, dtype=float).ravel()
    n = u.size.bit_length() - 1
    if 1 << n != u.size:
        raise ValueError("profile length must be a power of two")
    if op is None:
        op = lcu_fd_derivative_op(u.size, grid_h)

    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        return DissipationResult(0.0, 0.0, 0.0, 0.0, 0.0, r, n)
    u_state = AmplitudeState(n)
    u_state.vec[:] = u / norm
    d_state, prob = quantum_derivative(u_state, op)
    deriv = derivative_vector(op, d_state, prob, input_norm=norm)
    if prob == 0.0:
        return DissipationResult(0.0, 0.0, 0.0, 0.0, 0.0, r, n)

    scale = float(np.max(np.abs(deriv)))
    regs = QPPRegisters(r=r, n_address=n)
    amp = _estimator_amplitude(np.real(deriv) / scale, regs)
    mean_sq = amp.real * (1 << n) / u.size * scale ** 2
    return DissipationResult(
        epsilon=float(nu * mean_sq), mean_square=float(mean_sq),
        readout_amplitude=float(amp.real), derivative_scale=scale,
        derivative_prob=prob, r=r, n_address=n)


def classical_dissipation(u_values, nu: float, grid_h: float,
                          matrix: np.ndarray | None = None) -> float:
    """Reference value from classical central differencing of the profile."""
    u = np.asarray(u_values, dtype=float).ravel()
    if matrix is None:
        matrix = interior_difference_matrix(u.size, grid_h)
    return float(nu * np.mean((matrix @ u) ** 2))


def analytic_dissipation(re: float, dpdx: float = -2.0) -> float:
    """Steady channel flow u = a*y*(1-y), a = -dpdx*re/2: the dissipation
    integrates to nu * a^2 / 3."""
    amp = -dpdx * re / 2.0
    return amp ** 2 / (3.0 * re)


def dissipation_sweep(re_values, n_points: int = 8, r: int = 8,
                      q_pe: int = 8, dpdx: float = -2.0) -> list[dict]:
    """Dissipation of the steady quantum solution across Reynolds numbers.

    Each row solves the steady viscous balance on n_points interior nodes
    with the linear-system pipeline, post-processes quantum and classical
    profiles identically, and carries the analytic value alongside.
    """
    import scipy.sparse

    from .cfd import FlowConfig, LinearSystem, build_laplacian
    from .qlsa import (QPEConfig, hermitian_dilation, hhl_solve, residual,
                       rhs_program, suggest_t0)

    cfg = FlowConfig(flow="poiseuille", n_grid=n_points + 2, dpdx=dpdx,
                     m_steps=1)
    rows = []
    for re in re_values:
        lap = build_laplacian(FlowConfig(flow="poiseuille",
                                         n_grid=n_points + 2, re=re,
                                         dpdx=dpdx, m_steps=1))
        matrix = (-lap / re).tocsr()
        rhs = np.full(n_points, -dpdx, dtype=float)
        system = LinearSystem(scipy.sparse.csr_matrix(matrix), rhs, "steady")
        hsys = hermitian_dilation(system)

        b_prep = rhs_program(hsys)
        best = None
        for t0 in np.linspace(0.3, 1.0, 8) * suggest_t0(hsys):
            try:
                res = hhl_solve(hsys, QPEConfig(q_pe=q_pe, t0=float(t0)),
                                b_prep, keep_state=False)
            except PostSelectionError:
                continue
            err = residual(system, res.solution)
            if best is None or err < best[0]:
                best = (err, res.solution)
        if best is None:
            raise PostSelectionError("no usable phase scale for the steady "
                                     "solve")
        u_q = best[1]
        u_c = np.linalg.solve(matrix.toarray(), rhs)
        rows.append({
            "re": float(re),
            "epsilon_quantum": dissipation(u_q, 1.0 / re, cfg.h, r=r).epsilon,
            "epsilon_classical": classical_dissipation(u_c, 1.0 / re, cfg.h),
            "epsilon_analytic": analytic_dissipation(re, dpdx),
        })
    return rows


def sweep_to_csv(rows) -> str:
    lines = ["re,epsilon_quantum,epsilon_classical,epsilon_analytic"]
    for row in rows:
        lines.append(",".join(repr(float(row[k])) for k in
                              ("re", "epsilon_quantum", "epsilon_classical",
                               "epsilon_analytic")))
    return "\n".join(lines) + "\n"
