"""Gate application engine and QFT circuit builders."""

from __future__ import annotations

import math

import numpy as np

from .backend import get_num_threads, kernels
from .gates import CircuitProgram, GateOp, cphase, h, ry, swap
from .state import AmplitudeState

_SQRT1_2 = 1.0 / math.sqrt(2.0)


def _control_mask(n: int, controls) -> tuple:
    cmask = 0
    cval = 0
    for q, pol in controls:
        bit = 1 << (n - 1 - q)
        cmask |= bit
        if pol:
            cval |= bit
    return cmask, cval


def apply_gate(state: AmplitudeState, op: GateOp,
               threads: int | None = None) -> AmplitudeState:
    """Apply one gate in place and return the state."""
    n = state.n
    nt = get_num_threads() if threads is None else threads
    if max(op.qubits, default=-1) >= n:
        raise ValueError(f"op {op.kind} does not fit a {n}-qubit register")
    cmask, cval = _control_mask(n, op.controls)
    vec = state.vec
    kind = op.kind

    if kind == "h":
        p = n - 1 - op.targets[0]
        kernels.apply_1q(vec, n, p, _SQRT1_2, _SQRT1_2, _SQRT1_2, -_SQRT1_2,
                         cmask, cval, nt)
    elif kind in ("x", "cnot"):
        p = n - 1 - op.targets[0]
        kernels.apply_1q(vec, n, p, 0.0, 1.0, 1.0, 0.0, cmask, cval, nt)
    elif kind in ("ry", "cry"):
        half = 0.5 * op.params[0]
        c, s = math.cos(half), math.sin(half)
        p = n - 1 - op.targets[0]
        kernels.apply_1q(vec, n, p, c, -s, s, c, cmask, cval, nt)
    elif kind in ("phase", "cphase"):
        p = n - 1 - op.targets[0]
        factor = complex(math.cos(op.params[0]), math.sin(op.params[0]))
        kernels.apply_phase(vec, n, p, factor, cmask, cval, nt)
    elif kind == "swap":
        p1 = n - 1 - op.targets[0]
        p2 = n - 1 - op.targets[1]
        kernels.apply_swap(vec, n, p1, p2, cmask, cval, nt)
    elif kind == "diag":
        plo = n - op.targets[-1] - 1
        kernels.apply_diag(vec, n, plo, len(op.targets), op.payload,
                           cmask, cval, nt)
    elif kind == "ublock":
        plo = n - op.targets[-1] - 1
        kernels.apply_block(vec, n, plo, len(op.targets), op.payload,
                            cmask, cval, nt)
    else:  # pragma: no cover - KINDS is closed
        raise ValueError(f"unhandled gate kind {kind!r}")
    return state


def run_program(state: AmplitudeState, program: CircuitProgram,
                threads: int | None = None) -> AmplitudeState:
    if program.n_qubits != state.n:
        raise ValueError("program register width does not match state")
    for op in program.ops:
        apply_gate(state, op, threads)
    return state


def apply_keyed_ry(state: AmplitudeState, target: int, key_start: int,
                   key_count: int, angles: np.ndarray, controls=(),
                   threads: int | None = None) -> AmplitudeState:
    """Ry(angles[v]) on `target` for each value v of the key qubit block.

    Equivalent to the controlled-Ry cascade from keyed_ry_ops, fused into a
    single sweep.
    """
    n = state.n
    nt = get_num_threads() if threads is None else threads
    angles = np.asarray(angles, dtype=np.float64)
    if angles.size != 1 << key_count:
        raise ValueError("need one angle per key value")
    cmask, cval = _control_mask(n, controls)
    pt = n - 1 - target
    klo = n - (key_start + key_count - 1) - 1
    cosv = np.cos(0.5 * angles)
    sinv = np.sin(0.5 * angles)
    kernels.apply_keyed_ry(state.vec, n, pt, klo, key_count, cosv, sinv,
                           cmask, cval, nt)
    return state


def keyed_ry_ops(target: int, key_start: int, key_count: int,
                 angles: np.ndarray, skip_zero: bool = True) -> list:
    """The keyed rotation as explicit controlled-Ry ops (one per key value)."""
    ops = []
    for value in range(1 << key_count):
        theta = float(angles[value])
        if skip_zero and theta == 0.0:
            continue
        controls = [(key_start + j, (value >> (key_count - 1 - j)) & 1)
                    for j in range(key_count)]
        ops.append(ry(target, theta, controls=controls))
    return ops


def qft_program(n_qubits: int, start: int = 0, count: int | None = None,
                inverse: bool = False) -> CircuitProgram:
    """DFT over the contiguous qubit block [start, start+count).

    Forward kernel is e^{+2 pi i jk/N}; the inverse program is the exact
    reversed-adjoint circuit.
    """
    if count is None:
        count = n_qubits - start
    if count < 1 or start < 0 or start + count > n_qubits:
        raise ValueError("qubit range out of bounds")
    prog = CircuitProgram(n_qubits)
    for i in range(count):
        prog.append(h(start + i))
        for j in range(i + 1, count):
            angle = math.pi / (1 << (j - i))
            prog.append(cphase(start + j, start + i, angle))
    for i in range(count // 2):
        prog.append(swap(start + i, start + count - 1 - i))
    if inverse:
        return prog.inverse()
    return prog


def iqft_program(n_qubits: int, start: int = 0,
                 count: int | None = None) -> CircuitProgram:
    return qft_program(n_qubits, start, count, inverse=True)


def apply_qft(state: AmplitudeState, start: int = 0, count: int | None = None,
              inverse: bool = False,
              threads: int | None = None) -> AmplitudeState:
    return run_program(state, qft_program(state.n, start, count, inverse),
                       threads)


def apply_iqft(state: AmplitudeState, start: int = 0,
               count: int | None = None,
               threads: int | None = None) -> AmplitudeState:
    return apply_qft(state, start, count, inverse=True, threads=threads)
