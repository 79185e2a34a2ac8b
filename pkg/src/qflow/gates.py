"""Gate operations and circuit programs.

Qubit 0 is the most significant bit of the basis-state index: a register
|q0 q1 ... q_{n-1}> corresponds to amplitude index q0*2^(n-1) + ... + q_{n-1}.
Gates never materialise full 2^n x 2^n matrices; they are algebraic
descriptions consumed by the engine kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

UNITARY_TOL = 1e-10

# Canonical gate kinds. "cnot" is kept distinct from controlled-x so that
# CNOT counts can be read directly off a program.
KINDS = ("h", "x", "ry", "cnot", "phase", "cry", "cphase", "diag", "ublock", "swap")

_TEXT_KIND = {
    "h": "H", "x": "X", "ry": "RY", "cnot": "CNOT", "phase": "PHASE",
    "cry": "CRY", "cphase": "CPHASE", "diag": "DIAG", "ublock": "UBLOCK",
    "swap": "SWAP",
}
_KIND_FROM_TEXT = {v: k for k, v in _TEXT_KIND.items()}


def _normalize_controls(controls) -> tuple:
    out = []
    for c in controls:
        if isinstance(c, tuple):
            q, pol = c
        else:
            q, pol = c, 1
        if pol not in (0, 1):
            raise ValueError(f"control polarity must be 0 or 1, got {pol}")
        out.append((int(q), int(pol)))
    out.sort()
    return tuple(out)


@dataclass(frozen=True)
class GateOp:
    """One gate: kind, target qubits, (qubit, polarity) controls, parameters.

    ``payload`` holds diagonal entries for "diag" and a dense unitary for
    "ublock"; both act on the contiguous qubit block listed in ``targets``.
    """

    kind: str
    targets: tuple
    controls: tuple = ()
    params: tuple = ()
    payload: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qubits = list(self.targets) + [q for q, _ in self.controls]
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"duplicate qubit in {self.kind} op: {qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError("negative qubit index")

    @property
    def qubits(self) -> tuple:
        return tuple(self.targets) + tuple(q for q, _ in self.controls)

    def __str__(self) -> str:
        return op_to_text(self)


def h(q: int) -> GateOp:
    return GateOp("h", (int(q),))


def x(q: int, controls=()) -> GateOp:
    ctrls = _normalize_controls(controls)
    if len(ctrls) == 1 and ctrls[0][1] == 1:
        return GateOp("cnot", (int(q),), ctrls)
    return GateOp("x", (int(q),), ctrls)


def cnot(control: int, target: int) -> GateOp:
    return GateOp("cnot", (int(target),), ((int(control), 1),))


def ry(q: int, theta: float, controls=()) -> GateOp:
    ctrls = _normalize_controls(controls)
    kind = "cry" if ctrls else "ry"
    return GateOp(kind, (int(q),), ctrls, (float(theta),))


def cry(control, target: int, theta: float) -> GateOp:
    if isinstance(control, (int, np.integer)):
        control = (control,)
    return ry(target, theta, controls=control)


def phase(q: int, theta: float, controls=()) -> GateOp:
    ctrls = _normalize_controls(controls)
    kind = "cphase" if ctrls else "phase"
    return GateOp(kind, (int(q),), ctrls, (float(theta),))


def cphase(control, target: int, theta: float) -> GateOp:
    if isinstance(control, (int, np.integer)):
        control = (control,)
    return phase(target, theta, controls=control)


def swap(q1: int, q2: int, controls=()) -> GateOp:
    a, b = sorted((int(q1), int(q2)))
    return GateOp("swap", (a, b), _normalize_controls(controls))


def diag(start: int, entries, controls=()) -> GateOp:
    entries = np.ascontiguousarray(entries, dtype=np.complex128)
    nq = int(round(math.log2(entries.size)))
    if 2 ** nq != entries.size:
        raise ValueError("diagonal length must be a power of two")
    if np.max(np.abs(np.abs(entries) - 1.0)) > UNITARY_TOL:
        raise ValueError("diagonal entries must have unit modulus")
    entries.setflags(write=False)
    targets = tuple(range(int(start), int(start) + nq))
    return GateOp("diag", targets, _normalize_controls(controls), (), entries)


def ublock(start: int, matrix, controls=()) -> GateOp:
    matrix = np.ascontiguousarray(matrix, dtype=np.complex128)
    dim = matrix.shape[0]
    nq = int(round(math.log2(dim)))
    if matrix.shape != (dim, dim) or 2 ** nq != dim:
        raise ValueError("block matrix must be square with power-of-two size")
    err = np.max(np.abs(matrix.conj().T @ matrix - np.eye(dim)))
    if err > UNITARY_TOL:
        raise ValueError(f"block matrix is not unitary (deviation {err:.3e})")
    matrix.setflags(write=False)
    targets = tuple(range(int(start), int(start) + nq))
    return GateOp("ublock", targets, _normalize_controls(controls), (), matrix)


def inverse_op(op: GateOp) -> GateOp:
    """Inverse gate; self-inverse kinds pass through unchanged."""
    if op.kind in ("h", "x", "cnot", "swap"):
        return op
    if op.kind in ("ry", "cry", "phase", "cphase"):
        return GateOp(op.kind, op.targets, op.controls, (-op.params[0],))
    if op.kind == "diag":
        inv = np.conj(op.payload)
        inv.setflags(write=False)
        return GateOp("diag", op.targets, op.controls, (), inv)
    if op.kind == "ublock":
        inv = np.ascontiguousarray(op.payload.conj().T)
        inv.setflags(write=False)
        return GateOp("ublock", op.targets, op.controls, (), inv)
    raise ValueError(f"cannot invert kind {op.kind!r}")


def shift_op(op: GateOp, offset: int) -> GateOp:
    targets = tuple(q + offset for q in op.targets)
    controls = tuple((q + offset, p) for q, p in op.controls)
    return GateOp(op.kind, targets, controls, op.params, op.payload)


@dataclass
class CircuitProgram:
    """Ordered gate list over a fixed-width register."""

    n_qubits: int
    ops: list = field(default_factory=list)

    def __post_init__(self):
        for op in self.ops:
            self._check(op)

    def _check(self, op: GateOp):
        if max(op.qubits, default=-1) >= self.n_qubits:
            raise ValueError(f"op {op.kind} touches qubit beyond register "
                             f"width {self.n_qubits}")

    def append(self, op: GateOp) -> "CircuitProgram":
        self._check(op)
        self.ops.append(op)
        return self

    def extend(self, ops: Iterable[GateOp]) -> "CircuitProgram":
        for op in ops:
            self.append(op)
        return self

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self) -> Iterator[GateOp]:
        return iter(self.ops)

    def inverse(self) -> "CircuitProgram":
        return CircuitProgram(self.n_qubits, [inverse_op(op) for op in reversed(self.ops)])

    def shifted(self, offset: int, n_qubits: int) -> "CircuitProgram":
        """Embed into a wider register with all qubit indices offset."""
        return CircuitProgram(n_qubits, [shift_op(op, offset) for op in self.ops])

    def with_controls(self, controls) -> "CircuitProgram":
        ctrls = _normalize_controls(controls)
        out = []
        for op in self.ops:
            merged = _normalize_controls(tuple(op.controls) + ctrls)
            kind = op.kind
            if kind == "ry":
                kind = "cry"
            elif kind == "phase":
                kind = "cphase"
            elif kind == "x" and len(merged) == 1 and merged[0][1] == 1:
                kind = "cnot"
            out.append(GateOp(kind, op.targets, merged, op.params, op.payload))
        return CircuitProgram(self.n_qubits, out)

    def stats(self) -> dict:
        return circuit_stats(self)

    def to_text(self) -> str:
        lines = [f"qubits {self.n_qubits}"]
        lines.extend(op_to_text(op) for op in self.ops)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CircuitProgram":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines or not lines[0].startswith("qubits"):
            raise ValueError("circuit text must start with a 'qubits N' line")
        n = int(lines[0].split()[1])
        prog = cls(n)
        for ln in lines[1:]:
            prog.append(op_from_text(ln))
        return prog


def op_to_text(op: GateOp) -> str:
    """One-line form: KIND target(s) [controls as q:pol] [params]."""
    parts = [_TEXT_KIND[op.kind]]
    if op.kind in ("diag", "ublock"):
        parts.append(str(op.targets[0]))
        parts.append(str(len(op.targets)))
    else:
        parts.extend(str(q) for q in op.targets)
    parts.extend(f"{q}:{p}" for q, p in op.controls)
    parts.extend(repr(float(v)) for v in op.params)
    if op.kind == "diag":
        parts.extend(f"{float(z.real)!r},{float(z.imag)!r}"
                     for z in op.payload)
    elif op.kind == "ublock":
        parts.extend(f"{float(z.real)!r},{float(z.imag)!r}"
                     for z in op.payload.ravel())
    return " ".join(parts)


def op_from_text(line: str) -> GateOp:
    tokens = line.split()
    kind = _KIND_FROM_TEXT.get(tokens[0])
    if kind is None:
        raise ValueError(f"unknown gate token {tokens[0]!r}")
    rest = tokens[1:]

    def split_controls(toks):
        ctrls, other = [], []
        for t in toks:
            if ":" in t:
                q, p = t.split(":")
                ctrls.append((int(q), int(p)))
            else:
                other.append(t)
        return ctrls, other

    if kind in ("diag", "ublock"):
        start, nq = int(rest[0]), int(rest[1])
        ctrls, other = split_controls(rest[2:])
        vals = np.array([complex(*map(float, t.split(","))) for t in other])
        if kind == "diag":
            return diag(start, vals, ctrls)
        return ublock(start, vals.reshape(2 ** nq, 2 ** nq), ctrls)
    if kind == "swap":
        ctrls, other = split_controls(rest)
        return swap(int(other[0]), int(other[1]), ctrls)

    ctrls, other = split_controls(rest)
    target = int(other[0])
    params = [float(t) for t in other[1:]]
    if kind in ("h",):
        return h(target)
    if kind in ("x", "cnot"):
        return x(target, ctrls)
    if kind in ("ry", "cry"):
        return ry(target, params[0], ctrls)
    if kind in ("phase", "cphase"):
        return phase(target, params[0], ctrls)
    raise ValueError(f"cannot parse line {line!r}")


def circuit_depth(program: CircuitProgram) -> int:
    """Greedy layering: an op starts one layer after the busiest qubit it touches."""
    level = [0] * program.n_qubits
    depth = 0
    for op in program.ops:
        qs = op.qubits
        layer = 1 + max((level[q] for q in qs), default=0)
        for q in qs:
            level[q] = layer
        depth = max(depth, layer)
    return depth


def circuit_stats(program: CircuitProgram) -> dict:
    by_kind = {}
    for op in program.ops:
        by_kind[op.kind] = by_kind.get(op.kind, 0) + 1
    return {
        "n_qubits": program.n_qubits,
        "total_ops": len(program.ops),
        "by_kind": by_kind,
        "cnot_count": by_kind.get("cnot", 0),
        "depth": circuit_depth(program),
    }
