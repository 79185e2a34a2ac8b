"""State-preparation circuit synthesis for real nonnegative targets.

Two methods:

* probability-tree cascade: one uniformly controlled Ry level per qubit,
  best for dense log-concave profiles; CNOT cost 2^n - 2.
* sparse path merging: walks the state's nonzero support, folding
  equal-amplitude neighbors and merging the closest index pairs until a
  single basis state remains, then inverts. Emits only single-qubit gates
  and CNOTs and reserves one ancilla line; CNOT cost scales with the
  number of decision-diagram paths rather than with 2^n.

Amplitudes are taken real and nonnegative (velocity profiles in scope are);
signs and phases are out of scope.
"""

import math

import numpy as np

from .gates import CircuitProgram, cnot, inverse_op, ry, x

AMP_TOL = 1e-12


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def mottonen_ucry(target: int, controls: list[int],
                  thetas: np.ndarray) -> list:
    """Uniformly controlled Ry as a CNOT + Ry ladder.

    controls are listed most-significant key bit first; thetas is indexed
    by the key value. Exactly len(thetas) CNOTs and Ry's (none for no
    controls).
    """
    L = len(controls)
    thetas = np.asarray(thetas, dtype=float)
    if thetas.shape != (1 << L,):
        raise ValueError("need one angle per control key")
    if L == 0:
        return [] if abs(thetas[0]) < AMP_TOL else [ry(target, thetas[0])]
    K = 1 << L
    signs = np.empty((K, K))
    for i in range(K):
        g = _gray(i)
        for j in range(K):
            signs[i, j] = -1.0 if bin(j & g).count("1") & 1 else 1.0
    phis = (signs @ thetas) / K
    ops = []
    for i in range(K):
        if abs(phis[i]) > AMP_TOL:
            ops.append(ry(target, phis[i]))
        b = ((i + 1) & -(i + 1)).bit_length() - 1 if i < K - 1 else L - 1
        ops.append(cnot(controls[L - 1 - b], target))
    return ops


class ProbabilityTree:
    """Partial probability sums per bit level; levels[0] is the root."""

    def __init__(self, levels: list[np.ndarray]):
        self.levels = levels
        for lv in range(len(levels) - 1):
            parents = levels[lv]
            children = levels[lv + 1]
            pair_sum = children[0::2] + children[1::2]
            if np.max(np.abs(parents - pair_sum)) > 1e-12:
                raise ValueError("parent/child probability mismatch")
        if abs(levels[0][0] - 1.0) > 1e-12:
            raise ValueError("root probability must be 1")

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "ProbabilityTree":
        amps = np.asarray(amplitudes, dtype=float)
        norm = np.linalg.norm(amps)
        if norm == 0.0:
            raise ValueError("zero state")
        probs = (amps / norm) ** 2
        n = probs.size.bit_length() - 1
        if probs.size != 1 << n:
            raise ValueError("length must be a power of two")
        levels = [probs]
        while levels[-1].size > 1:
            cur = levels[-1]
            levels.append(cur[0::2] + cur[1::2])
        return cls(levels[::-1])

    @property
    def n_qubits(self) -> int:
        return len(self.levels) - 1


def qsp1_angle(parent_prob: float, zero_child_prob: float) -> float:
    """Rotation giving conditional amplitudes (sqrt(f), sqrt(1-f)),
    f = zero_child / parent."""
    if parent_prob <= 0.0:
        if zero_child_prob > 0.0:
            raise ValueError("zero-probability parent with nonzero child")
        return 0.0
    f = min(1.0, max(0.0, zero_child_prob / parent_prob))
    return 2.0 * math.acos(math.sqrt(f))


def qsp1_synthesize(target, n_qubits: int | None = None) -> CircuitProgram:
    """Probability-tree cascade: level L rotates qubit L keyed on the
    earlier qubits. Preparing |0...0> yields an empty circuit."""
    amps = np.asarray(target, dtype=float)
    if np.any(amps < 0):
        raise ValueError("amplitudes must be nonnegative")
    tree = ProbabilityTree.from_amplitudes(amps)
    n = tree.n_qubits
    if n_qubits is not None and n_qubits != n:
        raise ValueError("n_qubits inconsistent with target length")
    prog = CircuitProgram(n)
    for level in range(n):
        parents = tree.levels[level]
        children = tree.levels[level + 1]
        thetas = np.array([qsp1_angle(parents[j], children[2 * j])
                           for j in range(parents.size)])
        if np.max(np.abs(thetas)) < AMP_TOL:
            continue  # identity level; |0...0> yields an empty circuit
        prog.extend(mottonen_ucry(level, list(range(level)), thetas))
    return prog


class DecisionDiagram:
    """Reduced branching structure of a sparse state's support.

    Hash-consed bottom-up: identical subtrees share a node, and a node
    whose two edges reach the same subtree is skipped entirely (its bit is
    a don't-care on that path). paths counts root-to-terminal walks.
    """

    def __init__(self, pairs, n_qubits: int):
        idx_seen = set()
        for idx, _ in pairs:
            if idx in idx_seen:
                raise ValueError(f"duplicate index {idx}")
            if not 0 <= idx < 1 << n_qubits:
                raise ValueError(f"index {idx} out of range")
            idx_seen.add(idx)
        self.n_qubits = n_qubits
        self.n_nonzero = len(pairs)
        self._memo = {}
        self._paths_memo = {}
        items = sorted((idx, float(a)) for idx, a in pairs)
        self.root = self._build(items, n_qubits - 1)
        self.paths = self._count_paths(self.root)

    def _build(self, items, bit):
        if not items:
            return None
        if bit < 0:
            key = ("leaf", round(items[0][1], 12))
            return self._memo.setdefault(key, key)
        zero = [(i, a) for i, a in items if not (i >> bit) & 1]
        one = [(i, a) for i, a in items if (i >> bit) & 1]
        z_id = self._build(zero, bit - 1)
        o_id = self._build(one, bit - 1)
        if z_id == o_id:
            return z_id  # both edges identical: drop the node
        key = ("node", bit, id(z_id) if isinstance(z_id, tuple) else z_id,
               id(o_id) if isinstance(o_id, tuple) else o_id)
        return self._memo.setdefault(key, ("node", bit, z_id, o_id))

    def _count_paths(self, node):
        if node is None:
            return 0
        if node[0] == "leaf":
            return 1
        k = self._paths_memo.get(id(node))
        if k is None:
            k = self._count_paths(node[2]) + self._count_paths(node[3])
            self._paths_memo[id(node)] = k
        return k


class _Path:
    """Don't-care pattern: `bits` holds defined values (0 at mask bits),
    `mask` marks free bits, `amp` is the per-basis-state amplitude."""

    __slots__ = ("bits", "mask", "amp")

    def __init__(self, bits, mask, amp):
        self.bits = bits
        self.mask = mask
        self.amp = amp


def _extract_paths(items, bit):
    """Fold equal sibling subtrees into don't-care bits, like the reduced
    decision diagram; items are (index, amp) with index < 2^(bit+1)."""
    if bit < 0:
        return [_Path(0, 0, items[0][1])]
    top = 1 << bit
    zero = [(i, a) for i, a in items if not i & top]
    one = [(i & ~top, a) for i, a in items if i & top]
    if zero and one and len(zero) == len(one):
        z = sorted(zero)
        o = sorted(one)
        if all(zi == oi and abs(za - oa) < AMP_TOL
               for (zi, za), (oi, oa) in zip(z, o)):
            return [_Path(p.bits, p.mask | top, p.amp)
                    for p in _extract_paths(z, bit - 1)]
    out = []
    if zero:
        out.extend(_extract_paths(zero, bit - 1))
    if one:
        for p in _extract_paths(one, bit - 1):
            p.bits |= top
            out.append(p)
    return out


def _greedy_controls(anchor: _Path, t_bit: int, others) -> list[int]:
    """Smallest greedy bit set (defined in anchor, never t_bit) such that
    every other path differs from anchor on some picked defined bit."""
    n_bits = max(anchor.bits.bit_length(), anchor.mask.bit_length(),
                 *(max(o.bits.bit_length(), o.mask.bit_length())
                   for o in others)) if others else 0
    candidates = [b for b in range(max(n_bits, t_bit + 1))
                  if b != t_bit and not (anchor.mask >> b) & 1]

    def separates(b, o):
        return (not (o.mask >> b) & 1
                and ((o.bits ^ anchor.bits) >> b) & 1)

    uncovered = list(others)
    picked = []
    while uncovered:
        best, best_hits = None, -1
        for b in candidates:
            if b in picked:
                continue
            hits = sum(1 for o in uncovered if separates(b, o))
            if hits > best_hits:
                best, best_hits = b, hits
        if best_hits <= 0:
            raise RuntimeError("overlapping paths")  # disjoint support bug
        picked.append(best)
        uncovered = [o for o in uncovered if not separates(best, o)]
    return picked


def qsp2_synthesize(sparse_state, n_qubits: int) -> CircuitProgram:
    """Sparse preparation over n_qubits + 1 lines (last line is the
    reserved ancilla, left in |0>).

    Build order is reversed: the support is compressed into don't-care
    paths, the paths are contracted pairwise onto a single basis state
    (cheapest rotation first), X-mapped to |0...0>, and the whole sequence
    inverted. Each contraction costs one keyed rotation ladder plus any
    alignment CNOTs, so the CNOT count tracks the path count rather than
    the state dimension.
    """
    n = n_qubits
    DecisionDiagram(sparse_state, n)  # validates indices up front
    if any(a < 0 for _, a in sparse_state):
        raise ValueError("amplitudes must be nonnegative")
    norm = math.sqrt(sum(a * a for _, a in sparse_state))
    if norm == 0.0:
        raise ValueError("zero state")
    paths = _extract_paths(
        sorted((int(i), float(a) / norm) for i, a in sparse_state), n - 1)

    # bit b lives on qubit n-1-b under the MSB-first register convention
    def qubit_of(bit):
        return n - 1 - bit

    forward = []  # ops taking the target state to |0...0>

    def ladder_size(anchor, t_bit, others):
        try:
            return 1 << len(_greedy_controls(anchor, t_bit, others))
        except RuntimeError:
            return None

    def emit_keyed(theta, t_bit, anchor, others):
        ctrl_bits = _greedy_controls(anchor, t_bit, others)
        if not ctrl_bits:
            forward.append(ry(qubit_of(t_bit), theta))
            return
        ordered = sorted(ctrl_bits, reverse=True)
        key = 0
        for b in ordered:
            key = key << 1 | (anchor.bits >> b) & 1
        thetas = np.zeros(1 << len(ordered))
        thetas[key] = theta
        forward.extend(mottonen_ucry(qubit_of(t_bit),
                                     [qubit_of(b) for b in ordered], thetas))

    def shift_legal(t_bit, d_bit, skip):
        for k, p in enumerate(paths):
            if k in skip:
                continue
            if (p.mask >> t_bit) & 1 and not (p.mask >> d_bit) & 1:
                return False
        return True

    def apply_shift(t_bit, d_bit):
        forward.append(cnot(qubit_of(t_bit), qubit_of(d_bit)))
        for p in paths:
            if not (p.mask >> t_bit) & 1 and (p.bits >> t_bit) & 1 \
                    and not (p.mask >> d_bit) & 1:
                p.bits ^= 1 << d_bit

    while len(paths) > 1 or paths[0].mask:
        candidates = sorted(
            (bin(paths[i].bits ^ paths[j].bits).count("1"), i, j)
            for i in range(len(paths))
            for j in range(i + 1, len(paths))
            if paths[i].mask == paths[j].mask)
        merge_plan = None  # (cost, i, j, t_bit)
        for nd, i, j in candidates[:32]:
            a, b = paths[i], paths[j]
            diff = a.bits ^ b.bits
            if merge_plan is not None and nd - 1 >= merge_plan[0]:
                break  # shifts alone already cost too much
            others = [p for k, p in enumerate(paths) if k not in (i, j)]
            for t_bit in (bit for bit in range(n) if (diff >> bit) & 1):
                if not all(shift_legal(t_bit, d, (i, j))
                           for d in range(n)
                           if d != t_bit and (diff >> d) & 1):
                    continue
                size = ladder_size(a, t_bit, others)
                if size is None:
                    continue
                cost = (nd - 1) + size
                if merge_plan is None or cost < merge_plan[0]:
                    merge_plan = (cost, i, j, t_bit)
        fold_plan = None  # (cost, i, t_bit)
        for i, p in enumerate(paths):
            if not p.mask:
                continue
            others = [q for k, q in enumerate(paths) if k != i]
            for t_bit in (bit for bit in range(n) if (p.mask >> bit) & 1):
                size = ladder_size(p, t_bit, others)
                if size is not None and (fold_plan is None
                                         or size < fold_plan[0]):
                    fold_plan = (size, i, t_bit)

        if merge_plan is not None and (fold_plan is None
                                       or merge_plan[0] <= fold_plan[0]):
            _, i, j, t_bit = merge_plan
            a, b = paths[i], paths[j]
            for d in range(n):
                if d != t_bit and ((a.bits ^ b.bits) >> d) & 1:
                    apply_shift(t_bit, d)
            if (a.bits >> t_bit) & 1:
                a, b = b, a
            theta = -2.0 * math.atan2(b.amp, a.amp)
            others = [p for p in paths if p is not a and p is not b]
            emit_keyed(theta, t_bit, a, others)
            a.amp = math.hypot(a.amp, b.amp)
            paths = [p for p in paths if p is not b]
        else:
            _, i, t_bit = fold_plan
            p = paths[i]
            others = [q for q in paths if q is not p]
            # equal halves concentrate onto the t=0 branch: amp grows sqrt2
            emit_keyed(-math.pi / 2.0, t_bit, p, others)
            p.mask &= ~(1 << t_bit)
            p.amp *= math.sqrt(2.0)

    last = paths[0].bits
    for b in range(n):
        if (last >> b) & 1:
            forward.append(x(qubit_of(b)))

    prog = CircuitProgram(n + 1)
    for op in reversed(forward):
        prog.append(inverse_op(op))
    return prog


def cnot_report(p1: CircuitProgram, p2: CircuitProgram) -> float:
    """Percent CNOT reduction of p2 relative to p1; 0 when p1 has none."""
    c1 = sum(1 for op in p1.ops if op.kind == "cnot")
    c2 = sum(1 for op in p2.ops if op.kind == "cnot")
    if c1 == 0:
        return 0.0
    return 100.0 * (1.0 - c2 / c1)


def load_sparse_csv(path) -> list[tuple[int, float]]:
    """Rows of index,value."""
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    return [(int(round(i)), float(v)) for i, v in data]


def sample_block_profile(rng, n_qubits: int,
                         max_nonzero: int | None = None):
    """Random normalized sparse state shaped like an unrolled marching
    right-hand side: an inlet block followed by repeated forcing blocks,
    all sitting at the bottom of the register, zero-padded above."""
    n_int = int(rng.choice([4, 8]))
    m = int(rng.integers(1, 8))
    cap = max_nonzero if max_nonzero is not None else 5 * n_qubits
    u_in = float(rng.uniform(0.5, 1.5))
    f_dt = float(rng.uniform(0.05, 0.4))
    pairs = []
    for blk in range(m + 1):
        v = u_in if blk == 0 else f_dt
        for j in range(n_int):
            pairs.append((blk * n_int + j, v))
    pairs = pairs[:cap]
    amps = np.array([a for _, a in pairs])
    amps /= np.linalg.norm(amps)
    return [(i, float(a)) for (i, _), a in zip(pairs, amps)]


def dense_embedding(sparse_state, n_qubits: int) -> np.ndarray:
    vec = np.zeros(1 << n_qubits)
    for idx, amp in sparse_state:
        vec[idx] = amp
    return vec
