"""Amplitude-vector register state, projection, and measurement sampling."""

from __future__ import annotations

import numpy as np

NORM_TOL = 1e-10


class AmplitudeState:
    """2^n complex amplitudes; qubit 0 is the most significant index bit."""

    __slots__ = ("n", "vec")

    def __init__(self, n: int, vec: np.ndarray | None = None):
        if n < 1:
            raise ValueError("need at least one qubit")
        self.n = int(n)
        if vec is None:
            vec = np.zeros(1 << self.n, dtype=np.complex128)
            vec[0] = 1.0
        else:
            vec = np.ascontiguousarray(vec, dtype=np.complex128)
            if vec.shape != (1 << self.n,):
                raise ValueError(f"vector length {vec.shape} does not match "
                                 f"{self.n} qubits")
        self.vec = vec

    @classmethod
    def basis(cls, n: int, index: int) -> "AmplitudeState":
        state = cls(n)
        state.vec[0] = 0.0
        state.vec[index] = 1.0
        return state

    @classmethod
    def from_vector(cls, vec, normalize: bool = False) -> "AmplitudeState":
        vec = np.array(vec, dtype=np.complex128)
        n = int(round(np.log2(vec.size)))
        if 1 << n != vec.size:
            raise ValueError("state length must be a power of two")
        nrm = np.linalg.norm(vec)
        if normalize:
            if nrm == 0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / nrm
        elif abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {nrm!r})")
        return cls(n, vec)

    def copy(self) -> "AmplitudeState":
        return AmplitudeState(self.n, self.vec.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.vec) ** 2

    def probability_of(self, qubit: int, outcome: int) -> float:
        p = self.n - 1 - qubit
        view = self.vec.reshape(-1, 2, 1 << p)
        return float(np.sum(np.abs(view[:, outcome, :]) ** 2))

    def __repr__(self) -> str:
        return f"AmplitudeState(n={self.n})"


def project_and_renormalize(state: AmplitudeState, qubit: int, outcome: int):
    """Collapse one qubit to a given outcome.

    Returns (state, probability). The non-matching branch is zeroed and the
    rest rescaled; projecting onto a zero-probability branch is an error.
    """
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    if not 0 <= qubit < state.n:
        raise ValueError("qubit out of range")
    p = state.n - 1 - qubit
    view = state.vec.reshape(-1, 2, 1 << p)
    prob = float(np.sum(np.abs(view[:, outcome, :]) ** 2))
    if prob <= 1e-300:
        raise ValueError(f"projection onto zero-probability branch "
                         f"(qubit {qubit} = {outcome})")
    view[:, 1 - outcome, :] = 0.0
    state.vec *= 1.0 / np.sqrt(prob)
    return state, prob


def sample_measurements(state: AmplitudeState, shots: int, seed: int) -> dict:
    """Full-register measurement histogram keyed by bitstring (qubit 0 first)."""
    if shots < 1:
        raise ValueError("shots must be positive")
    probs = state.probabilities()
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"state norm deviates from 1 ({total})")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, probs / total)
    hits = np.nonzero(counts)[0]
    width = state.n
    return {format(int(i), f"0{width}b"): int(counts[i]) for i in hits}
