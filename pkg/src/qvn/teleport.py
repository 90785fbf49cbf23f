"""Composition of stored programs by teleportation.

Bell basis convention: outcome ``(a, b)`` on wires ``(u, v)`` is the state
``(X^a Z^b x 1)|omega>``.  Bell-measuring the head of program ``U1`` against
the tail of program ``U2`` leaves the program of ``U2 P U1`` with
``P = X^-a Z^-b`` (up to a global phase).  The frame ``(-a, -b)`` is what
:class:`PauliFrame` records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qvn.channels import ProgramState, S, ebit_vector, pauli
from qvn.errors import DimensionError, HeraldedFailure
from qvn.kernel import apply_to_wires, as_rng, permute_wires

STRATEGIES = ("postselect", "frame_tracked", "covariant")


@dataclass(frozen=True)
class PauliFrame:
    """Per-wire Pauli byproduct ``X^x Z^z`` with exponents in ``Z_d``."""

    entries: tuple[tuple[int, int], ...]
    d: int = 2

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((x % self.d, z % self.d) for x, z in self.entries))

    @classmethod
    def identity(cls, n: int, d: int = 2) -> "PauliFrame":
        return cls(((0, 0),) * n, d)

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def is_identity(self) -> bool:
        return all(x == 0 and z == 0 for x, z in self.entries)

    def __getitem__(self, wire: int) -> tuple[int, int]:
        return self.entries[wire]

    def with_wire(self, wire: int, x: int, z: int) -> "PauliFrame":
        entries = list(self.entries)
        entries[wire] = (x, z)
        return PauliFrame(tuple(entries), self.d)

    def after(self, other: "PauliFrame") -> "PauliFrame":
        """Frame of ``self * other`` (``other`` acts first), phases dropped."""
        if other.n != self.n or other.d != self.d:
            raise DimensionError("frames of different shape")
        return PauliFrame(tuple((a + c, b + e) for (a, b), (c, e) in zip(self.entries, other.entries)), self.d)

    def operator(self, wires: Sequence[int] | None = None) -> np.ndarray:
        wires = range(self.n) if wires is None else wires
        out = np.eye(1, dtype=complex)
        for w in wires:
            out = np.kron(out, pauli(*self.entries[w], self.d))
        return out

    def correction(self, wires: Sequence[int] | None = None) -> np.ndarray:
        return self.operator(wires).conj().T


@dataclass(frozen=True, eq=False)
class CompositionResult:
    program: ProgramState
    frame: PauliFrame
    strategy: str
    attempts: int = 1
    ebits_consumed: int = 0
    outcomes: tuple = ()
    probability: float = 1.0
    log: list = field(default_factory=list)


def bell_vector(a: int, b: int, d: int) -> np.ndarray:
    """``(X^a Z^b x 1)|omega>``."""
    return np.kron(pauli(a, b, d), np.eye(d)) @ ebit_vector(d)


def bell_change_of_basis(d: int) -> np.ndarray:
    """Unitary whose row ``a*d + b`` is ``<B_ab|``."""
    return np.array([bell_vector(a, b, d).conj() for a in range(d) for b in range(d)])


def _rotate(state, wire_a, wire_b, dims):
    dims = tuple(dims)
    d = dims[wire_a]
    if dims[wire_b] != d:
        raise DimensionError(f"Bell measurement needs equal wire dimensions, got {d} and {dims[wire_b]}")
    return apply_to_wires(bell_change_of_basis(d), state, [wire_a, wire_b], dims), d


def bell_measure(state: np.ndarray, wire_a: int, wire_b: int, dims: Sequence[int], rng=None, outcome=None):
    """Measure ``(wire_a, wire_b)`` in the generalized Bell basis.

    Returns ``(outcome, post_state, probability)``; the two wires are removed
    from ``post_state``, which is renormalized.  Pass ``outcome=(a, b)`` to
    project onto a chosen outcome instead of sampling.
    """
    dims = tuple(dims)
    rotated, d = _rotate(state, wire_a, wire_b, dims)
    n = len(dims)
    rest = [w for w in range(n) if w not in (wire_a, wire_b)]
    rest_dims = tuple(dims[w] for w in rest)
    if rotated.ndim == 1:
        t = np.moveaxis(rotated.reshape(dims), [wire_a, wire_b], [0, 1]).reshape(d, d, -1)
        probs = (np.abs(t) ** 2).sum(axis=2)
    else:
        t = rotated.reshape(dims * 2)
        order = [wire_a, wire_b] + rest
        t = t.transpose(order + [n + w for w in order])
        side = math.prod(rest_dims)
        t = t.reshape(d, d, side, d, d, side)
        probs = np.einsum("abiabi->ab", t).real
    total = probs.sum()
    if outcome is None:
        flat = np.clip(probs.reshape(-1), 0, None) / total
        k = int(as_rng(rng).choice(d * d, p=flat))
        outcome = (k // d, k % d)
    a, b = outcome[0] % d, outcome[1] % d
    prob = float(probs[a, b] / total)
    if rotated.ndim == 1:
        post = t[a, b]
        nrm = np.linalg.norm(post)
    else:
        post = t[a, b, :, a, b, :]
        nrm = np.trace(post).real
    if nrm <= 1e-300:
        return (a, b), None, prob
    return (a, b), post / nrm, prob


def _joint(first: ProgramState, second: ProgramState):
    """Joint state on (h1, t1, h2, t2) plus wire bookkeeping."""
    if first.dims_head != second.dims_tail:
        raise DimensionError(f"cannot compose: head {first.dims_head} vs tail {second.dims_tail}")
    if first.is_pure and second.is_pure:
        state = np.kron(first.data, second.data)
    else:
        state = np.kron(first.matrix, second.matrix)
    dims = first.dims + second.dims
    return state, dims


def _join(first: ProgramState, second: ProgramState, rng=None, forced=None):
    """Bell-measure each head wire of ``first`` with the matching tail wire of ``second``."""
    state, dims = _joint(first, second)
    k1, m1 = len(first.dims_head), len(first.dims_tail)
    k2 = len(second.dims_head)
    labels = [("h1", i) for i in range(k1)] + [("t1", i) for i in range(m1)]
    labels += [("h2", i) for i in range(k2)] + [("t2", i) for i in range(len(second.dims_tail))]
    outcomes, prob = [], 1.0
    for i in range(k1):
        wa, wb = labels.index(("h1", i)), labels.index(("t2", i))
        force = None if forced is None else forced[i]
        out, state, p = bell_measure(state, wa, wb, dims, rng, force)
        outcomes.append(out)
        prob *= p
        if state is None:
            return outcomes, None, prob
        dims = tuple(d for j, d in enumerate(dims) if j not in (wa, wb))
        labels = [lab for j, lab in enumerate(labels) if j not in (wa, wb)]
    order = [labels.index(("h2", i)) for i in range(k2)] + [labels.index(("t1", i)) for i in range(m1)]
    state = permute_wires(state, order, dims)
    program = ProgramState(state, second.dims_head, first.dims_tail)
    return outcomes, program, prob


def frame_from_outcomes(outcomes, d: int) -> PauliFrame:
    return PauliFrame(tuple((-a, -b) for a, b in outcomes), d)


def compose_standard(first: ProgramState, second: ProgramState, strategy: str = "postselect", rng=None) -> CompositionResult:
    """Compose ``first`` then ``second`` with standard teleportation.

    ``postselect`` projects every Bell measurement on the trivial outcome;
    ``frame_tracked`` samples outcomes and returns the byproduct frame ``f``
    with ``program = choi(U2 P_f U1)``.
    """
    d = first.dims_head[0] if first.dims_head else 2
    if strategy == "postselect":
        forced = [(0, 0)] * len(first.dims_head)
        outcomes, program, prob = _join(first, second, forced=forced)
        frame = PauliFrame.identity(len(first.dims_head), d)
    elif strategy == "frame_tracked":
        outcomes, program, prob = _join(first, second, rng=as_rng(rng))
        frame = frame_from_outcomes(outcomes, d)
    else:
        raise ValueError(f"unknown standard strategy {strategy!r}")
    return CompositionResult(program, frame, strategy, 1, 0, tuple(outcomes), prob)


def enumerate_compositions(first: ProgramState, second: ProgramState):
    """Every joint Bell outcome with its program, frame and probability."""
    import itertools

    d = first.dims_head[0]
    singles = [(a, b) for a in range(d) for b in range(d)]
    for forced in itertools.product(singles, repeat=len(first.dims_head)):
        outcomes, program, prob = _join(first, second, forced=list(forced))
        yield CompositionResult(program, frame_from_outcomes(outcomes, d), "frame_tracked", 1, 0, tuple(outcomes), prob)


def trivial_outcome_probability(first: ProgramState, second: ProgramState) -> float:
    return _join(first, second, forced=[(0, 0)] * len(first.dims_head))[2]


def compose_covariant(
    first: ProgramState,
    second: ProgramState,
    rng=None,
    max_attempts: int = 64,
    force: str | None = None,
) -> CompositionResult:
    """Heralded composition with outcomes grouped as {trivial, nontrivial}.

    A trivial outcome yields the exact program with no byproduct.  The
    grouped nontrivial outcome discards the attempt; a fresh copy of each
    program is drawn from memory and the composition is retried.  Each
    attempt consumes one teleportation ebit.  ``force`` pins the outcome
    ("trivial"/"nontrivial") for testing.
    """
    rng = as_rng(rng)
    d = first.dims_head[0]
    _, exact, p_triv = _join(first, second, forced=[(0, 0)] * len(first.dims_head))
    history = []
    for attempt in range(1, max_attempts + 1):
        if force is None:
            ok = bool(rng.random() < p_triv)
        else:
            ok = force == "trivial"
        history.append("trivial" if ok else "nontrivial")
        if ok:
            return CompositionResult(
                exact,
                PauliFrame.identity(len(first.dims_head), d),
                "covariant",
                attempt,
                attempt,
                tuple(history),
                p_triv,
                history,
            )
    raise HeraldedFailure(f"covariant composition failed {max_attempts} times (success probability {p_triv:.4f})")


# ---------------------------------------------------------------------------
# Frame propagation
# ---------------------------------------------------------------------------

CLIFFORD_1Q = {"H", "S", "I", "X", "Y", "Z"}


def commute_frame_through(frame: PauliFrame, gate: str, wires: Sequence[int]):
    """Move ``frame`` from before ``gate`` to after it: ``gate * P = R * P' * gate``.

    Returns ``(P', R)`` where the residual ``R`` is ``None`` for Clifford
    gates and the non-Pauli matrix ``S`` on the gate wire when a T gate meets
    an X byproduct.  Phases are dropped.  Qubit frames only.
    """
    if frame.d != 2:
        raise DimensionError("frame propagation through gates is defined for qubits")
    gate = gate.upper()
    wires = list(wires)
    if gate in ("X", "Y", "Z", "I"):
        return frame, None
    if gate == "H":
        (w,) = wires
        x, z = frame[w]
        return frame.with_wire(w, z, x), None
    if gate == "S":
        (w,) = wires
        x, z = frame[w]
        return frame.with_wire(w, x, z + x), None
    if gate == "T":
        (w,) = wires
        x, _ = frame[w]
        return frame, (S if x else None)
    if gate == "CNOT":
        c, t = wires
        (xc, zc), (xt, zt) = frame[c], frame[t]
        return frame.with_wire(c, xc, zc + zt).with_wire(t, xt + xc, zt), None
    raise ValueError(f"unsupported gate {gate!r}")


def correct_program(program: ProgramState, correction: np.ndarray) -> ProgramState:
    """Apply a unitary to the head of a program."""
    state = apply_to_wires(correction, program.data, list(program.head_wires), program.dims)
    return ProgramState(state, program.dims_head, program.dims_tail, program.norm_factor)


def interior_correction(frame: PauliFrame, following: np.ndarray) -> np.ndarray:
    """Head correction ``(U2 P_f U2^+)^+`` for a byproduct trapped before ``U2``."""
    p = frame.operator()
    return (following @ p @ following.conj().T).conj().T


__all__ = [
    "CompositionResult",
    "PauliFrame",
    "STRATEGIES",
    "bell_measure",
    "bell_vector",
    "commute_frame_through",
    "compose_covariant",
    "compose_standard",
    "correct_program",
    "enumerate_compositions",
    "interior_correction",
]
