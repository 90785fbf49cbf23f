"""Channels, Choi states and the programs built from them.

A channel ``E`` with input wires ``dims_in`` and output wires ``dims_out`` is
stored as Kraus operators and/or a Choi matrix.  Choi matrices are kept as
*unit-trace states*

    omega_E = (E x 1)(omega),    |omega> = sum_i |ii> / sqrt(d_in)

on the wires ``dims_out + dims_in``.  The output wires are the *head* of the
program and the input (reference) wires are its *tail*.  Multiply by
``d_in`` to get the trace-``d_in`` Choi-Jamiolkowski operator used by most
other libraries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from qvn.errors import DimensionError, InvalidChannelError
from qvn.kernel import (
    DEFAULT_TOL,
    DensityOperator,
    PureState,
    eig_hermitian,
    fidelity,
    partial_trace,
    partial_transpose,
)

KRAUS_CUTOFF = 1e-12

# ---------------------------------------------------------------------------
# Gate library
# ---------------------------------------------------------------------------

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j]).astype(complex)
T = np.diag([1, np.exp(1j * np.pi / 4)]).astype(complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

GATES = {"I": I2, "X": X, "Y": Y, "Z": Z, "H": H, "S": S, "T": T, "CNOT": CNOT, "CZ": CZ, "SWAP": SWAP}


def shift(d: int) -> np.ndarray:
    """Generalized Pauli X: ``|j> -> |j+1 mod d>``."""
    return np.roll(np.eye(d, dtype=complex), 1, axis=0)


def clock(d: int) -> np.ndarray:
    """Generalized Pauli Z: ``|j> -> exp(2 pi i j / d)|j>``."""
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def pauli(x: int, z: int, d: int = 2) -> np.ndarray:
    """``X^x Z^z`` for a qudit of dimension ``d``."""
    return np.linalg.matrix_power(shift(d), x % d) @ np.linalg.matrix_power(clock(d), z % d)


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------


def _as_dims(dims, default: int) -> tuple[int, ...]:
    if dims is None:
        return (default,)
    if isinstance(dims, (int, np.integer)):
        return (int(dims),)
    return tuple(int(d) for d in dims)


class Channel:
    """A linear map between operator spaces, held as Kraus operators or a Choi matrix.

    Whichever representation is missing is derived on first access.  Instances
    are treated as immutable values; the lazily derived representation is a
    pure function of the stored one.
    """

    def __init__(self, kraus=None, choi=None, dims_in=None, dims_out=None, name: str | None = None):
        if kraus is None and choi is None:
            raise InvalidChannelError("a channel needs Kraus operators or a Choi matrix")
        self.name = name
        if kraus is not None:
            ks = [np.asarray(k, dtype=complex) for k in kraus]
            if not ks or any(k.ndim != 2 or k.shape != ks[0].shape for k in ks):
                raise DimensionError("Kraus operators must be equally shaped matrices")
            self._kraus = tuple(ks)
            dims_in = _as_dims(dims_in, ks[0].shape[1])
            dims_out = _as_dims(dims_out, ks[0].shape[0])
            if math.prod(dims_in) != ks[0].shape[1] or math.prod(dims_out) != ks[0].shape[0]:
                raise DimensionError("Kraus shape disagrees with declared dims")
        else:
            self._kraus = None
        if choi is not None:
            choi = np.asarray(choi, dtype=complex)
            if dims_in is None or dims_out is None:
                d = math.isqrt(choi.shape[0])
                if d * d != choi.shape[0]:
                    raise DimensionError("cannot infer square channel dims from Choi matrix")
                dims_in = _as_dims(dims_in, d)
                dims_out = _as_dims(dims_out, d)
            dims_in, dims_out = _as_dims(dims_in, 0), _as_dims(dims_out, 0)
            side = math.prod(dims_in) * math.prod(dims_out)
            if choi.shape != (side, side):
                raise DimensionError("Choi matrix shape disagrees with declared dims")
            self._choi = choi
        else:
            self._choi = None
        self.dims_in = dims_in
        self.dims_out = dims_out

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_unitary(cls, u, dims=None, name=None) -> "Channel":
        u = np.asarray(u, dtype=complex)
        return cls(kraus=[u], dims_in=dims, dims_out=dims, name=name)

    @classmethod
    def identity(cls, d: int = 2) -> "Channel":
        return cls.from_unitary(np.eye(d), name="identity")

    @classmethod
    def depolarizing(cls, d: int = 2, p: float = 1.0) -> "Channel":
        """``rho -> (1-p) rho + p tr(rho) I/d``; ``p = 1`` is complete depolarization."""
        ks = [np.sqrt(1 - p + p / d**2) * np.eye(d)]
        weight = np.sqrt(p) / d
        ks += [weight * pauli(x, z, d) for x in range(d) for z in range(d) if (x, z) != (0, 0)]
        return cls(kraus=ks, name="depolarizing")

    @classmethod
    def from_gate(cls, name: str) -> "Channel":
        u = GATES[name.upper()]
        dims = (2,) * int(round(math.log2(u.shape[0])))
        return cls.from_unitary(u, dims, name=name.upper())

    # -- representations ---------------------------------------------------
    @property
    def dim_in(self) -> int:
        return math.prod(self.dims_in)

    @property
    def dim_out(self) -> int:
        return math.prod(self.dims_out)

    @cached_property
    def kraus(self) -> tuple[np.ndarray, ...]:
        if self._kraus is not None:
            return self._kraus
        # J = d_in * omega = sum_k |K_k>><<K_k| with row-major vec over (out, in)
        evals, evecs = eig_hermitian(self._choi * self.dim_in)
        if evals.min() < -DEFAULT_TOL * max(1.0, self.dim_in):
            raise InvalidChannelError(f"Choi matrix is not positive (eigenvalue {evals.min():.3e})")
        ks = [
            np.sqrt(lam) * evecs[:, k].reshape(self.dim_out, self.dim_in)
            for k, lam in enumerate(evals)
            if lam > KRAUS_CUTOFF
        ]
        return tuple(ks[::-1])

    @cached_property
    def choi(self) -> np.ndarray:
        if self._choi is not None:
            return self._choi
        vecs = np.array([k.reshape(-1) for k in self._kraus])
        return vecs.T @ vecs.conj() / self.dim_in

    @property
    def is_unitary(self) -> bool:
        return len(self.kraus) == 1 and self.dim_in == self.dim_out and bool(
            np.allclose(self.kraus[0].conj().T @ self.kraus[0], np.eye(self.dim_in), atol=1e-10)
        )

    # -- algebra -----------------------------------------------------------
    def __call__(self, rho):
        return apply(self, rho)

    def then(self, other: "Channel") -> "Channel":
        """Sequential composition: ``other`` after ``self``."""
        if self.dim_out != other.dim_in:
            raise DimensionError("channel dimensions do not chain")
        ks = [b @ a for b in other.kraus for a in self.kraus]
        return Channel(kraus=ks, dims_in=self.dims_in, dims_out=other.dims_out)

    def tensor(self, other: "Channel") -> "Channel":
        ks = [np.kron(a, b) for a in self.kraus for b in other.kraus]
        return Channel(kraus=ks, dims_in=self.dims_in + other.dims_in, dims_out=self.dims_out + other.dims_out)

    def __repr__(self):
        label = self.name or "Channel"
        return f"<{label} {self.dims_in}->{self.dims_out}>"


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProgramState:
    """A bipartite Choi state stored in program memory.

    Wires are laid out head first, then tail.  ``data`` is a state vector for
    pure programs or a density matrix otherwise.  ``norm_factor`` records the
    trace that was divided out of unnormalized intermediates.
    """

    data: np.ndarray
    dims_head: tuple[int, ...]
    dims_tail: tuple[int, ...]
    norm_factor: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        dh, dt = tuple(int(d) for d in self.dims_head), tuple(int(d) for d in self.dims_tail)
        side = math.prod(dh) * math.prod(dt)
        if data.ndim == 1 and data.size != side or data.ndim == 2 and data.shape != (side, side) or data.ndim > 2:
            raise DimensionError(f"program data of shape {data.shape} does not match {dh}|{dt}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims_head", dh)
        object.__setattr__(self, "dims_tail", dt)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.dims_head + self.dims_tail

    @property
    def head_wires(self) -> tuple[int, ...]:
        return tuple(range(len(self.dims_head)))

    @property
    def tail_wires(self) -> tuple[int, ...]:
        k = len(self.dims_head)
        return tuple(range(k, k + len(self.dims_tail)))

    @property
    def d_head(self) -> int:
        return math.prod(self.dims_head)

    @property
    def d_tail(self) -> int:
        return math.prod(self.dims_tail)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    @property
    def state(self) -> DensityOperator | PureState:
        if self.is_pure:
            return PureState(self.data, self.dims)
        return DensityOperator(self.data, self.dims)

    def to_density(self) -> "ProgramState":
        return ProgramState(self.matrix, self.dims_head, self.dims_tail, self.norm_factor)

    def head_marginal(self) -> np.ndarray:
        return partial_trace(self.matrix, self.head_wires, self.dims)

    def tail_marginal(self) -> np.ndarray:
        return partial_trace(self.matrix, self.tail_wires, self.dims)

    def validate(self, tol: float = DEFAULT_TOL, trace_preserving: bool = True) -> "ProgramState":
        if self.is_pure:
            PureState(self.data, self.dims).validate(tol)
        else:
            DensityOperator(self.data, self.dims).validate(tol)
        if trace_preserving:
            dev = np.abs(self.tail_marginal() - np.eye(self.d_tail) / self.d_tail).max()
            if dev > tol:
                raise InvalidChannelError(f"tail marginal deviates from I/d by {dev:.3e}")
        return self


def program_fidelity(a: ProgramState, b: ProgramState) -> float:
    if a.dims != b.dims:
        raise DimensionError("programs live on different wires")
    return fidelity(a.data, b.data)


def program_distance(a: ProgramState, b: ProgramState) -> float:
    """Largest entry-wise difference of the two Choi matrices."""
    return float(np.abs(a.matrix - b.matrix).max())


# ---------------------------------------------------------------------------
# Duality
# ---------------------------------------------------------------------------


def ebit_vector(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def ebit(d: int) -> PureState:
    """The maximally entangled state ``sum_i |ii>/sqrt(d)`` on two ``d``-level wires."""
    if d < 2:
        raise DimensionError("ebit needs d >= 2")
    return PureState(ebit_vector(d), (d, d))


def identity_program(dims: Sequence[int] | int = 2) -> ProgramState:
    dims = _as_dims(dims, 2)
    d = math.prod(dims)
    return ProgramState(ebit_vector(d), dims, dims)


def unitary_program(u: np.ndarray, dims=None) -> ProgramState:
    """Pure Choi state ``(U x 1)|omega>`` kept as a vector."""
    u = np.asarray(u, dtype=complex)
    dims = _as_dims(dims, u.shape[0])
    return ProgramState(u.reshape(-1) / np.sqrt(u.shape[1]), dims, dims)


def gate_program(name: str) -> ProgramState:
    u = GATES[name.upper()]
    return unitary_program(u, (2,) * int(round(math.log2(u.shape[0]))))


def choi_of(ch: Channel, tol: float = DEFAULT_TOL, check: bool = True) -> ProgramState:
    """The program ``(E x 1)(omega)``; unitary channels give a pure program."""
    if check:
        report = is_cptp(ch, tol)
        if not report.ok:
            raise InvalidChannelError(f"channel is not CPTP: {report}")
    if ch._choi is None and len(ch.kraus) == 1:
        return ProgramState(ch.kraus[0].reshape(-1) / np.sqrt(ch.dim_in), ch.dims_out, ch.dims_in)
    return ProgramState(ch.choi, ch.dims_out, ch.dims_in)


def channel_from_choi(p: ProgramState, tol: float = DEFAULT_TOL) -> Channel:
    """Invert the duality; Kraus operators come from the Choi eigendecomposition."""
    dev = np.abs(p.tail_marginal() - np.eye(p.d_tail) / p.d_tail).max()
    if dev > tol:
        raise InvalidChannelError(f"program is not trace preserving (tail marginal off by {dev:.3e})")
    if p.is_pure:
        k = p.data.reshape(p.d_head, p.d_tail) * np.sqrt(p.d_tail)
        return Channel(kraus=[k], dims_in=p.dims_tail, dims_out=p.dims_head)
    ch = Channel(choi=p.matrix, dims_in=p.dims_tail, dims_out=p.dims_head)
    ch.kraus  # noqa: B018 - raises early if the matrix is not positive
    return ch


def _rho_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityOperator):
        return rho.matrix
    if isinstance(rho, PureState):
        return np.outer(rho.vector, rho.vector.conj())
    rho = np.asarray(rho, dtype=complex)
    return np.outer(rho, rho.conj()) if rho.ndim == 1 else rho


def apply(ch: Channel, rho) -> DensityOperator:
    """``sum_k K rho K^+``."""
    m = _rho_matrix(rho)
    if m.shape != (ch.dim_in, ch.dim_in):
        raise DimensionError(f"state of shape {m.shape} does not fit channel input {ch.dims_in}")
    out = sum(k @ m @ k.conj().T for k in ch.kraus)
    return DensityOperator(out, ch.dims_out)


def apply_via_choi(p: ProgramState, rho) -> np.ndarray:
    """``d_in tr_tail[(1 x rho^T) omega]`` -- channel action read off the Choi state."""
    m = _rho_matrix(rho)
    full = p.matrix @ np.kron(np.eye(p.d_head), m.T)
    return partial_trace(full, p.head_wires, p.dims) * p.d_tail


@dataclass(frozen=True)
class CPTPReport:
    completely_positive: bool
    trace_preserving: bool
    min_choi_eigenvalue: float
    tp_residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.completely_positive and self.trace_preserving

    def __bool__(self) -> bool:
        return self.ok


def is_cptp(ch: Channel, tol: float = DEFAULT_TOL) -> CPTPReport:
    """Report positivity of the unit-trace Choi matrix and the trace-preservation residual."""
    choi = ch.choi
    herm = np.abs(choi - choi.conj().T).max()
    min_eig = float(np.linalg.eigvalsh((choi + choi.conj().T) / 2).min())
    if ch._kraus is not None:
        gram = sum(k.conj().T @ k for k in ch._kraus)
        tp_res = float(np.abs(gram - np.eye(ch.dim_in)).max())
    else:
        n_out = len(ch.dims_out)
        dims = ch.dims_out + ch.dims_in
        marg = partial_trace(choi, range(n_out, len(dims)), dims) * ch.dim_in
        tp_res = float(np.abs(marg - np.eye(ch.dim_in)).max())
    return CPTPReport(
        completely_positive=bool(min_eig >= -tol and herm <= tol),
        trace_preserving=bool(tp_res <= tol),
        min_choi_eigenvalue=min_eig,
        tp_residual=tp_res,
        tol=tol,
    )


def transpose_map_choi(d: int) -> np.ndarray:
    """Unit-trace "Choi matrix" of the transpose map (positive but not CP)."""
    return partial_transpose(np.outer(ebit_vector(d), ebit_vector(d)), [1], (d, d))


def random_channel(d_in: int = 2, d_out: int | None = None, seed=None, n_kraus: int | None = None) -> Channel:
    """Random CPTP map from a Haar-random Stinespring isometry."""
    from qvn.kernel import as_rng, haar_random_unitary

    d_out = d_in if d_out is None else d_out
    n_kraus = d_in * d_out if n_kraus is None else n_kraus
    rng = as_rng(seed)
    u = haar_random_unitary(d_out * n_kraus, rng)
    iso = u[:, :d_in]
    ks = [iso[k * d_out:(k + 1) * d_out, :] for k in range(n_kraus)]
    return Channel(kraus=ks, dims_in=(d_in,), dims_out=(d_out,), name="random")
