"""Dense multi-wire linear algebra used by every other module.

Conventions
-----------
* Wires are ordered row-major: wire 0 is the slowest index of the flattened
  Hilbert space, so ``kron(a, b)`` places ``a`` on wire 0.
* Operators are plain ``numpy`` arrays; the subsystem structure travels
  separately as a ``dims`` tuple.  :class:`DensityOperator` and
  :class:`PureState` bundle the two for callers that want validation.
* Every stochastic routine takes an explicit seed or ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from qvn.errors import DimensionError, InvalidStateError

DEFAULT_TOL = 1e-9

_LETTERS = string.ascii_letters


def as_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _dims(dims: Iterable[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise DimensionError(f"invalid subsystem dimensions {dims}")
    return dims


def _check_wires(wires: Iterable[int], n: int) -> tuple[int, ...]:
    wires = tuple(int(w) for w in wires)
    for w in wires:
        if not 0 <= w < n:
            raise DimensionError(f"wire index {w} out of range for {n} wires")
    if len(set(wires)) != len(wires):
        raise DimensionError(f"repeated wire index in {wires}")
    return wires


def _check_square(m: np.ndarray, dims: tuple[int, ...]) -> None:
    side = math.prod(dims)
    if m.ndim != 2 or m.shape != (side, side):
        raise DimensionError(f"matrix of shape {m.shape} does not match dims {dims}")


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A density matrix with its wire dimensions.

    ``validate`` checks Hermiticity, positivity and unit trace; with
    ``normalized=False`` the trace may lie anywhere in (0, 1].
    """

    matrix: np.ndarray
    dims: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        dims = _dims(self.dims)
        _check_square(m, dims)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)
        if self.labels is not None and len(self.labels) != len(dims):
            raise DimensionError("one label per wire required")

    @classmethod
    def from_vector(cls, vec, dims=None) -> "DensityOperator":
        vec = np.asarray(vec, dtype=complex).ravel()
        if dims is None:
            dims = (vec.size,)
        return cls(np.outer(vec, vec.conj()), tuple(dims))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, tol: float = DEFAULT_TOL, normalized: bool = True) -> "DensityOperator":
        m = self.matrix
        if np.abs(m - m.conj().T).max() > tol:
            raise InvalidStateError("operator is not Hermitian")
        evals = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if evals.min() < -tol:
            raise InvalidStateError(f"operator has negative eigenvalue {evals.min():.3e}")
        tr = self.trace
        if normalized and abs(tr - 1) > tol:
            raise InvalidStateError(f"trace {tr} differs from 1")
        if not normalized and not (0 < tr <= 1 + tol):
            raise InvalidStateError(f"trace {tr} outside (0, 1]")
        return self


@dataclass(frozen=True, eq=False)
class PureState:
    vector: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex).ravel()
        dims = _dims(self.dims)
        if v.size != math.prod(dims):
            raise DimensionError(f"vector of length {v.size} does not match dims {dims}")
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "dims", dims)

    def validate(self, tol: float = DEFAULT_TOL) -> "PureState":
        norm = np.linalg.norm(self.vector)
        if abs(norm - 1) > tol:
            raise InvalidStateError(f"state norm {norm} differs from 1")
        return self

    def density(self) -> DensityOperator:
        return DensityOperator.from_vector(self.vector, self.dims)


def kron(*ops):
    """Tensor product in wire order.  Accepts arrays or :class:`DensityOperator`."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    if all(isinstance(o, DensityOperator) for o in ops):
        matrix = reduce(np.kron, [o.matrix for o in ops])
        return DensityOperator(matrix, sum((o.dims for o in ops), ()))
    if all(isinstance(o, PureState) for o in ops):
        vec = reduce(np.kron, [o.vector for o in ops])
        return PureState(vec, sum((o.dims for o in ops), ()))
    return reduce(np.kron, [np.asarray(o) for o in ops])


def partial_trace(m, keep: Sequence[int], dims: Sequence[int] | None = None):
    """Reduce ``m`` to the wires in ``keep`` (returned in ascending wire order)."""
    if isinstance(m, DensityOperator):
        keep = sorted(_check_wires(keep, len(m.dims)))
        out = partial_trace(m.matrix, keep, m.dims)
        return DensityOperator(out, tuple(m.dims[k] for k in keep))
    dims = _dims(dims)
    m = np.asarray(m)
    _check_square(m, dims)
    n = len(dims)
    keep = sorted(_check_wires(keep, n))
    if len(keep) == n:
        return m.copy()
    rows = list(_LETTERS[:n])
    cols = [rows[i] if i not in keep else _LETTERS[n + i] for i in range(n)]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    spec = "".join(rows) + "".join(cols) + "->" + out
    side = math.prod(dims[i] for i in keep)
    return np.einsum(spec, m.reshape(dims + dims)).reshape(side, side)


def partial_transpose(m, part: Sequence[int], dims: Sequence[int] | None = None):
    """Transpose the wires listed in ``part``, leaving the others alone."""
    if isinstance(m, DensityOperator):
        return DensityOperator(partial_transpose(m.matrix, part, m.dims), m.dims)
    dims = _dims(dims)
    m = np.asarray(m)
    _check_square(m, dims)
    n = len(dims)
    part = _check_wires(part, n)
    axes = list(range(2 * n))
    for w in part:
        axes[w], axes[n + w] = axes[n + w], axes[w]
    return m.reshape(dims + dims).transpose(axes).reshape(m.shape)


def permute_wires(m: np.ndarray, perm: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Reorder wires so that new wire ``k`` is old wire ``perm[k]``.

    Works for state vectors and square matrices.
    """
    dims = _dims(dims)
    n = len(dims)
    perm = _check_wires(perm, n)
    if len(perm) != n:
        raise DimensionError("permutation must list every wire")
    m = np.asarray(m)
    if m.ndim == 1:
        return m.reshape(dims).transpose(perm).reshape(-1)
    axes = list(perm) + [n + p for p in perm]
    return m.reshape(dims + dims).transpose(axes).reshape(m.shape)


def embed(op: np.ndarray, wires: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Full-space matrix of ``op`` acting on ``wires`` (in the listed order)."""
    dims = _dims(dims)
    n = len(dims)
    wires = _check_wires(wires, n)
    rest = [w for w in range(n) if w not in wires]
    full = np.kron(op, np.eye(math.prod(dims[w] for w in rest)))
    order = list(wires) + rest
    inverse = [order.index(k) for k in range(n)]
    return permute_wires(full, inverse, [dims[w] for w in order])


def apply_to_wires(op: np.ndarray, m: np.ndarray, wires: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Apply ``op`` on ``wires`` of a vector (``op|v>``) or a matrix (``op m op^+``)."""
    dims = _dims(dims)
    n = len(dims)
    wires = _check_wires(wires, n)
    op = np.asarray(op)
    k = len(wires)
    sub = tuple(dims[w] for w in wires)
    op_t = op.reshape(sub + sub)
    m = np.asarray(m)
    if m.ndim == 1:
        t = np.tensordot(op_t, m.reshape(dims), axes=(list(range(k, 2 * k)), list(wires)))
        return np.moveaxis(t, list(range(k)), list(wires)).reshape(-1)
    t = m.reshape(dims + dims)
    t = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), list(wires)))
    t = np.moveaxis(t, list(range(k)), list(wires))
    t = np.tensordot(t, op_t.conj(), axes=([n + w for w in wires], list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), [n + w for w in wires])
    return t.reshape(m.shape)


def eig_hermitian(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(m)
    return np.linalg.eigh((m + m.conj().T) / 2)


def psd_sqrt(m: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Principal square root of a positive semidefinite matrix.

    Eigenvalues in ``[-tol, 0)`` are clipped to zero; anything more negative
    raises :class:`InvalidStateError`.
    """
    evals, evecs = eig_hermitian(m)
    if evals.min(initial=0.0) < -tol:
        raise InvalidStateError(f"matrix is not positive semidefinite (eigenvalue {evals.min():.3e})")
    evals = np.clip(evals, 0, None)
    return (evecs * np.sqrt(evals)) @ evecs.conj().T


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, DensityOperator):
        return x.matrix
    if isinstance(x, PureState):
        return np.outer(x.vector, x.vector.conj())
    x = np.asarray(x)
    if x.ndim == 1:
        return np.outer(x, x.conj())
    return x


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr|sqrt(rho) sqrt(sigma)|)^2``, clipped to [0, 1].

    Vectors are treated as pure states; the pure case reduces to an overlap.
    """
    a = rho.vector if isinstance(rho, PureState) else rho
    b = sigma.vector if isinstance(sigma, PureState) else sigma
    a, b = (x if isinstance(x, DensityOperator) else np.asarray(x) for x in (a, b))
    if isinstance(a, np.ndarray) and a.ndim == 1:
        if isinstance(b, np.ndarray) and b.ndim == 1:
            val = abs(np.vdot(a, b)) ** 2
        else:
            val = np.vdot(a, _as_matrix(b) @ a).real
        return float(min(max(val, 0.0), 1.0))
    if isinstance(b, np.ndarray) and b.ndim == 1:
        return fidelity(b, a)
    ra, rb = _as_matrix(a), _as_matrix(b)
    sa = psd_sqrt(ra, tol=1e-6)
    svals = np.linalg.svd(sa @ psd_sqrt(rb, tol=1e-6), compute_uv=False)
    return float(min(max(svals.sum() ** 2, 0.0), 1.0))


def trace_distance(rho, sigma) -> float:
    diff = _as_matrix(rho) - _as_matrix(sigma)
    return float(0.5 * np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


def haar_random_unitary(d: int, seed=None) -> np.ndarray:
    """Haar-distributed ``d x d`` unitary via QR of a Ginibre matrix with phase fix."""
    if d < 1:
        raise DimensionError("dimension must be positive")
    rng = as_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_pure_state(d: int, seed=None) -> np.ndarray:
    rng = as_rng(seed)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, seed=None, rank: int | None = None) -> DensityOperator:
    """Random state from the induced (Hilbert-Schmidt for full rank) measure."""
    if d < 2:
        raise DimensionError("dimension must be at least 2")
    rng = as_rng(seed)
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real, (d,))


def random_hermitian(d: int, seed=None) -> np.ndarray:
    rng = as_rng(seed)
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (a + a.conj().T) / 2


def is_unitary(u: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() < tol)


def dagger(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).conj().T


__all__ = [
    "DEFAULT_TOL",
    "DensityOperator",
    "PureState",
    "apply_to_wires",
    "as_rng",
    "dagger",
    "eig_hermitian",
    "embed",
    "fidelity",
    "haar_random_unitary",
    "is_unitary",
    "kron",
    "partial_trace",
    "partial_transpose",
    "permute_wires",
    "psd_sqrt",
    "random_density",
    "random_hermitian",
    "random_pure_state",
    "trace_distance",
]
