"""Program memory: stored programs, write-in by measurement, read-out from heads.

Input data enters a program through its tail with the binary measurement
``{sqrt(rho^T), sqrt(1 - rho^T)}``.  On the first outcome the head holds
``E(rho)`` and the outcome occurs with probability ``tr E(rho) / d``.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from qvn import serialization
from qvn.channels import Channel, ProgramState, gate_program, identity_program
from qvn.errors import DimensionError, InvalidStateError, ProgramNotFound, RegistryError
from qvn.kernel import (
    DEFAULT_TOL,
    DensityOperator,
    PureState,
    apply_to_wires,
    as_rng,
    partial_trace,
    psd_sqrt,
)


@dataclass(frozen=True, eq=False)
class WriteOutcome:
    """Result of writing an input into a program tail.

    ``probability`` is the success probability of the write-in measurement;
    ``outcome_probability`` is the probability of the branch that occurred.
    ``head_state`` is normalized in both branches.  When only part of the
    tail was written, ``remainder`` is the program on the remaining wires.
    """

    success: bool
    probability: float
    outcome_probability: float
    head_state: DensityOperator | None
    remainder: ProgramState | None = None


def _input_matrix(rho, dim: int, tol: float) -> np.ndarray:
    if isinstance(rho, PureState):
        m = np.outer(rho.vector, rho.vector.conj())
    elif isinstance(rho, DensityOperator):
        m = rho.matrix
    else:
        m = np.asarray(rho, dtype=complex)
        if m.ndim == 1:
            m = np.outer(m, m.conj())
    if m.shape != (dim, dim):
        raise DimensionError(f"input of shape {m.shape} does not match tail dimension {dim}")
    DensityOperator(m, (dim,)).validate(tol)
    return m


def write_input(
    p: ProgramState,
    rho,
    mode: str = "postselect",
    seed=None,
    tail_wires: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
) -> WriteOutcome:
    """Write ``rho`` into the tail of ``p`` by the binary measurement.

    ``mode="postselect"`` always reports the success branch; ``"sample"``
    draws the outcome from ``seed``.  ``tail_wires`` (indices into the tail)
    restricts the write to part of a multi-wire tail.
    """
    if mode not in ("postselect", "sample"):
        raise ValueError(f"unknown write mode {mode!r}")
    n_head = len(p.dims_head)
    tail_wires = tuple(range(len(p.dims_tail))) if tail_wires is None else tuple(tail_wires)
    if not tail_wires or any(not 0 <= w < len(p.dims_tail) for w in tail_wires):
        raise DimensionError(f"invalid tail wires {tail_wires}")
    wires = [n_head + w for w in tail_wires]
    dim = math.prod(p.dims[w] for w in wires)
    m = _input_matrix(rho, dim, tol)
    succ_op = psd_sqrt(m.T, tol)
    fail_op = psd_sqrt(np.eye(dim) - m.T, tol)

    state = p.data if p.is_pure else p.matrix
    succ = apply_to_wires(succ_op, state, wires, p.dims)
    succ = np.outer(succ, succ.conj()) if succ.ndim == 1 else succ
    p_succ = float(np.trace(succ).real)

    success = True
    if mode == "sample":
        success = bool(as_rng(seed).random() < p_succ)
    if success:
        post, p_out = succ, p_succ
    else:
        post = apply_to_wires(fail_op, state, wires, p.dims)
        post = np.outer(post, post.conj()) if post.ndim == 1 else post
        p_out = float(np.trace(post).real)
    if p_out <= 0:
        return WriteOutcome(success, p_succ, 0.0, None)

    keep = [w for w in range(len(p.dims)) if w not in wires]
    reduced = partial_trace(post, keep, p.dims)
    reduced = reduced / np.trace(reduced).real
    if len(tail_wires) == len(p.dims_tail):
        return WriteOutcome(success, p_succ, p_out, DensityOperator(reduced, p.dims_head))
    rest_tail = tuple(p.dims_tail[w] for w in range(len(p.dims_tail)) if w not in tail_wires)
    remainder = ProgramState(reduced, p.dims_head, rest_tail)
    return WriteOutcome(success, p_succ, p_out, None, remainder)


def read_expectation(head, obs: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """``tr(obs * head)`` for a Hermitian observable."""
    obs = np.asarray(obs, dtype=complex)
    if obs.ndim != 2 or obs.shape[0] != obs.shape[1] or np.abs(obs - obs.conj().T).max() > tol:
        raise InvalidStateError("observable must be a Hermitian matrix")
    m = head.matrix if isinstance(head, DensityOperator) else np.asarray(head)
    if isinstance(head, PureState):
        m = np.outer(head.vector, head.vector.conj())
    if m.shape != obs.shape:
        raise DimensionError("observable and state dimensions differ")
    return float(np.trace(obs @ m).real)


def stochastic_povm(s: np.ndarray) -> list[np.ndarray]:
    """Diagonal POVM ``F_i = sum_j S_ij |j><j|`` reproducing ``S_ij = <j|F_i|j>``."""
    return [np.diag(row).astype(complex) for row in _check_stochastic(s)]


def _check_stochastic(s, tol: float = 1e-12) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2:
        raise ValueError("stochastic matrix must be two-dimensional")
    if (s < -tol).any():
        raise ValueError("stochastic matrix has negative entries")
    if np.abs(s.sum(axis=0) - 1).max() > 1e-9:
        raise ValueError("columns of a stochastic matrix must sum to 1")
    return s


def stochastic_to_channel(s) -> Channel:
    """Measure-and-prepare channel ``rho -> sum_i tr(F_i rho)|i><i|`` for column-stochastic ``S``.

    On a basis input ``|j><j|`` the output diagonal is column ``j`` of ``S``.
    """
    s = _check_stochastic(s)
    n_out, n_in = s.shape
    ks = []
    for i in range(n_out):
        for j in range(n_in):
            if s[i, j] > 0:
                k = np.zeros((n_out, n_in), dtype=complex)
                k[i, j] = np.sqrt(s[i, j])
                ks.append(k)
    return Channel(kraus=ks, dims_in=(n_in,), dims_out=(n_out,), name="stochastic")


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_NAME = re.compile(r"^[A-Za-z0-9_.\-]+$")


@dataclass
class MemoryRegistry:
    """Named store of programs, optionally persisted one file per program.

    Mutations go through a lock so that a single writer is enforced inside one
    process.  Entries are validated when loaded from disk.
    """

    path: Path | None = None
    entries: dict[str, tuple[ProgramState, dict]] = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        self._lock = threading.Lock()
        if self.path is not None:
            self.path = Path(self.path)
            self.path.mkdir(parents=True, exist_ok=True)

    @classmethod
    def with_gates(cls, path=None) -> "MemoryRegistry":
        reg = cls(path)
        for name in ("H", "T", "CNOT"):
            if name not in reg.list():
                reg.save(name, gate_program(name), {"description": f"{name} gate program"})
        if "identity" not in reg.list():
            reg.save("identity", identity_program(2), {"description": "ebit"})
        return reg

    def _file(self, name: str) -> Path:
        return self.path / f"{name}.json"

    def save(self, name: str, program: ProgramState, metadata: dict | None = None, overwrite: bool = False) -> None:
        if not _NAME.match(name):
            raise RegistryError(f"invalid program name {name!r}")
        program.validate(self.tol, trace_preserving=False)
        with self._lock:
            exists = name in self.entries or (self.path is not None and self._file(name).exists())
            if exists and not overwrite:
                raise RegistryError(f"program {name!r} already exists")
            if self.path is not None:
                serialization.save_program(self._file(name), program, metadata)
            self.entries[name] = (program, dict(metadata or {}))

    def load(self, name: str) -> ProgramState:
        return self.load_with_metadata(name)[0]

    def load_with_metadata(self, name: str) -> tuple[ProgramState, dict]:
        if name in self.entries:
            return self.entries[name]
        if self.path is None or not self._file(name).exists():
            raise ProgramNotFound(name)
        doc = serialization.load_document(self._file(name))
        program = serialization.program_from_dict(doc, tol=self.tol)
        entry = (program, serialization.metadata_of(doc))
        with self._lock:
            self.entries[name] = entry
        return entry

    def fetch(self, name: str) -> ProgramState:
        """A fresh copy of a stored program (values are immutable, so the same object)."""
        return self.load(name)

    def list(self) -> list[str]:
        names = set(self.entries)
        if self.path is not None:
            names.update(f.stem for f in self.path.glob("*.json"))
        return sorted(names)
