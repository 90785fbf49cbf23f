"""Program conversion by superchannels.

A superchannel is realized with one ancilla ebit ``(e_h, e_t)``: a unitary
``V`` on the program head together with ``e_h``, a unitary ``U`` on the
program tail together with ``e_t``, then ``e_h`` is traced out and ``e_t`` is
projected onto ``|0>``.  The projection is post-selective, so every
application returns the renormalized program and its probability.

Transpose convention: a tail-side unitary ``U = G x 1`` turns the program of
``E`` into the program of ``E o G^T``, because ``(1 x G)|omega> = (G^T x 1)|omega>``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from qvn.channels import Channel, ProgramState, choi_of, ebit_vector, random_channel
from qvn.errors import DimensionError, InvalidChannelError
from qvn.kernel import DEFAULT_TOL, apply_to_wires, as_rng, is_unitary, partial_trace
from qvn.serialization import SCHEMA, FormatError, decode_array, encode_array

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SuperchannelSpec:
    """Unitaries ``V`` (heads + ebit head) and ``U`` (tails + ebit tail).

    ``check=False`` admits non-unitary blocks; only the validator should see
    such specs.
    """

    V: np.ndarray
    U: np.ndarray
    dims_head: tuple[int, ...]
    dims_tail: tuple[int, ...]
    d_ebit: int
    check: bool = True

    def __post_init__(self):
        v, u = np.asarray(self.V, dtype=complex), np.asarray(self.U, dtype=complex)
        dh, dt = tuple(self.dims_head), tuple(self.dims_tail)
        object.__setattr__(self, "V", v)
        object.__setattr__(self, "U", u)
        object.__setattr__(self, "dims_head", dh)
        object.__setattr__(self, "dims_tail", dt)
        if self.d_ebit < 2:
            raise DimensionError("ancilla ebit needs dimension >= 2")
        if v.shape != (math.prod(dh) * self.d_ebit,) * 2 or u.shape != (math.prod(dt) * self.d_ebit,) * 2:
            raise DimensionError("V/U shapes do not match the wire dimensions")
        if self.check and not (is_unitary(v) and is_unitary(u)):
            raise InvalidChannelError("superchannel blocks must be unitary")

    @classmethod
    def identity(cls, dims_head=(2,), dims_tail=(2,), d_ebit: int | None = None) -> "SuperchannelSpec":
        d_ebit = math.prod(dims_tail) if d_ebit is None else d_ebit
        dh, dt = math.prod(dims_head), math.prod(dims_tail)
        return cls(np.eye(dh * d_ebit), np.eye(dt * d_ebit), tuple(dims_head), tuple(dims_tail), d_ebit)

    @classmethod
    def post_processing(cls, w: np.ndarray, dims_head=(2,), dims_tail=(2,), d_ebit: int | None = None):
        """``V = W x 1``: the converted program implements ``W o E``."""
        d_ebit = math.prod(dims_tail) if d_ebit is None else d_ebit
        dt = math.prod(dims_tail)
        return cls(np.kron(w, np.eye(d_ebit)), np.eye(dt * d_ebit), tuple(dims_head), tuple(dims_tail), d_ebit)

    @classmethod
    def pre_processing(cls, g: np.ndarray, dims_head=(2,), dims_tail=(2,), d_ebit: int | None = None):
        """``U = G x 1``: the converted program implements ``E o G^T``."""
        d_ebit = math.prod(dims_tail) if d_ebit is None else d_ebit
        dh = math.prod(dims_head)
        return cls(np.eye(dh * d_ebit), np.kron(g, np.eye(d_ebit)), tuple(dims_head), tuple(dims_tail), d_ebit)

    @property
    def dims(self) -> tuple[int, ...]:
        """Wire layout during the protocol: heads, tails, ebit head, ebit tail."""
        return self.dims_head + self.dims_tail + (self.d_ebit, self.d_ebit)

    def wires(self) -> tuple[list[int], list[int]]:
        k, m = len(self.dims_head), len(self.dims_tail)
        return list(range(k)) + [k + m], list(range(k, k + m)) + [k + m + 1]


def _check_program(s: SuperchannelSpec, p: ProgramState) -> None:
    if p.dims_head != s.dims_head or p.dims_tail != s.dims_tail:
        raise DimensionError(f"spec for {s.dims_head}|{s.dims_tail} cannot act on {p.dims_head}|{p.dims_tail}")


def apply_superchannel(s: SuperchannelSpec, p: ProgramState) -> tuple[ProgramState, float]:
    """Attach an ebit, apply ``V x U``, trace the ebit head and project its tail on ``|0>``."""
    _check_program(s, p)
    dims = s.dims
    state = np.kron(p.data, ebit_vector(s.d_ebit)) if p.is_pure else np.kron(
        p.matrix, np.outer(ebit_vector(s.d_ebit), ebit_vector(s.d_ebit).conj())
    )
    head_w, tail_w = s.wires()
    state = apply_to_wires(s.V, state, head_w, dims)
    state = apply_to_wires(s.U, state, tail_w, dims)
    proj = np.zeros((s.d_ebit, s.d_ebit))
    proj[0, 0] = 1.0
    state = apply_to_wires(proj, state, [len(dims) - 1], dims)
    if state.ndim == 1:
        state = np.outer(state, state.conj())
    n = len(p.dims)
    out = partial_trace(state, list(range(n)), dims)
    prob = float(np.trace(out).real)
    if prob <= 1e-14:
        raise InvalidChannelError("ebit projection has zero probability for this spec")
    log.debug("superchannel consumed 1 ebit, projection probability %.6f", prob)
    return ProgramState(out / prob, p.dims_head, p.dims_tail), prob


def superchannel_kraus(s: SuperchannelSpec) -> list[np.ndarray]:
    """Kraus operators of the (trace non-increasing) linear map on programs.

    ``K_i = (1 x <i|_eh x <0|_et) (V x U) (1 x |omega>)`` with the ebit head
    summed over ``i``.
    """
    dh, dt, de = math.prod(s.dims_head), math.prod(s.dims_tail), s.d_ebit
    # V on (h, eh), U on (t, et) -> full operator on (h, t, eh, et)
    v = s.V.reshape(dh, de, dh, de)
    u = s.U.reshape(dt, de, dt, de)
    w = np.einsum("aibj,ckdl->acikbdjl", v, u)
    omega = ebit_vector(de).reshape(de, de)
    attached = np.einsum("acikbdjl,jl->acikbd", w, omega)
    return [attached[:, :, i, 0, :, :].reshape(dh * dt, dh * dt) for i in range(de)]


def choi_of_superchannel(s: SuperchannelSpec) -> tuple[np.ndarray, float]:
    """Unit-trace dual state of the superchannel and the trace divided out.

    Wires: output head, output tail, reference head, reference tail.
    """
    ks = superchannel_kraus(s)
    ch = Channel(kraus=ks, dims_in=s.dims_head + s.dims_tail, dims_out=s.dims_head + s.dims_tail)
    c = ch.choi
    tr = float(np.trace(c).real)
    return c / tr, tr


def superchannel_program(s: SuperchannelSpec) -> ProgramState:
    """The stored form of ``s``: a program whose head and tail are whole programs."""
    c, tr = choi_of_superchannel(s)
    io = s.dims_head + s.dims_tail
    return ProgramState(c, io, io, norm_factor=tr)


def apply_stored_superchannel(stored: ProgramState, p: ProgramState) -> ProgramState:
    """Run a stored superchannel on ``p`` through the write-in protocol."""
    from qvn.memory import write_input

    if stored.dims_tail != p.dims:
        raise DimensionError("stored superchannel does not accept this program")
    out = write_input(stored, p.matrix)
    k = len(p.dims_head)
    return ProgramState(out.head_state.matrix, stored.dims_head[:k], stored.dims_head[k:])


@dataclass(frozen=True)
class SuperchannelReport:
    passed: bool
    trials: int
    max_tail_deviation: float
    min_eigenvalue: float
    min_probability: float
    tail_unital: bool
    tail_unitality_residual: float
    tol: float


def tail_action_residual(s: SuperchannelSpec) -> float:
    """How far ``<0|_et U (1 x 1) U^+ |0>_et`` is from a multiple of the identity."""
    dt, de = math.prod(s.dims_tail), s.d_ebit
    u = s.U.reshape(dt, de, dt * de)[:, 0, :]
    a = u @ u.conj().T
    scale = np.trace(a).real / dt
    return float(np.abs(a - scale * np.eye(dt)).max() / max(scale, 1e-300))


def validate_superchannel(s: SuperchannelSpec, trials: int = 20, seed=None, tol: float = 1e-8) -> SuperchannelReport:
    """Feed random trace-preserving programs through ``s`` and check the outputs are programs."""
    rng = as_rng(seed)
    d_in, d_out = math.prod(s.dims_tail), math.prod(s.dims_head)
    worst_dev, worst_eig, worst_prob = 0.0, np.inf, np.inf
    for _ in range(trials):
        ch = random_channel(d_in, d_out, rng)
        p = choi_of(ch)
        p = ProgramState(p.data, s.dims_head, s.dims_tail)
        out, prob = apply_superchannel(s, p)
        worst_prob = min(worst_prob, prob)
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(out.matrix).min()))
        dev = np.abs(out.tail_marginal() - np.eye(d_in) / d_in).max()
        worst_dev = max(worst_dev, float(dev))
    unital_res = tail_action_residual(s)
    passed = worst_dev <= tol and worst_eig >= -tol
    return SuperchannelReport(
        passed=bool(passed),
        trials=trials,
        max_tail_deviation=worst_dev,
        min_eigenvalue=float(worst_eig),
        min_probability=float(worst_prob),
        tail_unital=bool(unital_res <= tol),
        tail_unitality_residual=unital_res,
        tol=tol,
    )


def spec_to_dict(s: SuperchannelSpec, metadata: dict | None = None) -> dict:
    return {
        "schema": SCHEMA,
        "kind": "superchannel",
        "dims_head": list(s.dims_head),
        "dims_tail": list(s.dims_tail),
        "dims_ebit": s.d_ebit,
        "V": encode_array(s.V),
        "U": encode_array(s.U),
        "metadata": dict(metadata or {}),
    }


def spec_from_dict(doc: dict) -> SuperchannelSpec:
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA or doc.get("kind") != "superchannel":
        raise FormatError("not a superchannel document")
    try:
        dh, dt, de = tuple(doc["dims_head"]), tuple(doc["dims_tail"]), int(doc["dims_ebit"])
    except (KeyError, TypeError, ValueError):
        raise FormatError("superchannel document is missing dimensions") from None
    nv, nu = math.prod(dh) * de, math.prod(dt) * de
    return SuperchannelSpec(decode_array(doc.get("V"), (nv, nv)), decode_array(doc.get("U"), (nu, nu)), dh, dt, de)
