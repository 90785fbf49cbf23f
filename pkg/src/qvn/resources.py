"""Free-or-resource verdicts for programs in the three architecture generations.

* Generation I treats entanglement-breaking channels as free; their Choi
  states are separable across head|tail.
* Generation II treats separable bipartite channels as free (Choi state
  separable across the A|B cut, where A collects the head and tail wires of
  the first party).
* Generation III treats tensor products of local channels as free.

Separability is decided with the partial-transpose test, which is exact only
when the cut has total dimension at most 6.  Beyond that a PPT state yields
``"inconclusive"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from qvn.channels import Channel, ProgramState, choi_of, gate_program, is_cptp
from qvn.errors import DimensionError, InvalidChannelError
from qvn.kernel import DensityOperator, PureState, partial_trace, partial_transpose, permute_wires

YES, NO, INCONCLUSIVE = "yes", "no", "inconclusive"
FREE, RESOURCE, UNIVERSAL, UNKNOWN = "free", "resource", "universal-candidate", "inconclusive"
PPT_EXACT_DIM = 6
CNOT_MATCH_TOL = 1e-6


def _choi_layout(obj) -> tuple[np.ndarray, tuple[int, ...], tuple[int, ...]]:
    """Unit-trace Choi matrix with wires (outputs..., inputs...)."""
    if isinstance(obj, ProgramState):
        return obj.matrix, obj.dims_head, obj.dims_tail
    if isinstance(obj, Channel):
        return obj.choi, tuple(obj.dims_out), tuple(obj.dims_in)
    raise TypeError(f"expected a Channel or ProgramState, got {type(obj).__name__}")


def _check_cptp(obj, tol: float) -> None:
    if isinstance(obj, Channel):
        rep = is_cptp(obj, max(tol, 1e-9))
        if not rep.ok:
            raise InvalidChannelError(
                f"not CPTP (min Choi eigenvalue {rep.min_choi_eigenvalue:.3e}, TP residual {rep.tp_residual:.3e})"
            )
    else:
        obj.validate(max(tol, 1e-9))


def _as_density(state) -> tuple[np.ndarray, tuple[int, ...]]:
    if isinstance(state, DensityOperator):
        return state.matrix, state.dims
    if isinstance(state, PureState):
        return np.outer(state.vector, state.vector.conj()), state.dims
    if isinstance(state, ProgramState):
        return state.matrix, state.dims
    raise TypeError("negativity takes a DensityOperator, PureState or ProgramState")


def min_pt_eigenvalue(m: np.ndarray, part: Sequence[int], dims: Sequence[int]) -> float:
    pt = partial_transpose(m, part, dims)
    return float(np.linalg.eigvalsh((pt + pt.conj().T) / 2).min())


def negativity(state, cut: Sequence[int], dims: Sequence[int] | None = None) -> float:
    """Sum of the absolute negative eigenvalues of the partial transpose on ``cut``."""
    if isinstance(state, np.ndarray):
        if dims is None:
            raise DimensionError("raw matrices need explicit dims")
        m, dims = state, tuple(dims)
        if m.ndim == 1:
            m = np.outer(m, m.conj())
    else:
        m, dims = _as_density(state)
    cut = list(cut)
    if not cut or len(set(cut)) != len(cut) or any(not 0 <= w < len(dims) for w in cut) or len(cut) == len(dims):
        raise DimensionError(f"invalid cut {cut} for {len(dims)} wires")
    pt = partial_transpose(m, cut, dims)
    evals = np.linalg.eigvalsh((pt + pt.conj().T) / 2)
    return float(-evals[evals < 0].sum())


def is_entanglement_breaking(ch, tol: float = 1e-9) -> str:
    """PPT test of the Choi state across head|tail."""
    _check_cptp(ch, tol)
    choi, dh, dt = _choi_layout(ch)
    dims = dh + dt
    tail = list(range(len(dh), len(dims)))
    if min_pt_eigenvalue(choi, tail, dims) < -tol:
        return NO
    return YES if math.prod(dh) * math.prod(dt) <= PPT_EXACT_DIM else INCONCLUSIVE


@dataclass(frozen=True)
class Bipartition:
    """Wire split of a bipartite channel: ``a_out``/``a_in`` wires belong to party A."""

    n_out: int
    n_in: int
    a_out: tuple[int, ...]
    a_in: tuple[int, ...]

    @classmethod
    def first_wire(cls, n_out: int = 2, n_in: int = 2) -> "Bipartition":
        return cls(n_out, n_in, (0,), (0,))

    def cut(self) -> list[int]:
        """Party-A wires in the Choi layout (outputs, then inputs)."""
        return list(self.a_out) + [self.n_out + w for w in self.a_in]


def _bipartition(obj, bipartition: Bipartition | None) -> Bipartition:
    _, dh, dt = _choi_layout(obj)
    if bipartition is None:
        if len(dh) == 2 and len(dt) == 2:
            return Bipartition.first_wire()
        raise ValueError("channel needs bipartition metadata (declare two-wire inputs/outputs or pass a Bipartition)")
    if bipartition.n_out != len(dh) or bipartition.n_in != len(dt):
        raise DimensionError("bipartition does not match the channel wires")
    if not bipartition.a_out or not bipartition.a_in:
        raise ValueError("party A must hold at least one input and one output wire")
    if len(bipartition.a_out) == len(dh) or len(bipartition.a_in) == len(dt):
        raise ValueError("party B must hold at least one input and one output wire")
    return bipartition


def product_distance(obj, bipartition: Bipartition | None = None) -> float:
    """``max |omega - omega_A (x) omega_B|`` with the local Choi states taken as marginals."""
    bp = _bipartition(obj, bipartition)
    choi, dh, dt = _choi_layout(obj)
    dims = dh + dt
    a = bp.cut()
    b = [w for w in range(len(dims)) if w not in a]
    wa = partial_trace(choi, a, dims)
    wb = partial_trace(choi, b, dims)
    prod = np.kron(wa, wb)
    # prod has wires in order a + b; move them back to the Choi layout
    order = a + b
    perm = [order.index(w) for w in range(len(dims))]
    prod = permute_wires(prod, perm, [dims[w] for w in order])
    return float(np.abs(choi - prod).max())


def is_product_channel(obj, tol: float = 1e-9, bipartition: Bipartition | None = None) -> str:
    return YES if product_distance(obj, bipartition) < tol else NO


def is_separable_bipartite_channel(obj, tol: float = 1e-9, bipartition: Bipartition | None = None) -> str:
    bp = _bipartition(obj, bipartition)
    _check_cptp(obj, tol)
    if is_product_channel(obj, tol, bp) == YES:
        return YES
    choi, dh, dt = _choi_layout(obj)
    dims = dh + dt
    cut = bp.cut()
    if min_pt_eigenvalue(choi, cut, dims) < -tol:
        return NO
    d_a = math.prod(dims[w] for w in cut)
    d_b = math.prod(dims) // d_a
    return YES if d_a * d_b <= PPT_EXACT_DIM else INCONCLUSIVE


def entanglement_entropy(p) -> float:
    """Von Neumann entropy (natural log) of the head marginal of a pure program."""
    if isinstance(p, ProgramState):
        if not p.is_pure:
            m = p.matrix
            if abs(np.trace(m @ m).real - 1) > 1e-9:
                raise InvalidChannelError("entanglement entropy needs a pure program")
        rho = p.tail_marginal()
    else:
        raise TypeError("entanglement_entropy takes a ProgramState")
    evals = np.linalg.eigvalsh(rho)
    evals = evals[evals > 1e-15]
    return float(-(evals * np.log(evals)).sum())


def _is_unitary_program(p: ProgramState, tol: float) -> bool:
    """Pure with maximally mixed head marginal and square dims."""
    if p.d_head != p.d_tail:
        return False
    m = p.matrix
    if abs(np.trace(m @ m).real - 1) > tol:
        return False
    head = p.tail_marginal()
    return bool(np.abs(head - np.eye(p.d_head) / p.d_head).max() < tol)


@lru_cache(maxsize=None)
def cnot_negativity() -> float:
    return negativity(gate_program("CNOT"), Bipartition.first_wire().cut())


@dataclass(frozen=True)
class ResourceReport:
    verdicts: dict
    measures: dict
    tests: dict
    tol: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdicts": dict(self.verdicts), "measures": dict(self.measures), "tests": dict(self.tests),
                "tol": self.tol, "notes": list(self.notes)}


def classify(p, bipartition: Bipartition | None = None, tol: float = 1e-9) -> ResourceReport:
    """Per-generation verdicts with the supporting measures."""
    if isinstance(p, Channel):
        p = choi_of(p, tol)
    p.validate(max(tol, 1e-9))
    dims = p.dims
    head_tail_cut = list(p.tail_wires)
    unitary = _is_unitary_program(p, 1e-8)
    measures = {
        "negativity_head_tail": negativity(p, head_tail_cut),
        "unitary": unitary,
    }
    if p.is_pure or abs(np.trace(p.matrix @ p.matrix).real - 1) < 1e-9:
        measures["entanglement_entropy"] = entanglement_entropy(p)
    tests: dict = {"entanglement_breaking": is_entanglement_breaking(p, tol)}
    notes = []

    eb = tests["entanglement_breaking"]
    verdicts = {"QvN-I": FREE if eb == YES else (UNIVERSAL if unitary else RESOURCE) if eb == NO else UNKNOWN}

    bp = None
    if bipartition is not None or (len(p.dims_head) == 2 and len(p.dims_tail) == 2):
        bp = _bipartition(p, bipartition)
    if bp is None:
        verdicts["QvN-II"] = UNKNOWN
        verdicts["QvN-III"] = UNKNOWN
        notes.append("no bipartition: generations II and III not assessed")
    else:
        cut = bp.cut()
        neg = negativity(p, cut)
        dist = product_distance(p, bp)
        measures["negativity_ab"] = neg
        measures["product_distance"] = dist
        sep = is_separable_bipartite_channel(p, tol, bp)
        prod = YES if dist < tol else NO
        tests["separable"] = sep
        tests["product"] = prod
        if sep == YES:
            verdicts["QvN-II"] = FREE
        elif sep == NO:
            cnot_like = unitary and dims == (2, 2, 2, 2) and abs(neg - cnot_negativity()) < CNOT_MATCH_TOL
            verdicts["QvN-II"] = UNIVERSAL if cnot_like else RESOURCE
        else:
            verdicts["QvN-II"] = UNKNOWN
        verdicts["QvN-III"] = FREE if prod == YES else (UNIVERSAL if unitary else RESOURCE)
    return ResourceReport(verdicts, measures, tests, tol, notes)
