"""Covariant programming of qubit unitaries (the nonlocal-program engine).

A program for ``U`` is ``|p_U> = (U^{(x)n} x 1)|Phi>`` on ``2n`` qubits: ``n``
program slots followed by ``n`` reference slots.  Decoding measures the
program with the covariant POVM ``{w_g (g^{(x)n} x 1)|eta><eta|(...)^+}`` and
rotates the data qubit by the outcome ``g``.

``Phi`` is built from the total-spin sectors ``j`` of the ``n`` program
slots::

    Phi = sum_j c_j sqrt(2^n / (d_j m_j)) (P_j x 1)|omega_{2^n}>
    eta = sum_j sqrt(2^n d_j / m_j)     (P_j x 1)|omega_{2^n}>

with ``P_j`` the spin-``j`` projector, ``d_j = 2j + 1`` and ``m_j`` its
multiplicity.  Both states are invariant under permuting (program, reference)
slot pairs, and the decode entanglement fidelity is the quadratic form
``c^T M c`` with ``M_jk = int chi_j chi_k |chi_1/2|^2 / 4 dU``.

The Haar integral over outcomes is discretized with the binary icosahedral
group (a unitary 5-design, exact for ``n <= 4``) or with Monte Carlo samples.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from qvn.errors import DimensionError, QvnError
from qvn.kernel import DensityOperator, PureState, as_rng, haar_random_unitary, random_pure_state

COMPLETENESS_THRESHOLD = 1e-6
DESIGN_ORDER = 5


class RejectedPOVM(QvnError):
    """The discretized POVM is too far from complete."""


class OptimizerError(QvnError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# Spin sectors
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def spin_sectors(n: int) -> tuple[tuple[float, np.ndarray, int], ...]:
    """``(j, P_j, m_j)`` for the total spin of ``n`` qubits, highest ``j`` first."""
    sx = np.array([[0, 1], [1, 0]]) / 2
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    sz = np.array([[1, 0], [0, -1]]) / 2
    dim = 2**n
    j2 = np.zeros((dim, dim), dtype=complex)
    for s in (sx, sy, sz):
        total = sum(
            np.kron(np.kron(np.eye(2**k), s), np.eye(2 ** (n - k - 1))) for k in range(n)
        )
        j2 += total @ total
    evals, evecs = np.linalg.eigh(j2)
    sectors = []
    j = n / 2
    while j >= 0:
        mask = np.abs(evals - j * (j + 1)) < 1e-6
        vecs = evecs[:, mask]
        proj = vecs @ vecs.conj().T
        m = int(round(mask.sum() / (2 * j + 1)))
        sectors.append((j, proj, m))
        j -= 1
    return tuple(sectors)


def spin_character(j: float, theta):
    """``chi_j`` on the SU(2) class with rotation angle ``theta``."""
    theta = np.asarray(theta, dtype=float)
    half = np.sin(theta / 2)
    small = np.abs(half) < 1e-12
    # limit at theta = 0 (mod 4 pi) is d_j; at theta = 2 pi it picks up (-1)^{2j}
    sign = np.where(np.cos(theta / 2) > 0, 1.0, (-1.0) ** round(2 * j))
    val = np.sin((2 * j + 1) * theta / 2) / np.where(small, 1.0, half)
    return np.where(small, sign * (2 * j + 1), val)


def sector_fidelity_matrix(n: int) -> np.ndarray:
    """``M_jk = int chi_j chi_k |chi_1/2|^2 / 4 dU`` by the Weyl integration formula."""
    spins = [j for j, _, _ in spin_sectors(n)]
    k = len(spins)
    m = np.zeros((k, k))
    for a, b in itertools.product(range(k), repeat=2):
        if b < a:
            m[a, b] = m[b, a]
            continue

        def integrand(theta, ja=spins[a], jb=spins[b]):
            # Haar measure on classes: (1/pi) sin^2(theta/2) d theta on [0, 2 pi]
            sa = np.sin((2 * ja + 1) * theta / 2)
            sb = np.sin((2 * jb + 1) * theta / 2)
            return sa * sb * np.cos(theta / 2) ** 2 / np.pi

        m[a, b] = integrate.quad(integrand, 0, 2 * np.pi, limit=200, epsabs=1e-13, epsrel=1e-13)[0]
    return m


# ---------------------------------------------------------------------------
# Program state family
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProgramStateFamily:
    n: int
    d: int
    phi: np.ndarray
    sector_coefficients: np.ndarray
    spins: tuple[float, ...]
    average_fidelity: float = float("nan")
    converged: bool = True

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.d,) * (2 * self.n)

    @property
    def epsilon(self) -> float:
        return 1.0 - self.average_fidelity


def _sector_vector(proj: np.ndarray, n: int) -> np.ndarray:
    """``(P x 1)|omega_{2^n}>`` over (program slots, reference slots)."""
    dim = 2**n
    return proj.reshape(-1) / np.sqrt(dim)


def phi_from_coefficients(n: int, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    sectors = spin_sectors(n)
    if coeffs.shape != (len(sectors),):
        raise DimensionError(f"expected {len(sectors)} sector coefficients for n={n}")
    coeffs = coeffs / np.linalg.norm(coeffs)
    phi = np.zeros(4**n, dtype=complex)
    for c, (j, proj, m) in zip(coeffs, sectors):
        phi += c * np.sqrt(2**n / ((2 * j + 1) * m)) * _sector_vector(proj, n)
    return phi


def seed_vector(n: int) -> np.ndarray:
    """Unnormalized covariant POVM seed; squared norm is ``sum_j d_j^2``."""
    eta = np.zeros(4**n, dtype=complex)
    for j, proj, m in spin_sectors(n):
        eta += np.sqrt(2**n * (2 * j + 1) / m) * _sector_vector(proj, n)
    return eta


def entanglement_to_average(f_e: float, d: int = 2) -> float:
    return (d * f_e + 1) / (d + 1)


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    restarts: int = 8
    tol: float = 1e-12


def optimize_phi(n: int, d: int = 2, config: OptimizerConfig | None = None) -> ProgramStateFamily:
    """Best program state within the permutation-symmetric sector ansatz.

    Maximizes the Rayleigh quotient ``c^T M c / c^T c`` with seeded BFGS
    restarts; the result is deterministic for a fixed config.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if d != 2:
        raise NotImplementedError("the sector optimizer supports qubits only")
    config = config or OptimizerConfig()
    m = sector_fidelity_matrix(n)
    k = m.shape[0]
    rng = np.random.default_rng(config.seed)

    def loss(c):
        return -(c @ m @ c) / (c @ c)

    def grad(c):
        cc = c @ c
        return -(2 * m @ c * cc - 2 * c * (c @ m @ c)) / cc**2

    best = None
    for _ in range(config.restarts):
        start = np.abs(rng.standard_normal(k)) + 0.1
        res = optimize.minimize(loss, start, jac=grad, method="BFGS", options={"gtol": config.tol})
        if best is None or res.fun < best.fun:
            best = res
    coeffs = best.x / np.linalg.norm(best.x)
    coeffs = coeffs * np.sign(coeffs.sum() or 1.0)
    f_e = float(coeffs @ m @ coeffs)
    # stationarity check: the optimum is an eigenvector of M
    residual = float(np.linalg.norm(m @ coeffs - f_e * coeffs))
    converged = residual < 1e-6
    fam = ProgramStateFamily(
        n=n,
        d=d,
        phi=phi_from_coefficients(n, coeffs),
        sector_coefficients=coeffs,
        spins=tuple(j for j, _, _ in spin_sectors(n)),
        average_fidelity=entanglement_to_average(f_e, d),
        converged=converged,
    )
    if not converged:
        raise OptimizerError(f"optimizer did not converge (residual {residual:.2e})", best=fam)
    return fam


def build_program_state(u: np.ndarray, fam: ProgramStateFamily) -> PureState:
    """``(U^{(x)n} x 1)|Phi>``."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (fam.d, fam.d):
        raise DimensionError(f"expected a {fam.d}x{fam.d} unitary")
    dim = fam.d**fam.n
    un = _tensor_power(u, fam.n)
    return PureState((un @ fam.phi.reshape(dim, dim)).reshape(-1), fam.dims)


def _tensor_power(u: np.ndarray, n: int) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for _ in range(n):
        out = np.kron(out, u)
    return out


class SealedProgram:
    """A program handed to the decoder: the state only, never the unitary."""

    __slots__ = ("_vector", "n", "d")

    def __init__(self, state: PureState, n: int, d: int = 2):
        if state.vector.size != d ** (2 * n):
            raise DimensionError("program state does not have 2n qudits")
        self._vector = state.vector.copy()
        self.n = n
        self.d = d

    @property
    def state(self) -> PureState:
        return PureState(self._vector.copy(), (self.d,) * (2 * self.n))

    def __repr__(self):
        return f"<SealedProgram n={self.n} d={self.d}>"


def encode_isometry(u: np.ndarray, fam: ProgramStateFamily, data=None):
    """``|f> = U|d>  ->  |d> |p_U>``: returns the data slot and the sealed program."""
    if data is None:
        data = PureState(np.eye(fam.d)[0], (fam.d,))
    return data, SealedProgram(build_program_state(u, fam), fam.n, fam.d)


# ---------------------------------------------------------------------------
# Covariant POVM
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def binary_icosahedral() -> np.ndarray:
    """The 120 elements of the binary icosahedral group as SU(2) matrices."""
    phi = (1 + np.sqrt(5)) / 2
    quats = set()
    for i in range(4):
        for s in (1, -1):
            q = [0.0] * 4
            q[i] = s
            quats.add(tuple(q))
    for signs in itertools.product((0.5, -0.5), repeat=4):
        quats.add(signs)
    base = (0.0, 0.5, phi / 2, 1 / (2 * phi))
    even = [p for p in itertools.permutations(range(4)) if _parity(p) == 0]
    for perm in even:
        for signs in itertools.product((1, -1), repeat=3):
            vals = [base[0], signs[0] * base[1], signs[1] * base[2], signs[2] * base[3]]
            quats.add(tuple(round(vals[perm[k]], 15) + 0.0 for k in range(4)))
    mats = [np.array([[a + 1j * b, c + 1j * dd], [-c + 1j * dd, a - 1j * b]]) for a, b, c, dd in sorted(quats)]
    group = np.array(mats)
    if len(group) != 120:
        raise RuntimeError(f"expected 120 group elements, built {len(group)}")
    return group


def _parity(perm) -> int:
    perm = list(perm)
    swaps = 0
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            swaps += 1
    return swaps % 2


@dataclass(frozen=True, eq=False)
class CovariantPOVM:
    n: int
    d: int
    seed_vector: PureState
    unitaries: np.ndarray
    weights: np.ndarray
    completeness_residual: float
    sampling: str
    _elements: np.ndarray = field(repr=False, default=None)

    @property
    def sample(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.unitaries, self.weights))

    def element(self, k: int) -> np.ndarray:
        v = self._elements[k]
        return self.weights[k] * np.outer(v, v.conj())

    def outcome_probabilities(self, program: np.ndarray) -> np.ndarray:
        amps = self._elements.conj() @ program
        return self.weights * np.abs(amps) ** 2

    def completeness_operator(self) -> np.ndarray:
        a = self._elements
        return (a.T * self.weights) @ a.conj()


def build_covariant_povm(
    fam: ProgramStateFamily,
    sampling: str = "design",
    m: int = 1000,
    seed=None,
    threshold: float | None = COMPLETENESS_THRESHOLD,
) -> CovariantPOVM:
    """Discretize the covariant POVM.

    ``sampling="design"`` uses the binary icosahedral group (exact when
    ``n + 1 <= 5``); ``"monte_carlo"`` uses ``m`` Haar samples with uniform
    weights.  POVMs whose completeness residual exceeds ``threshold`` raise
    :class:`RejectedPOVM`; pass ``threshold=None`` to inspect them anyway.
    """
    n, d = fam.n, fam.d
    if d != 2:
        raise NotImplementedError("covariant POVMs are implemented for qubits")
    if sampling == "design":
        if n + 1 > DESIGN_ORDER:
            raise ValueError(f"the icosahedral design is exact only up to n = {DESIGN_ORDER - 1}")
        unitaries = binary_icosahedral()
    elif sampling == "monte_carlo":
        rng = as_rng(seed)
        unitaries = np.array([haar_random_unitary(2, rng) for _ in range(m)])
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    eta = seed_vector(n)
    norm2 = float(np.vdot(eta, eta).real)
    eta_hat = eta / np.sqrt(norm2)
    dim = 2**n
    eta_mat = eta_hat.reshape(dim, dim)
    elements = np.array([(_tensor_power(g, n) @ eta_mat).reshape(-1) for g in unitaries])
    weights = np.full(len(unitaries), norm2 / len(unitaries))
    povm = CovariantPOVM(n, d, PureState(eta_hat, fam.dims), unitaries, weights, 0.0, sampling, elements)
    residual = completeness_residual(povm)
    povm = CovariantPOVM(n, d, povm.seed_vector, unitaries, weights, residual, sampling, elements)
    if threshold is not None and residual > threshold:
        raise RejectedPOVM(f"completeness residual {residual:.3e} exceeds {threshold:.1e}")
    return povm


def completeness_residual(povm: CovariantPOVM) -> float:
    """Operator-norm distance of ``sum_g E_g`` from the projector onto its support."""
    s = povm.completeness_operator()
    evals = np.linalg.eigvalsh((s + s.conj().T) / 2)
    support = evals[evals > 1e-8 * max(evals.max(), 1.0)]
    return float(np.abs(support - 1).max())


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def _program_vector(program) -> np.ndarray:
    if isinstance(program, SealedProgram):
        return program.state.vector
    if isinstance(program, PureState):
        return program.vector
    raise TypeError("decode takes a SealedProgram or PureState")


def _data_matrix(data) -> np.ndarray:
    if isinstance(data, PureState):
        return np.outer(data.vector, data.vector.conj())
    if isinstance(data, DensityOperator):
        return data.matrix
    data = np.asarray(data, dtype=complex)
    return np.outer(data, data.conj()) if data.ndim == 1 else data


def decode(data, program, povm: CovariantPOVM, rng=None, shots: int | None = None) -> DensityOperator:
    """Measure the program with the POVM and rotate ``data`` by the outcome.

    Without ``shots`` the outcome average is computed exactly over the
    discretized POVM; with ``shots`` outcomes are sampled from ``rng``.
    """
    vec = _program_vector(program)
    if vec.size != povm._elements.shape[1]:
        raise DimensionError("program does not match the POVM")
    rho = _data_matrix(data)
    if rho.shape != (povm.d, povm.d):
        raise DimensionError("data must be a single qudit")
    probs = povm.outcome_probabilities(vec)
    total = probs.sum()
    probs = probs / total
    gs = povm.unitaries
    if shots is None:
        out = np.einsum("k,kab,bc,kdc->ad", probs, gs, rho, gs.conj())
    else:
        picks = as_rng(rng).choice(len(gs), size=shots, p=probs)
        counts = np.bincount(picks, minlength=len(gs)) / shots
        out = np.einsum("k,kab,bc,kdc->ad", counts, gs, rho, gs.conj())
    return DensityOperator(out, (povm.d,))


def decode_entanglement_fidelity(program, povm: CovariantPOVM, target: np.ndarray) -> float:
    """``<omega_U|(C x 1)(omega)|omega_U>`` for the decode channel ``C``; scoring only."""
    probs = povm.outcome_probabilities(_program_vector(program))
    probs = probs / probs.sum()
    overlaps = np.abs(np.einsum("ab,kab->k", np.asarray(target).conj(), povm.unitaries)) ** 2 / povm.d**2
    return float(probs @ overlaps)


def decode_average_fidelity(program, povm: CovariantPOVM, target: np.ndarray) -> float:
    return entanglement_to_average(decode_entanglement_fidelity(program, povm, target), povm.d)


def blind_compose(programs, data, povm: CovariantPOVM, rng=None, shots: int | None = None) -> DensityOperator:
    """Decode a chain of programs, feeding each output in as the next data."""
    programs = list(programs)
    if not programs:
        raise ValueError("need at least one program")
    state = data
    for p in programs:
        state = decode(state, p, povm, rng, shots)
    return state


def sampled_fidelity(fam: ProgramStateFamily, povm: CovariantPOVM, samples: int, seed=None) -> tuple[float, float]:
    """Monte Carlo estimate of the average fidelity over Haar ``U``, data and outcomes.

    Returns ``(mean, standard error)``.
    """
    rng = as_rng(seed)
    vals = np.empty(samples)
    for s in range(samples):
        u = haar_random_unitary(fam.d, rng)
        psi = random_pure_state(fam.d, rng)
        p = build_program_state(u, fam).vector
        probs = povm.outcome_probabilities(p)
        k = rng.choice(len(probs), p=probs / probs.sum())
        g = povm.unitaries[k]
        vals[s] = abs(np.vdot(u @ psi, g @ psi)) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


@dataclass(frozen=True)
class BenchRow:
    n: int
    fidelity: float
    epsilon: float
    sigma: float
    fidelity_sampled: float
    runtime: float


def bench(n_max: int, samples: int, seed: int) -> list[BenchRow]:
    rows = []
    rng = np.random.default_rng(seed)
    for n in range(1, n_max + 1):
        start = time.perf_counter()
        fam = optimize_phi(n, 2, OptimizerConfig(seed=seed))
        povm = build_covariant_povm(fam)
        u = haar_random_unitary(2, rng)
        f = decode_average_fidelity(build_program_state(u, fam), povm, u)
        mean, sigma = sampled_fidelity(fam, povm, samples, rng)
        rows.append(BenchRow(n, f, 1 - f, sigma, mean, time.perf_counter() - start))
    return rows


def family_to_dict(fam: ProgramStateFamily, povm: CovariantPOVM | None = None) -> dict:
    """Serialized program bundle: the resource state plus the decoder description."""
    from qvn.serialization import SCHEMA, encode_array

    doc = {
        "schema": SCHEMA,
        "kind": "program_family",
        "n": fam.n,
        "d": fam.d,
        "dims_head": [fam.d] * fam.n,
        "dims_tail": [fam.d] * fam.n,
        "vector": encode_array(fam.phi),
        "sector_coefficients": [float(c) for c in fam.sector_coefficients],
        "spins": list(fam.spins),
        "average_fidelity": fam.average_fidelity,
        "metadata": {},
    }
    if povm is not None:
        doc["povm"] = {"sampling": povm.sampling, "elements": len(povm.weights), "residual": povm.completeness_residual}
    return doc
