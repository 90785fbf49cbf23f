"""Independent reference implementations shared by several test modules."""

import numpy as np
from scipy import optimize

from qvn.channels import GATES
from qvn.circuit import TailedCircuit
from qvn.covariant import binary_icosahedral


def statevector(c: TailedCircuit, inputs):
    """Independent oracle: full-matrix statevector simulation."""
    n = c.n_wires
    psi = np.array([1.0 + 0j])
    for v in inputs:
        psi = np.kron(psi, v)
    for g in c.gates:
        if not g.active:
            continue
        if g.kind == "CNOT":
            ctl, tgt = g.wires
            u = np.zeros((2**n, 2**n))
            for k in range(2**n):
                bits = [(k >> (n - 1 - w)) & 1 for w in range(n)]
                if bits[ctl]:
                    bits[tgt] ^= 1
                u[int("".join(map(str, bits)), 2), k] = 1
        else:
            (w,) = g.wires
            u = np.kron(np.kron(np.eye(2**w), GATES[g.kind]), np.eye(2 ** (n - w - 1)))
        psi = u @ psi
    return np.outer(psi, psi.conj())


def dense_n1_optimum(seed=0, restarts=6):
    """Brute force for n = 1: best 4-dim program over all covariant seeds (W x 1)|omega>."""
    g = binary_icosahedral()
    weights = np.abs(np.trace(g, axis1=1, axis2=2)) ** 2 / 4

    def top(params):
        a, b, c, d = params
        w = np.array(
            [[np.cos(a) * np.exp(1j * b), np.sin(a) * np.exp(1j * c)],
             [-np.sin(a) * np.exp(-1j * c), np.cos(a) * np.exp(-1j * b)]]
        ) * np.exp(1j * d)
        # squared norm 4, so uniform weights 1/120 give sum_g E_g = identity
        eta = np.sqrt(2) * w.reshape(-1)
        vecs = np.array([np.kron(m, np.eye(2)) @ eta for m in g])
        q = (vecs.T * (weights / 120)) @ vecs.conj()
        return np.linalg.eigvalsh(q)[-1]

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        res = optimize.minimize(lambda x: -top(x), rng.uniform(0, 2 * np.pi, 4), method="Nelder-Mead")
        best = max(best, -res.fun)
    return (2 * best + 1) / 3
