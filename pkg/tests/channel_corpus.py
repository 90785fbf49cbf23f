"""Channel corpora shared by the classifier tests and the acceptance suite."""

import numpy as np

from qvn.channels import Channel, random_channel
from qvn.kernel import haar_random_unitary, random_density


def measure_prepare(rng, d_in=2, d_out=2, outcomes=3):
    """Random entanglement-breaking channel sum_i tr(F_i rho) sigma_i."""
    g = [rng.standard_normal((d_in, d_in)) + 1j * rng.standard_normal((d_in, d_in)) for _ in range(outcomes)]
    povm = [a @ a.conj().T for a in g]
    total = sum(povm)
    w, v = np.linalg.eigh(total)
    inv_sqrt = v @ np.diag(w**-0.5) @ v.conj().T
    povm = [inv_sqrt @ f @ inv_sqrt for f in povm]
    kraus = []
    for f in povm:
        sigma = random_density(d_out, rng).matrix
        sw, sv = np.linalg.eigh(sigma)
        fw, fv = np.linalg.eigh(f)
        for a in range(d_out):
            for b in range(d_in):
                if sw[a] > 1e-14 and fw[b] > 1e-14:
                    kraus.append(np.sqrt(sw[a] * fw[b]) * np.outer(sv[:, a], fv[:, b].conj()))
    return Channel(kraus=kraus, dims_in=(d_in,), dims_out=(d_out,))


def corpus(n, seed):
    """Mixed corpus of two-qubit channels with known construction."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        kind = ["product", "eb", "eb_global", "global", "unitary", "local_unitary"][i % 6]
        if kind == "product":
            ch = random_channel(2, seed=rng).tensor(random_channel(2, seed=rng))
        elif kind == "eb":
            # mixture of products of local measure-and-prepare channels: EB and separable
            p = rng.random()
            a = measure_prepare(rng).tensor(measure_prepare(rng))
            b = measure_prepare(rng).tensor(measure_prepare(rng))
            ch = Channel(kraus=[np.sqrt(p) * k for k in a.kraus] + [np.sqrt(1 - p) * k for k in b.kraus],
                         dims_in=(2, 2), dims_out=(2, 2))
        elif kind == "eb_global":
            # global measurement, possibly entangled preparations: EB but not necessarily separable
            ch = measure_prepare(rng, 4, 4)
            ch = Channel(kraus=ch.kraus, dims_in=(2, 2), dims_out=(2, 2))
        elif kind == "global":
            ch = random_channel(4, seed=rng, n_kraus=int(rng.integers(1, 5)))
            ch = Channel(kraus=ch.kraus, dims_in=(2, 2), dims_out=(2, 2))
        elif kind == "unitary":
            ch = Channel.from_unitary(haar_random_unitary(4, rng), (2, 2))
        else:
            ch = Channel.from_unitary(np.kron(haar_random_unitary(2, rng), haar_random_unitary(2, rng)), (2, 2))
        out.append((kind, ch))
    return out
