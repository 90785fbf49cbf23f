import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qvn.channels import (
    CNOT,
    H,
    Channel,
    ProgramState,
    T,
    X,
    Z,
    apply,
    apply_via_choi,
    channel_from_choi,
    choi_of,
    ebit,
    gate_program,
    identity_program,
    is_cptp,
    pauli,
    program_fidelity,
    random_channel,
    transpose_map_choi,
    unitary_program,
)
from qvn.errors import DimensionError, InvalidChannelError
from qvn.kernel import haar_random_unitary, random_density


def brute_choi(kraus, d_in):
    """(E x 1)(|omega><omega|) built from the definition, basis element by element."""
    d_out = kraus[0].shape[0]
    out = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            eij = np.zeros((d_in, d_in))
            eij[i, j] = 1
            img = sum(k @ eij @ k.conj().T for k in kraus)
            out += np.kron(img, eij) / d_in
    return out


def test_choi_matches_definition():
    ch = random_channel(3, 2, seed=1)
    assert np.abs(ch.choi - brute_choi(ch.kraus, 3)).max() < 1e-12


def test_choi_has_unit_trace_and_maximally_mixed_tail():
    ch = random_channel(2, 3, seed=2)
    p = choi_of(ch)
    assert abs(np.trace(p.matrix) - 1) < 1e-12
    assert np.abs(p.tail_marginal() - np.eye(2) / 2).max() < 1e-12


def test_kraus_round_trip_through_choi():
    ch = random_channel(3, seed=3)
    back = Channel(choi=ch.choi, dims_in=(3,), dims_out=(3,))
    rho = random_density(3, seed=4)
    assert np.abs(apply(back, rho).matrix - apply(ch, rho).matrix).max() < 1e-10


def test_identity_program_is_ebit():
    p = identity_program(2)
    assert np.allclose(p.data, ebit(2).vector)
    with pytest.raises(DimensionError):
        ebit(1)


def test_unitary_program_is_pure_choi():
    u = haar_random_unitary(3, seed=5)
    p = unitary_program(u)
    assert p.is_pure
    assert np.abs(p.matrix - brute_choi([u], 3)).max() < 1e-12


def test_gate_program_cnot_shape():
    p = gate_program("CNOT")
    assert p.dims_head == (2, 2) and p.dims_tail == (2, 2)
    assert np.allclose(p.data.reshape(4, 4) * 2, CNOT)


def test_depolarizing_outputs_maximally_mixed():
    for d in (2, 3):
        rho = random_density(d, seed=d)
        assert np.abs(apply(Channel.depolarizing(d), rho).matrix - np.eye(d) / d).max() < 1e-12
        assert np.abs(choi_of(Channel.depolarizing(d)).matrix - np.eye(d * d) / d**2).max() < 1e-12


def test_partial_depolarizing():
    rho = random_density(2, seed=6).matrix
    out = apply(Channel.depolarizing(2, 0.3), rho).matrix
    assert np.abs(out - (0.7 * rho + 0.3 * np.eye(2) / 2)).max() < 1e-12


def test_transpose_map_is_not_cp():
    ch = Channel(choi=transpose_map_choi(2), dims_in=(2,), dims_out=(2,))
    rep = is_cptp(ch)
    assert not rep.completely_positive
    assert rep.trace_preserving
    assert abs(rep.min_choi_eigenvalue + 0.5) < 1e-12
    assert not rep


def test_non_tp_detected():
    ch = Channel(kraus=[np.diag([1.0, 0.5])])
    rep = is_cptp(ch)
    assert rep.completely_positive and not rep.trace_preserving
    with pytest.raises(InvalidChannelError):
        choi_of(ch)


def test_channel_from_choi_rejects_non_tp():
    bad = ProgramState(np.diag([1.0, 0, 0, 0]), (2,), (2,))
    with pytest.raises(InvalidChannelError):
        channel_from_choi(bad)


def test_pauli_convention():
    assert np.allclose(pauli(1, 0), X)
    assert np.allclose(pauli(0, 1), Z)
    assert np.allclose(pauli(1, 1), X @ Z)
    w = np.exp(2j * np.pi / 3)
    assert np.allclose(pauli(0, 1, 3), np.diag([1, w, w**2]))


def test_then_and_tensor():
    h, t = Channel.from_gate("H"), Channel.from_gate("T")
    ht = h.then(t)
    assert np.allclose(choi_of(ht).matrix, unitary_program(T @ H).matrix)
    prod = h.tensor(t)
    assert prod.dims_in == (2, 2)
    assert np.allclose(prod.kraus[0], np.kron(H, T))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([(2, 2), (2, 3), (3, 2), (3, 3)]))
def test_apply_via_choi_matches_kraus(seed, dims):
    d_in, d_out = dims
    rng = np.random.default_rng(seed)
    ch = random_channel(d_in, d_out, rng)
    rho = random_density(d_in, rng)
    assert np.abs(apply_via_choi(choi_of(ch), rho) - apply(ch, rho).matrix).max() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_random_channels_are_cptp(seed):
    assert is_cptp(random_channel(3, 2, seed))


def test_program_fidelity_of_distinct_gates():
    # |<omega_H|omega_T>|^2 = |tr(H^+ T)|^2 / 4
    expected = abs(np.trace(H.conj().T @ T)) ** 2 / 4
    assert abs(program_fidelity(gate_program("H"), gate_program("T")) - expected) < 1e-12
