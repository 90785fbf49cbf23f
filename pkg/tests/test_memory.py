import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qvn import serialization
from qvn.channels import Channel, ProgramState, X, Z, apply, choi_of, gate_program, random_channel, unitary_program
from qvn.errors import DimensionError, InvalidChannelError, ProgramNotFound, RegistryError
from qvn.kernel import random_density, trace_distance
from qvn.memory import MemoryRegistry, read_expectation, stochastic_povm, stochastic_to_channel, write_input


@pytest.mark.parametrize("d", [2, 3])
def test_write_success_branch_is_channel_output(d):
    rng = np.random.default_rng(d)
    ch = random_channel(d, seed=rng)
    rho = random_density(d, rng)
    out = write_input(choi_of(ch), rho)
    assert out.success
    assert abs(out.probability - 1 / d) < 1e-12
    assert trace_distance(out.head_state.matrix, apply(ch, rho).matrix) < 1e-12


def test_write_failure_branch_is_complement():
    # the failure outcome feeds (1 - rho)/(d - 1) through the channel
    d = 3
    ch = random_channel(d, seed=11)
    rho = random_density(d, seed=12).matrix
    p = choi_of(ch)
    for seed in range(200):
        out = write_input(p, rho, mode="sample", seed=seed)
        if not out.success:
            break
    assert not out.success
    assert abs(out.outcome_probability - (1 - 1 / d)) < 1e-12
    ref = apply(ch, (np.eye(d) - rho) / (d - 1)).matrix
    assert trace_distance(out.head_state.matrix, ref) < 1e-12


def test_sampled_success_rate():
    p = gate_program("H")
    hits = sum(write_input(p, np.eye(2) / 2, mode="sample", seed=s).success for s in range(2000))
    assert abs(hits / 2000 - 0.5) < 0.05


def test_pure_input_on_unitary_program():
    u = np.array([[0, 1], [1, 0]], dtype=complex)
    out = write_input(unitary_program(u), np.array([1, 0]))
    assert np.allclose(out.head_state.matrix, np.diag([0, 1]))


def test_partial_write_leaves_program():
    cnot = gate_program("CNOT")
    one = np.array([0, 1])
    first = write_input(cnot, one, tail_wires=[0])
    assert first.head_state is None
    assert first.remainder.dims_tail == (2,)
    second = write_input(first.remainder, np.array([1, 0]))
    assert np.allclose(second.head_state.matrix, np.diag([0, 0, 0, 1]))
    assert abs(first.probability - 0.5) < 1e-12 and abs(second.probability - 0.5) < 1e-12


def test_write_rejects_bad_inputs():
    p = gate_program("H")
    with pytest.raises(DimensionError):
        write_input(p, np.eye(3) / 3)
    with pytest.raises(ValueError):
        write_input(p, np.eye(2) / 2, mode="guess")
    with pytest.raises(DimensionError):
        write_input(p, np.eye(2) / 2, tail_wires=[1])


def test_read_expectation():
    plus = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert abs(read_expectation(plus, X) - 1) < 1e-12
    assert abs(read_expectation(plus, Z)) < 1e-12
    with pytest.raises(ValueError):
        read_expectation(plus, np.array([[0, 1], [0, 0]]))


def random_stochastic(n, rng):
    s = rng.random((n, n))
    return s / s.sum(axis=0)


def test_stochastic_povm_reproduces_matrix():
    s = random_stochastic(4, np.random.default_rng(1))
    povm = stochastic_povm(s)
    assert np.allclose(sum(povm), np.eye(4))
    for i, f in enumerate(povm):
        for j in range(4):
            assert abs(f[j, j] - s[i, j]) < 1e-15


def test_markov_iteration_matches_matrix_power():
    rng = np.random.default_rng(2)
    s = random_stochastic(3, rng)
    ch = stochastic_to_channel(s)
    p0 = rng.dirichlet(np.ones(3))
    rho = np.diag(p0).astype(complex)
    for _ in range(5):
        rho = apply(ch, rho).matrix
    assert np.abs(np.diag(rho).real - np.linalg.matrix_power(s, 5) @ p0).max() < 1e-12


def test_stochastic_rejects_non_stochastic():
    with pytest.raises(ValueError):
        stochastic_to_channel(np.array([[0.5, 0.5], [0.6, 0.5]]))
    with pytest.raises(ValueError):
        stochastic_to_channel(np.array([[1.5, 0.0], [-0.5, 1.0]]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([2, 3]))
def test_write_probability_is_one_over_d(seed, d):
    rng = np.random.default_rng(seed)
    out = write_input(choi_of(random_channel(d, seed=rng)), random_density(d, rng))
    assert abs(out.probability - 1 / d) < 1e-10


# -- serialization ----------------------------------------------------------


def test_program_round_trip_is_exact(tmp_path):
    p = choi_of(random_channel(2, 3, seed=3))
    path = serialization.save_program(tmp_path / "p.json", p, {"origin": "test"})
    q = serialization.load_program(path)
    assert np.array_equal(q.matrix, p.matrix)
    assert q.dims_head == (3,) and q.dims_tail == (2,)
    assert serialization.metadata_of(serialization.load_document(path)) == {"origin": "test"}


def test_pure_program_round_trip_keeps_vector(tmp_path):
    p = gate_program("T")
    q = serialization.load_program(serialization.save_program(tmp_path / "t.json", p))
    assert q.is_pure and np.array_equal(q.data, p.data)


def test_kraus_document_loads_as_program():
    ch = random_channel(2, seed=4)
    doc = json.loads(serialization.dumps(serialization.channel_to_dict(ch)))
    p = serialization.program_from_dict(doc)
    assert np.abs(p.matrix - ch.choi).max() < 1e-12


def test_invalid_documents_rejected():
    good = serialization.program_to_dict(gate_program("H"))
    with pytest.raises(serialization.FormatError):
        serialization.program_from_dict({**good, "schema": "other"})
    with pytest.raises(serialization.FormatError):
        serialization.program_from_dict({**good, "dims_head": [3]})
    with pytest.raises(serialization.FormatError):
        serialization.loads('{"schema": \n')
    bad = serialization.program_to_dict(ProgramState(np.diag([1.0, 0, 0, 0]), (2,), (2,)))
    with pytest.raises(InvalidChannelError):
        serialization.program_from_dict(bad)


def test_parse_error_reports_line():
    with pytest.raises(serialization.FormatError, match="line 3"):
        serialization.loads('{\n"a": 1,\n"b": }\n')


# -- registry ---------------------------------------------------------------


def test_registry_persists(tmp_path):
    reg = MemoryRegistry(tmp_path)
    reg.save("h", gate_program("H"), {"note": "hadamard"})
    again = MemoryRegistry(tmp_path)
    assert again.list() == ["h"]
    p, meta = again.load_with_metadata("h")
    assert np.array_equal(p.data, gate_program("H").data)
    assert meta == {"note": "hadamard"}


def test_registry_collisions_and_missing(tmp_path):
    reg = MemoryRegistry(tmp_path)
    reg.save("x", gate_program("H"))
    with pytest.raises(RegistryError):
        reg.save("x", gate_program("T"))
    reg.save("x", gate_program("T"), overwrite=True)
    assert np.array_equal(reg.load("x").data, gate_program("T").data)
    with pytest.raises(ProgramNotFound):
        reg.fetch("missing")
    with pytest.raises(RegistryError):
        reg.save("../escape", gate_program("H"))


def test_registry_with_gates():
    reg = MemoryRegistry.with_gates()
    assert reg.list() == ["CNOT", "H", "T", "identity"]


def test_registry_rejects_corrupt_file(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(serialization.FormatError):
        MemoryRegistry(tmp_path).load("bad")
