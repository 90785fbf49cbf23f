import numpy as np
import pytest

from qvn.channels import Channel, choi_of, program_distance, random_channel, unitary_program
from qvn.errors import DimensionError, InvalidChannelError
from qvn.kernel import haar_random_unitary
from qvn.superchannel import (
    SuperchannelSpec,
    apply_stored_superchannel,
    apply_superchannel,
    choi_of_superchannel,
    spec_from_dict,
    spec_to_dict,
    superchannel_program,
    validate_superchannel,
)


def random_spec(seed, d=2):
    rng = np.random.default_rng(seed)
    return SuperchannelSpec(haar_random_unitary(d * d, rng), haar_random_unitary(d * d, rng), (d,), (d,), d)


@pytest.mark.parametrize("d", [2, 3])
def test_identity_spec(d):
    p = choi_of(random_channel(d, seed=d))
    out, prob = apply_superchannel(SuperchannelSpec.identity((d,), (d,)), p)
    assert abs(prob - 1 / d) < 1e-12
    assert program_distance(out, p.to_density()) < 1e-12


def test_post_processing_gives_w_after_e():
    rng = np.random.default_rng(1)
    ch = random_channel(2, seed=rng)
    w = haar_random_unitary(2, rng)
    out, _ = apply_superchannel(SuperchannelSpec.post_processing(w), choi_of(ch))
    expected = choi_of(ch.then(Channel.from_unitary(w)))
    assert program_distance(out, expected.to_density()) < 1e-9


def test_pre_processing_gives_e_after_g_transpose():
    rng = np.random.default_rng(2)
    ch = random_channel(2, seed=rng)
    g = haar_random_unitary(2, rng)
    out, _ = apply_superchannel(SuperchannelSpec.pre_processing(g), choi_of(ch))
    expected = choi_of(Channel.from_unitary(g.T).then(ch))
    assert program_distance(out, expected.to_density()) < 1e-9


def test_stored_form_matches_direct_route():
    s = random_spec(3)
    stored = superchannel_program(s)
    for seed in range(5):
        p = choi_of(random_channel(2, seed=seed))
        direct, _ = apply_superchannel(s, p)
        via_memory = apply_stored_superchannel(stored, p)
        assert program_distance(direct, via_memory) < 1e-10


def test_superchannel_choi_is_positive_with_unit_trace():
    c, tr = choi_of_superchannel(random_spec(4))
    assert abs(np.trace(c) - 1) < 1e-12
    assert np.linalg.eigvalsh(c).min() > -1e-12
    assert tr > 0


def test_random_specs_pass_validation():
    for seed in range(3):
        rep = validate_superchannel(random_spec(seed), trials=20, seed=seed)
        assert rep.passed and rep.tail_unital
        assert abs(rep.min_probability - 0.5) < 1e-9


def test_non_unital_tail_is_flagged():
    u = np.kron(np.diag([1.0, np.sqrt(0.5)]), np.eye(2))
    s = SuperchannelSpec(np.eye(4), u, (2,), (2,), 2, check=False)
    rep = validate_superchannel(s, trials=5, seed=0)
    assert not rep.tail_unital
    assert not rep.passed


def test_unitarity_is_enforced():
    with pytest.raises(InvalidChannelError):
        SuperchannelSpec(np.eye(4) * 2, np.eye(4), (2,), (2,), 2)
    with pytest.raises(DimensionError):
        SuperchannelSpec(np.eye(4), np.eye(6), (2,), (2,), 2)


def test_wrong_program_dims():
    p = unitary_program(haar_random_unitary(3, seed=1))
    with pytest.raises(DimensionError):
        apply_superchannel(SuperchannelSpec.identity(), p)


def test_spec_round_trip():
    s = random_spec(5)
    back = spec_from_dict(spec_to_dict(s))
    assert np.array_equal(back.V, s.V) and np.array_equal(back.U, s.U)
