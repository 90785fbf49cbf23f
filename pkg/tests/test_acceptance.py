"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` to see the summary lines.
"""

import io
import time
from pathlib import Path

import numpy as np
import pytest

from channel_corpus import corpus
from oracles import dense_n1_optimum, statevector
from qvn.channels import (
    CNOT,
    GATES,
    Channel,
    apply,
    choi_of,
    gate_program,
    identity_program,
    program_distance,
    program_fidelity,
    random_channel,
    unitary_program,
)
from qvn.circuit import compile_circuit, enumerate_switch, execute, random_circuit
from qvn.cli import main
from qvn.covariant import optimize_phi
from qvn.kernel import haar_random_unitary, random_density, random_pure_state, trace_distance
from qvn.memory import stochastic_to_channel, write_input
from qvn.resources import (
    Bipartition,
    classify,
    is_entanglement_breaking,
    is_product_channel,
    is_separable_bipartite_channel,
    negativity,
)
from qvn.superchannel import SuperchannelSpec, apply_superchannel, validate_superchannel
from qvn.teleport import (
    PauliFrame,
    commute_frame_through,
    compose_standard,
    correct_program,
    enumerate_compositions,
    interior_correction,
)

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def report(capsys):
    """Print a visible PASS/FAIL line, then assert."""

    def _report(label, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail} ({elapsed:.2f}s / {limit}s)")
        assert ok, detail

    return _report


def test_criterion_01_write_read_duality(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_dist, worst_prob = 0.0, 0.0
    for i in range(50):
        d = 2 + i % 2
        ch = random_channel(d, seed=rng)
        rho = random_density(d, rng)
        out = write_input(choi_of(ch), rho)
        worst_dist = max(worst_dist, trace_distance(out.head_state.matrix, apply(ch, rho).matrix))
        worst_prob = max(worst_prob, abs(out.probability - 1 / d))
    ok = out.success and worst_dist < 1e-10 and worst_prob < 1e-10
    report("1 write/read duality", ok, f"max trace distance {worst_dist:.2e}, max |p - 1/d| {worst_prob:.2e}",
           time.perf_counter() - t0, 10)


def test_criterion_02_teleportation(report):
    t0 = time.perf_counter()
    worst, outcomes = 1.0, 0
    for d in (2, 3):
        ident = identity_program(d)
        for r in enumerate_compositions(ident, ident):
            fixed = correct_program(r.program, interior_correction(r.frame, np.eye(d)))
            worst = min(worst, program_fidelity(fixed, ident))
            outcomes += 1
    ok = outcomes == 4 + 9 and worst >= 1 - 1e-10
    report("2 teleportation exactness", ok, f"{outcomes} outcomes, min fidelity {worst:.12f}",
           time.perf_counter() - t0, 5)


def test_criterion_03_composition(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    for i in range(30):
        d = 2 + i % 2
        u, v = haar_random_unitary(d, rng), haar_random_unitary(d, rng)
        res = compose_standard(unitary_program(u), unitary_program(v))
        worst = max(worst, program_distance(res.program, unitary_program(v @ u).to_density()))
    chain_worst = 1.0
    for _ in range(20):
        names = rng.choice(["H", "S", "X", "Z"], size=6)
        prog, frame, total = unitary_program(GATES[names[0]]), PauliFrame.identity(1), GATES[names[0]]
        for name in names[1:]:
            res = compose_standard(prog, unitary_program(GATES[name]), "frame_tracked", rng)
            frame, _ = commute_frame_through(res.frame.after(frame), name, [0])
            prog, total = res.program, GATES[name] @ total
        fixed = correct_program(prog, frame.correction())
        chain_worst = min(chain_worst, program_fidelity(fixed, unitary_program(total)))
    ok = worst < 1e-9 and chain_worst >= 1 - 1e-10
    report("3 composition", ok, f"max Choi distance {worst:.2e}, min chain fidelity {chain_worst:.12f}",
           time.perf_counter() - t0, 30)


def test_criterion_04_engine(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    worst, attempts = 0.0, []
    for _ in range(30):
        n = int(rng.integers(2, 5))
        c = random_circuit(n, int(rng.integers(1, 11)), rng)
        inputs = [random_pure_state(2, rng) for _ in range(n)]
        out, trace = execute(compile_circuit(c), inputs, rng)
        worst = max(worst, trace_distance(out.matrix, statevector(c, inputs)))
        attempts += trace.covariant_attempts
    mean = float(np.mean(attempts))
    sigma = np.sqrt(12 / len(attempts))  # geometric, p = 1/4
    ok = worst < 1e-8 and abs(mean - 4) < 5 * sigma
    report("4 engine oracle equivalence", ok,
           f"max trace distance {worst:.2e}, covariant attempts mean {mean:.2f} over {len(attempts)} steps "
           f"(5 sigma = {5 * sigma:.2f})", time.perf_counter() - t0, 120)


def test_criterion_05_switch(report):
    t0 = time.perf_counter()
    worst = 1.0
    for name in ("H", "T", "CNOT"):
        p = gate_program(name)
        ident = identity_program(p.dims_head)
        for state, target in (("on", p), ("off", ident)):
            branches = list(enumerate_switch(p, state))
            assert abs(sum(b[2] for b in branches) - 1) < 1e-12
            worst = min(worst, min(program_fidelity(q, target) for _, q, _ in branches))
    report("5 switchability", worst >= 1 - 1e-10, f"min fidelity over all outcomes {worst:.12f}",
           time.perf_counter() - t0, 10)


def test_criterion_06_superchannel(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    id_dev, id_prob = 0.0, 0.0
    for d in (2, 3):
        p = choi_of(random_channel(d, seed=rng))
        out, prob = apply_superchannel(SuperchannelSpec.identity((d,), (d,)), p)
        id_dev = max(id_dev, program_distance(out, p.to_density()))
        id_prob = max(id_prob, abs(prob - 1 / d))
    ch = random_channel(2, seed=rng)
    w = haar_random_unitary(2, rng)
    out, _ = apply_superchannel(SuperchannelSpec.post_processing(w), choi_of(ch))
    post_dev = program_distance(out, choi_of(ch.then(Channel.from_unitary(w))).to_density())
    spec = SuperchannelSpec(haar_random_unitary(4, rng), haar_random_unitary(4, rng), (2,), (2,), 2)
    rep = validate_superchannel(spec, trials=50, seed=rng)
    ok = id_dev < 1e-12 and id_prob < 1e-12 and post_dev < 1e-9 and rep.passed
    report("6 superchannel", ok,
           f"identity dev {id_dev:.2e}, post-processing dev {post_dev:.2e}, "
           f"50 outputs valid={rep.passed} (min eig {rep.min_eigenvalue:.1e})", time.perf_counter() - t0, 30)


def test_criterion_07_hierarchy(report):
    t0 = time.perf_counter()
    ab = Bipartition.first_wire().cut()
    checks = {
        "depolarizing EB-free": classify(choi_of(Channel.depolarizing(2))).verdicts["QvN-I"] == "free",
        "identity non-EB": is_entanglement_breaking(Channel.identity(2)) == "no",
        "CNOT NPT": negativity(gate_program("CNOT"), ab) > 0.25
        and is_separable_bipartite_channel(Channel.from_unitary(CNOT, (2, 2))) == "no",
        "CNOT universal-candidate": classify(gate_program("CNOT")).verdicts["QvN-II"] == "universal-candidate",
        "product PROC-free": classify(unitary_program(np.kron(GATES["H"], GATES["T"]), (2, 2))).verdicts["QvN-III"]
        == "free",
    }
    violations = 0
    for kind, ch in corpus(200, seed=707):
        prod = is_product_channel(ch)
        sep = is_separable_bipartite_channel(ch)
        eb = is_entanglement_breaking(ch)
        bad = prod == "yes" and sep != "yes"
        bad |= kind in ("product", "local_unitary") and prod != "yes"
        bad |= kind == "eb" and (eb == "no" or sep == "no")
        bad |= kind == "eb_global" and eb == "no"
        violations += bool(bad)
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and violations == 0
    report("7 hierarchy", ok, f"named checks failed {failed}, corpus violations {violations}/200",
           time.perf_counter() - t0, 60)


def test_criterion_08_markov(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 5))
        s = rng.random((n, n))
        s /= s.sum(axis=0)
        ch = stochastic_to_channel(s)
        p0 = rng.dirichlet(np.ones(n))
        rho = np.diag(p0).astype(complex)
        for _ in range(5):
            rho = apply(ch, rho).matrix
        worst = max(worst, float(np.abs(np.diag(rho).real - np.linalg.matrix_power(s, 5) @ p0).max()))
    report("8 stochastic simulation", worst < 1e-12, f"max deviation {worst:.2e}", time.perf_counter() - t0, 5)


def test_criterion_09_covariant_scaling(report):
    t0 = time.perf_counter()
    ns = np.array([1, 2, 3])
    fams = {n: optimize_phi(int(n)) for n in ns}
    eps = np.array([fams[n].epsilon for n in ns])
    decreasing = bool(np.all(np.diff(eps) < 0))
    slope = float(np.polyfit(np.log(ns), np.log(eps), 1)[0])
    brute = abs(fams[1].average_fidelity - dense_n1_optimum())
    ok = decreasing and -2.8 <= slope <= -1.2 and brute < 1e-6
    report("9 covariant scaling", ok,
           f"eps {np.round(eps, 6).tolist()}, decreasing={decreasing}, log-log slope {slope:.3f} "
           f"(band [-2.8, -1.2]), n=1 brute-force gap {brute:.1e}", time.perf_counter() - t0, 600)


def test_criterion_10_cli_determinism(report, tmp_path):
    t0 = time.perf_counter()
    progs = DATA / "programs"
    commands = [
        ["circuit", "run", "--file", str(DATA / "circuits" / "bell.qvn"), "--seed", "5"],
        ["circuit", "run", "--file", str(DATA / "circuits" / "switch_demo.qvn"), "--seed", "5"],
        ["classify", str(progs / "CNOT.json")],
        ["compose", str(progs / "H.json"), str(progs / "T.json"), "--strategy", "covariant", "--seed", "5"],
        ["compose", str(progs / "H.json"), str(progs / "H.json"), "--strategy", "frame_tracked", "--seed", "5"],
        ["bench", "covariant", "--n-max", "2", "--samples", "40", "--seed", "5"],
        ["bench", "covariant", "--n-max", "2", "--samples", "40", "--seed", "5", "--format", "csv"],
        ["registry", "list", "--dir", str(progs)],
        ["registry", "load", "CNOT", "--dir", str(progs)],
    ]
    mismatched = []
    for argv in commands:
        runs = []
        for _ in range(2):
            out = io.StringIO()
            code = main(argv, out, io.StringIO())
            runs.append((code, out.getvalue().encode()))
        if runs[0] != runs[1] or runs[0][0] != 0:
            mismatched.append(" ".join(argv[:2]))
    report("10 CLI determinism", not mismatched, f"{len(commands)} commands, mismatches {mismatched}",
           time.perf_counter() - t0, 60)
