"""Tailed circuits: {H, T, CNOT} circuits run by composing stored gate programs.

Each gate is a program fetched from memory.  The first gate on a wire opens
that wire; every later gate is attached by teleporting the current head of
the wire into the new program's tail.  Inputs are written into the tails at
the end, and the Pauli byproducts collected on the way are corrected on the
output heads.

Junction flavors follow a simple rule.  A qubit gate feeding a CNOT uses
standard teleportation, because a Pauli byproduct commutes through CNOT into
another Pauli.  Anything feeding a qubit gate after a CNOT, and anything
feeding a T gate, uses the heralded covariant composition, so that no
non-Pauli residue (``T X T^+ ~ S X``) is ever left behind.

Circuit text format, one record per line::

    # comment
    wires 2
    input 0 +          # 0, 1, +, -, +i, -i (default 0)
    H 0
    CNOT 0 1
    T 1 switch=off     # switchable gate, currently off
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qvn.channels import GATES, ProgramState, identity_program, pauli
from qvn.errors import DimensionError, HeraldedFailure, ParseError, QvnError
from qvn.kernel import DensityOperator, apply_to_wires, as_rng, partial_trace, permute_wires, trace_distance
from qvn.memory import MemoryRegistry, write_input
from qvn.teleport import PauliFrame, bell_measure, commute_frame_through, frame_from_outcomes

GATE_ARITY = {"H": 1, "T": 1, "CNOT": 2}
STRATEGIES = ("postselect", "frame", "covariant-retry")
DEFAULT_BUDGET = 64
MAX_WIRES = 6

INPUT_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


class NonCliffordResidual(QvnError):
    """A T gate met an X byproduct under a strategy that cannot absorb it."""


# ---------------------------------------------------------------------------
# Circuit IR
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gate:
    kind: str
    wires: tuple[int, ...]
    switchable: bool = False
    switch_state: str = "on"

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))
        if self.kind not in GATE_ARITY:
            raise ValueError(f"unsupported gate {self.kind!r}")
        if len(self.wires) != GATE_ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {GATE_ARITY[self.kind]} wire(s)")
        if len(set(self.wires)) != len(self.wires):
            raise ValueError("CNOT control and target must differ")
        if self.switch_state not in ("on", "off"):
            raise ValueError(f"switch state must be on or off, got {self.switch_state!r}")
        if self.switch_state == "off" and not self.switchable:
            raise ValueError("only switchable gates can be off")

    @property
    def active(self) -> bool:
        return self.switch_state == "on"

    @property
    def unitary(self) -> np.ndarray:
        return GATES[self.kind] if self.active else np.eye(2 ** len(self.wires))


@dataclass(frozen=True)
class TailedCircuit:
    n_wires: int
    gates: tuple[Gate, ...]
    inputs: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if not 1 <= self.n_wires <= MAX_WIRES:
            raise ValueError(f"wire count must be between 1 and {MAX_WIRES}")
        if not self.gates:
            raise ValueError("a circuit needs at least one gate")
        for g in self.gates:
            if any(not 0 <= w < self.n_wires for w in g.wires):
                raise ValueError(f"gate {g.kind} uses a wire outside 0..{self.n_wires - 1}")
        inputs = ("0",) * self.n_wires if self.inputs is None else tuple(self.inputs)
        if len(inputs) != self.n_wires or any(s not in INPUT_STATES for s in inputs):
            raise ValueError("inputs must name one of 0, 1, +, -, +i, -i per wire")
        object.__setattr__(self, "inputs", inputs)

    def input_states(self) -> list[np.ndarray]:
        return [INPUT_STATES[s] for s in self.inputs]

    def compile(self) -> "CompositionPlan":
        return compile_circuit(self)

    def to_text(self) -> str:
        lines = [f"wires {self.n_wires}"]
        lines += [f"input {w} {s}" for w, s in enumerate(self.inputs) if s != "0"]
        for g in self.gates:
            rec = " ".join([g.kind, *map(str, g.wires)])
            if g.switchable:
                rec += f" switch={g.switch_state}"
            lines.append(rec)
        return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> TailedCircuit:
    """Parse the line-based circuit format; errors name the offending line."""
    n_wires = None
    inputs: dict[int, str] = {}
    gates: list[tuple[int, Gate]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        try:
            if head == "wires":
                if n_wires is not None:
                    raise ValueError("wires declared twice")
                if len(tok) != 2:
                    raise ValueError("expected: wires N")
                n_wires = int(tok[1])
                if not 1 <= n_wires <= MAX_WIRES:
                    raise ValueError(f"wire count must be between 1 and {MAX_WIRES}")
            elif head == "input":
                if len(tok) != 3:
                    raise ValueError("expected: input WIRE STATE")
                w = int(tok[1])
                if tok[2] not in INPUT_STATES:
                    raise ValueError(f"unknown input state {tok[2]!r}")
                if n_wires is None or not 0 <= w < n_wires:
                    raise ValueError(f"input wire {w} is not declared")
                inputs[w] = tok[2]
            elif head in GATE_ARITY:
                if n_wires is None:
                    raise ValueError("gate before wires declaration")
                args, opts = [], {}
                for t in tok[1:]:
                    if "=" in t:
                        k, v = t.split("=", 1)
                        if k != "switch":
                            raise ValueError(f"unknown option {k!r}")
                        opts[k] = v
                    else:
                        args.append(int(t))
                if any(not 0 <= w < n_wires for w in args):
                    raise ValueError(f"wire index out of range 0..{n_wires - 1}")
                switchable = "switch" in opts
                gates.append((lineno, Gate(head, tuple(args), switchable, opts.get("switch", "on"))))
            else:
                raise ValueError(f"unknown record {head!r}")
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if n_wires is None:
        raise ParseError("missing wires declaration", 1)
    if not gates:
        raise ParseError("circuit has no gates", max(1, len(text.splitlines())))
    ins = tuple(inputs.get(w, "0") for w in range(n_wires))
    return TailedCircuit(n_wires, tuple(g for _, g in gates), ins)


def random_circuit(n_wires: int, n_gates: int, seed=None, t_fraction: float = 0.4) -> TailedCircuit:
    """Random {H, T, CNOT} circuit (CNOT needs at least two wires)."""
    rng = as_rng(seed)
    gates = []
    for _ in range(n_gates):
        r = rng.random()
        if n_wires > 1 and r < 0.35:
            c, t = rng.choice(n_wires, size=2, replace=False)
            gates.append(Gate("CNOT", (int(c), int(t))))
        else:
            kind = "T" if rng.random() < t_fraction else "H"
            gates.append(Gate(kind, (int(rng.integers(n_wires)),)))
    return TailedCircuit(n_wires, tuple(gates))


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Junction:
    """Teleport the head of ``source`` gate on ``wire`` into the tail of the next gate."""

    wire: int
    source: int
    tag: str


@dataclass(frozen=True)
class PlanStep:
    gate_index: int
    gate: Gate
    program: str
    junctions: tuple[Junction, ...]
    tag: str  # "fetch", "standard" or "covariant"


@dataclass(frozen=True)
class CompositionPlan:
    n_wires: int
    steps: tuple[PlanStep, ...]
    circuit: TailedCircuit

    @property
    def compositions(self) -> tuple[PlanStep, ...]:
        return tuple(s for s in self.steps if s.tag != "fetch")

    @property
    def fetches(self) -> int:
        return len(self.steps)


def _junction_tag(prev: Gate, nxt: Gate) -> str:
    if nxt.kind == "CNOT":
        return "standard"
    if prev.kind == "CNOT" or nxt.kind == "T":
        return "covariant"
    return "standard"


def compile_circuit(c: TailedCircuit) -> CompositionPlan:
    """One step per gate; junction tags follow the standard/covariant rule."""
    last: dict[int, int] = {}
    steps = []
    for i, g in enumerate(c.gates):
        juncs = tuple(Junction(w, last[w], _junction_tag(c.gates[last[w]], g)) for w in g.wires if w in last)
        if not juncs:
            tag = "fetch"
        else:
            tag = "covariant" if any(j.tag == "covariant" for j in juncs) else "standard"
        steps.append(PlanStep(i, g, g.kind, juncs, tag))
        for w in g.wires:
            last[w] = i
    plan = CompositionPlan(c.n_wires, tuple(steps), c)
    check_depth_one(plan)
    return plan


def check_depth_one(plan: CompositionPlan) -> None:
    """Each head and each tail takes part in at most one composition."""
    heads, tails = set(), set()
    for s in plan.steps:
        for j in s.junctions:
            h, t = (j.source, j.wire), (s.gate_index, j.wire)
            if h in heads or t in tails:
                raise AssertionError(f"wire {j.wire} joined twice at step {s.gate_index}")
            if j.wire not in plan.steps[j.source].gate.wires:
                raise AssertionError("junction source does not act on its wire")
            heads.add(h)
            tails.add(t)


def cost_report(plan: CompositionPlan, d: int = 2) -> dict:
    comps = plan.compositions
    k = sum(s.tag == "covariant" for s in comps)
    return {
        "gate_count": len(plan.steps),
        "ebit_count": sum(len(s.junctions) for s in comps),
        "expected_attempts": (len(comps) - k) + d * d * k,
    }


# ---------------------------------------------------------------------------
# Switch gadget
# ---------------------------------------------------------------------------


def _unitary_of(p: ProgramState) -> np.ndarray:
    if not p.is_pure or p.dims_head != p.dims_tail:
        raise DimensionError("switch_gate needs a pure unitary program")
    d = p.d_head
    return np.sqrt(d) * p.data.reshape(d, d)


def enumerate_switch(p: ProgramState, state: str):
    """Every measurement branch of the switch gadget.

    The switchable program is ``p`` together with one ebit per wire.  ON
    Bell-measures each ebit head against ``p``'s tail, so the ebit tail
    becomes the tail of ``p``; the byproduct ``U P U^+`` is undone on the
    head.  OFF measures ``p`` in the computational basis (erasing it) and
    leaves the ebits, i.e. the identity program.  Yields
    ``(outcomes, program, probability)``.
    """
    if state not in ("on", "off"):
        raise ValueError("switch state must be on or off")
    k = len(p.dims_head)
    if k not in (1, 2) or set(p.dims) != {2}:
        raise DimensionError("switch_gate supports 1- and 2-qubit programs")
    u = _unitary_of(p)
    ebits = identity_program((2,) * k)
    if state == "off":
        import itertools

        for bits in itertools.product(range(2), repeat=2 * k):
            prob = float(abs(p.data[int("".join(map(str, bits)), 2)]) ** 2)
            yield tuple(bits), ebits, prob
        return
    from qvn.teleport import enumerate_compositions

    for res in enumerate_compositions(ebits, p):
        corr = u @ res.frame.operator() @ u.conj().T
        prog = _head_correct(res.program, corr.conj().T)
        yield res.outcomes, prog, res.probability


def _head_correct(p: ProgramState, op: np.ndarray) -> ProgramState:
    return ProgramState(apply_to_wires(op, p.data, list(p.head_wires), p.dims), p.dims_head, p.dims_tail)


def switch_gate(p: ProgramState, state: str, mode: str = "postselect", rng=None) -> ProgramState:
    """Route ``p`` through the switch gadget: ON gives ``p``, OFF the identity program."""
    branches = list(enumerate_switch(p, state))
    if mode == "postselect":
        return branches[0][1]
    if mode != "sampled":
        raise ValueError(f"unknown switch mode {mode!r}")
    probs = np.array([b[2] for b in branches])
    k = as_rng(rng).choice(len(branches), p=probs / probs.sum())
    return branches[k][1]


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    gate_index: int
    kind: str
    tag: str
    outcomes: list = field(default_factory=list)
    attempts: int = 0
    ebits: int = 0
    flushed: bool = False


@dataclass
class ExecutionTrace:
    strategy: str
    steps: list[StepRecord] = field(default_factory=list)
    write_attempts: list[int] = field(default_factory=list)
    final_frame: PauliFrame | None = None
    probability: float = 1.0
    residual_free: bool = True

    @property
    def ebits_consumed(self) -> int:
        return sum(s.ebits for s in self.steps)

    @property
    def covariant_attempts(self) -> list[int]:
        return [s.attempts for s in self.steps if s.tag == "covariant"]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "ebits_consumed": self.ebits_consumed,
            "probability": self.probability,
            "write_attempts": list(self.write_attempts),
            "final_frame": [list(e) for e in self.final_frame.entries] if self.final_frame else [],
            "steps": [
                {
                    "gate": s.gate_index,
                    "kind": s.kind,
                    "tag": s.tag,
                    "outcomes": [list(o) for o in s.outcomes],
                    "attempts": s.attempts,
                    "ebits": s.ebits,
                    "flushed": s.flushed,
                }
                for s in self.steps
            ],
        }


class _Running:
    """The composed program so far: a state over labelled head/tail wires."""

    def __init__(self):
        self.state = np.ones(1, dtype=complex)
        self.labels: list[tuple[str, int]] = []

    @property
    def dims(self):
        return (2,) * len(self.labels)

    def attach(self, prog: ProgramState, wires: Sequence[int]):
        data = prog.data
        if self.state.ndim == 2 or data.ndim == 2:
            a = self.state if self.state.ndim == 2 else np.outer(self.state, self.state.conj())
            b = data if data.ndim == 2 else np.outer(data, data.conj())
            joint = np.kron(a, b)
        else:
            joint = np.kron(self.state, data)
        labels = self.labels + [("nh", w) for w in wires] + [("nt", w) for w in wires]
        return joint, labels


def _input_matrix(x) -> np.ndarray:
    if isinstance(x, DensityOperator):
        return x.matrix
    x = np.asarray(x, dtype=complex)
    return np.outer(x, x.conj()) if x.ndim == 1 else x


def oracle_output(c: TailedCircuit, inputs=None) -> np.ndarray:
    """Direct statevector/density simulation of the circuit (switched-off gates skipped)."""
    inputs = c.input_states() if inputs is None else inputs
    rho = np.eye(1, dtype=complex)
    for x in inputs:
        rho = np.kron(rho, _input_matrix(x))
    dims = (2,) * c.n_wires
    for g in c.gates:
        if g.active:
            rho = apply_to_wires(GATES[g.kind], rho, list(g.wires), dims)
    return rho


def execute(
    plan: CompositionPlan,
    inputs=None,
    rng=None,
    strategy: str = "covariant-retry",
    registry: MemoryRegistry | None = None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[DensityOperator, ExecutionTrace]:
    """Run a plan on per-wire inputs (vectors, density matrices or DensityOperators)."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    rng = as_rng(rng)
    registry = registry or MemoryRegistry.with_gates()
    n = plan.n_wires
    inputs = plan.circuit.input_states() if inputs is None else list(inputs)
    if len(inputs) != n or any(_input_matrix(x).shape != (2, 2) for x in inputs):
        raise DimensionError(f"need one qubit input per wire ({n})")

    trace = ExecutionTrace(strategy)
    frame = PauliFrame.identity(n)
    run = _Running()
    for step in plan.steps:
        gate = step.gate
        prog = registry.fetch(step.program)
        if gate.switchable:
            prog = switch_gate(prog, gate.switch_state)
        rec = StepRecord(step.gate_index, gate.kind, step.tag)
        junction_wires = [j.wire for j in step.junctions]
        # a T gate can only absorb a Z byproduct; clear X on its wire first
        if strategy == "covariant-retry" and step.tag == "covariant" and gate.active and gate.kind == "T":
            (w,) = gate.wires
            if frame[w][0]:
                corr = pauli(*frame[w]).conj().T
                idx = run.labels.index(("h", w))
                run.state = apply_to_wires(corr, run.state, [idx], run.dims)
                frame = frame.with_wire(w, 0, 0)
                rec.flushed = True
        joint, labels = run.attach(prog, gate.wires)

        attempts = 0
        while True:
            attempts += 1
            state, labs, dims = joint, list(labels), (2,) * len(labels)
            outcomes, prob = [], 1.0
            for w in junction_wires:
                a, b = labs.index(("h", w)), labs.index(("nt", w))
                forced = (0, 0) if strategy == "postselect" else None
                out, state, p = bell_measure(state, a, b, dims, rng, forced)
                outcomes.append(out)
                prob *= p
                labs = [lab for i, lab in enumerate(labs) if i not in (a, b)]
                dims = (2,) * len(labs)
            trivial = all(o == (0, 0) for o in outcomes)
            if strategy == "covariant-retry" and step.tag == "covariant" and not trivial:
                rec.outcomes.append(outcomes)
                if attempts >= budget:
                    raise HeraldedFailure(
                        f"covariant step for gate {step.gate_index} failed {budget} times"
                    )
                continue
            break
        rec.outcomes.append(outcomes)
        rec.attempts = attempts
        rec.ebits = attempts * len(junction_wires)
        trace.probability *= prob

        # byproduct of this junction, then move the whole frame past the gate
        byp = frame_from_outcomes(outcomes, 2)
        for w, (x, z) in zip(junction_wires, byp.entries):
            fx, fz = frame[w]
            frame = frame.with_wire(w, fx + x, fz + z)
        if gate.active:
            frame, residual = commute_frame_through(frame, gate.kind, gate.wires)
            if residual is not None:
                trace.residual_free = False
                raise NonCliffordResidual(
                    f"T gate {step.gate_index} met an X byproduct; use the covariant-retry strategy"
                )
        renamed = []
        for lab in labs:
            if lab[0] == "nh":
                renamed.append(("h", lab[1]))
            elif lab[0] == "nt":
                renamed.append(("t", lab[1]))
            else:
                renamed.append(lab)
        run.state, run.labels = state, renamed
        trace.steps.append(rec)

    touched = sorted({w for _, w in run.labels})
    order = [run.labels.index(("h", w)) for w in touched] + [run.labels.index(("t", w)) for w in touched]
    state = permute_wires(run.state, order, run.dims)
    k = len(touched)
    program = ProgramState(state, (2,) * k, (2,) * k)

    # write inputs one tail wire at a time; the remaining tail shifts down
    mode = "postselect" if strategy == "postselect" else "sample"
    current = program
    head = None
    for pos, w in enumerate(touched):
        rho_w = _input_matrix(inputs[w])
        attempts = 0
        while True:
            attempts += 1
            out = write_input(current, rho_w, mode=mode, seed=rng, tail_wires=[0])
            if out.success:
                break
            if attempts >= budget:
                raise HeraldedFailure(f"write-in on wire {w} failed {budget} times")
        trace.write_attempts.append(attempts)
        trace.probability *= out.probability
        if out.remainder is not None:
            current = out.remainder
        else:
            head = out.head_state.matrix

    corr = frame.correction(touched)
    head = corr @ head @ corr.conj().T
    trace.final_frame = frame

    # untouched wires pass their inputs straight through
    rest = [w for w in range(n) if w not in touched]
    full = head
    for w in rest:
        full = np.kron(full, _input_matrix(inputs[w]))
    wire_order = touched + rest
    perm = [wire_order.index(w) for w in range(n)]
    full = permute_wires(full, perm, (2,) * n)
    return DensityOperator(full, (2,) * n), trace


def run_circuit(c: TailedCircuit, inputs=None, seed=None, strategy: str = "covariant-retry", registry=None):
    """Compile, execute and compare with the oracle; returns (output, trace, distance)."""
    plan = compile_circuit(c)
    out, trace = execute(plan, inputs, seed, strategy, registry)
    ref = oracle_output(c, inputs)
    return out, trace, float(trace_distance(out.matrix, ref))
