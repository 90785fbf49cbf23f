"""Command-line interface.

Exit codes: 0 success, 1 unexpected error, 2 usage or parse error,
3 validation error, 4 heralded failure, 5 missing program or file.
The default tolerance can be set with the ``QVN_TOL`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from qvn import __version__, serialization
from qvn.errors import (
    DimensionError,
    HeraldedFailure,
    InvalidChannelError,
    InvalidStateError,
    ParseError,
    ProgramNotFound,
    QvnError,
    RegistryError,
)

CLI_SCHEMA = "qvn.cli/1"
EXIT_OK, EXIT_UNEXPECTED, EXIT_USAGE, EXIT_INVALID, EXIT_HERALDED, EXIT_MISSING = 0, 1, 2, 3, 4, 5
DEFAULT_REGISTRY = "qvn_registry"


class UsageError(QvnError):
    pass


def default_tol() -> float:
    raw = os.environ.get("QVN_TOL")
    if raw is None:
        return 1e-9
    try:
        tol = float(raw)
    except ValueError:
        raise UsageError(f"QVN_TOL must be a number, got {raw!r}") from None
    if not 0 < tol < 1:
        raise UsageError("QVN_TOL must lie in (0, 1)")
    return tol


def _num(x: float) -> float:
    """Round away last-bit noise so structured output is stable and readable."""
    return float(f"{x:.12g}")


def emit(doc: dict, fmt: str, out) -> None:
    doc = {"schema": CLI_SCHEMA, **doc}
    if fmt == "json":
        out.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        return
    if fmt == "csv" and "rows" in doc:
        rows = doc["rows"]
        writer = csv.writer(out, lineterminator="\n")
        if rows:
            cols = list(rows[0])
            writer.writerow(cols)
            for r in rows:
                writer.writerow([r[c] for c in cols])
        return
    _human(doc, out)


def _human(doc, out, indent: int = 0) -> None:
    pad = "  " * indent
    for key in sorted(doc):
        val = doc[key]
        if isinstance(val, dict):
            out.write(f"{pad}{key}:\n")
            _human(val, out, indent + 1)
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            out.write(f"{pad}{key}:\n")
            for item in val:
                out.write(f"{pad}  -\n")
                _human(item, out, indent + 2)
        else:
            out.write(f"{pad}{key}: {val}\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_registry(args, out) -> int:
    from qvn.memory import MemoryRegistry

    reg = MemoryRegistry(Path(args.dir), tol=args.tol)
    if args.action == "list":
        emit({"command": "registry list", "programs": reg.list()}, args.format, out)
    elif args.action == "save":
        if not args.name or not args.file:
            raise UsageError("registry save needs NAME and FILE")
        doc = serialization.load_document(args.file)
        program = serialization.program_from_dict(doc, tol=args.tol)
        reg.save(args.name, program, serialization.metadata_of(doc), overwrite=args.overwrite)
        emit({"command": "registry save", "name": args.name, "dims_head": list(program.dims_head),
              "dims_tail": list(program.dims_tail)}, args.format, out)
    else:
        if not args.name:
            raise UsageError("registry load needs NAME")
        program, meta = reg.load_with_metadata(args.name)
        emit({"command": "registry load", "name": args.name, "program": serialization.program_to_dict(program, meta)},
             args.format, out)
    return EXIT_OK


def _parse_bipartition(text: str | None):
    from qvn.resources import Bipartition

    if text is None:
        return None
    try:
        spec, sizes = (text.split("/") + [""])[:2]
        a_out, a_in = spec.split(":")
        n_out, n_in = (int(s) for s in sizes.split(":")) if sizes else (2, 2)
        return Bipartition(n_out, n_in, tuple(int(w) for w in a_out.split(",") if w),
                           tuple(int(w) for w in a_in.split(",") if w))
    except ValueError:
        raise UsageError("bipartition must look like 'A_OUT:A_IN' or 'A_OUT:A_IN/N_OUT:N_IN', e.g. '0:0'") from None


def cmd_classify(args, out) -> int:
    from qvn.resources import classify

    program = serialization.load_program(args.file, tol=args.tol)
    report = classify(program, _parse_bipartition(args.bipartition), tol=args.tol).to_dict()
    report["measures"] = {k: (_num(v) if isinstance(v, float) else v) for k, v in report["measures"].items()}
    emit({"command": "classify", "file": str(args.file), **report}, args.format, out)
    return EXIT_OK


def _unitary_of(p):
    from qvn.resources import _is_unitary_program

    if p.is_pure and _is_unitary_program(p, 1e-8):
        return np.sqrt(p.d_head) * p.data.reshape(p.d_head, p.d_tail)
    return None


def cmd_compose(args, out) -> int:
    from qvn.channels import ProgramState, identity_program, program_fidelity, unitary_program
    from qvn.teleport import compose_covariant, compose_standard, interior_correction

    a = serialization.load_program(args.first, tol=args.tol)
    b = serialization.load_program(args.second, tol=args.tol)
    rng = np.random.default_rng(args.seed)
    if args.strategy == "covariant":
        res = compose_covariant(a, b, rng)
    else:
        res = compose_standard(a, b, args.strategy, rng)
    program = res.program
    ua, ub = _unitary_of(a), _unitary_of(b)
    doc = {
        "command": "compose",
        "strategy": res.strategy,
        "seed": args.seed,
        "outcomes": [list(map(int, o)) if isinstance(o, tuple) else o for o in res.outcomes],
        "frame": [list(e) for e in res.frame.entries],
        "attempts": res.attempts,
        "probability": _num(res.probability),
        "dims_head": list(program.dims_head),
        "dims_tail": list(program.dims_tail),
    }
    if ua is not None and ub is not None:
        from qvn.teleport import correct_program

        if not res.frame.is_identity:
            program = correct_program(program, interior_correction(res.frame, ub))
        doc["fidelity_to_expected"] = _num(program_fidelity(program, unitary_program(ub @ ua, program.dims_head)))
    if program.dims_head == program.dims_tail:
        doc["fidelity_to_identity"] = _num(program_fidelity(program, identity_program(program.dims_head)))
    if args.out:
        serialization.save_program(args.out, ProgramState(program.data, program.dims_head, program.dims_tail),
                                   {"composed_from": [str(args.first), str(args.second)]})
        doc["written"] = str(args.out)
    emit(doc, args.format, out)
    return EXIT_OK


def cmd_circuit_run(args, out) -> int:
    from qvn.circuit import compile_circuit, cost_report, execute, oracle_output, parse_circuit
    from qvn.channels import X, Y, Z
    from qvn.kernel import fidelity, partial_trace, trace_distance

    try:
        text = Path(args.file).read_text()
    except UnicodeDecodeError:
        raise ParseError("circuit file is not text", 1) from None
    circuit = parse_circuit(text)
    plan = compile_circuit(circuit)
    output, trace = execute(plan, rng=np.random.default_rng(args.seed), strategy=args.strategy)
    ref = oracle_output(circuit)
    n = circuit.n_wires
    expectations = []
    for w in range(n):
        rho = partial_trace(output.matrix, [w], (2,) * n)
        expectations.append({"wire": w, **{k: _num(float(np.trace(op @ rho).real)) for k, op in
                                            (("X", X), ("Y", Y), ("Z", Z))}})
    doc = {
        "command": "circuit run",
        "file": str(args.file),
        "seed": args.seed,
        "strategy": args.strategy,
        "fidelity": _num(fidelity(output.matrix, ref)),
        "trace_distance": _num(trace_distance(output.matrix, ref)),
        "expectations": expectations,
        "cost": cost_report(plan),
        "trace": {**trace.to_dict(), "probability": _num(trace.probability)},
    }
    emit(doc, args.format, out)
    return EXIT_OK


def cmd_bench(args, out) -> int:
    from qvn.covariant import bench

    if args.n_max < 1 or args.n_max > 4:
        raise UsageError("--n-max must be between 1 and 4")
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    rows = []
    for r in bench(args.n_max, args.samples, args.seed):
        row = {"n": r.n, "fidelity": _num(r.fidelity), "epsilon": _num(r.epsilon), "sigma": _num(r.sigma),
               "fidelity_sampled": _num(r.fidelity_sampled)}
        if args.timing:
            row["runtime"] = round(r.runtime, 4)
        rows.append(row)
    emit({"command": "bench covariant", "seed": args.seed, "samples": args.samples, "rows": rows}, args.format, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "human", "csv"), default="json")
    common.add_argument("--tol", type=float, default=None, help="numerical tolerance (default: QVN_TOL or 1e-9)")

    p = _Parser(prog="qvn", description="Stored quantum programs: memory, composition, circuits and benchmarks.")
    p.add_argument("--version", action="version", version=f"qvn {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    reg = sub.add_parser("registry", parents=[common], help="save, load or list stored programs")
    reg.add_argument("action", choices=("save", "load", "list"))
    reg.add_argument("name", nargs="?")
    reg.add_argument("file", nargs="?")
    reg.add_argument("--dir", default=DEFAULT_REGISTRY)
    reg.add_argument("--overwrite", action="store_true")
    reg.set_defaults(func=cmd_registry)

    cl = sub.add_parser("classify", parents=[common], help="resource verdicts for a program file")
    cl.add_argument("file")
    cl.add_argument("--bipartition", help="party-A wires as 'A_OUT:A_IN' (default '0:0' for two-wire programs)")
    cl.set_defaults(func=cmd_classify)

    co = sub.add_parser("compose", parents=[common], help="compose two programs by teleportation")
    co.add_argument("first")
    co.add_argument("second")
    co.add_argument("--strategy", choices=("postselect", "frame_tracked", "covariant"), default="postselect")
    co.add_argument("--seed", type=int, default=0)
    co.add_argument("--out")
    co.set_defaults(func=cmd_compose)

    ci = sub.add_parser("circuit", help="tailed-circuit commands")
    ci_sub = ci.add_subparsers(dest="circuit_command", required=True, parser_class=_Parser)
    run = ci_sub.add_parser("run", parents=[common], help="execute a circuit file")
    run.add_argument("--file", required=True)
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--strategy", choices=("postselect", "frame", "covariant-retry"), default="covariant-retry")
    run.set_defaults(func=cmd_circuit_run)

    be = sub.add_parser("bench", help="benchmarks")
    be_sub = be.add_subparsers(dest="bench_command", required=True, parser_class=_Parser)
    cov = be_sub.add_parser("covariant", parents=[common], help="covariant-programming accuracy versus n")
    cov.add_argument("--n-max", type=int, default=3)
    cov.add_argument("--samples", type=int, default=200)
    cov.add_argument("--seed", type=int, required=True)
    cov.add_argument("--timing", action="store_true", help="add a wall-clock runtime column (not deterministic)")
    cov.set_defaults(func=cmd_bench)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, ParseError, serialization.FormatError)):
        return EXIT_USAGE
    if isinstance(exc, HeraldedFailure):
        return EXIT_HERALDED
    if isinstance(exc, (ProgramNotFound, FileNotFoundError, IsADirectoryError)):
        return EXIT_MISSING
    if isinstance(exc, (InvalidChannelError, InvalidStateError, DimensionError, RegistryError)):
        return EXIT_INVALID
    if isinstance(exc, (ValueError, QvnError)):
        return EXIT_INVALID
    return EXIT_UNEXPECTED


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.tol is None:
            args.tol = default_tol()
        elif not 0 < args.tol < 1:
            raise UsageError("--tol must lie in (0, 1)")
        buf = io.StringIO()
        code = args.func(args, buf)
        out.write(buf.getvalue())
        return code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # every failure becomes a diagnostic and an exit code
        code = _exit_code(exc)
        label = "error" if code != EXIT_UNEXPECTED else "unexpected error"
        err.write(f"qvn: {label}: {exc}\n")
        return code


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
