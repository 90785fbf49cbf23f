"""On-disk format for programs, channels and superchannels.

One object per JSON document::

    {
      "schema": "qvn.program/1",
      "kind": "choi" | "kraus" | "superchannel",
      "dims_head": [2], "dims_tail": [2],
      "matrix": [[re, im], ...],        # row-major, kind == "choi"
      "vector": [[re, im], ...],        # optional, pure programs only
      "kraus": [[[re, im], ...], ...],  # kind == "kraus"
      "metadata": {...}
    }

Superchannel documents carry ``"V"`` and ``"U"`` blocks plus ``"dims_ebit"``.
Floats are written with ``repr`` precision (17 significant digits), so a
save/load round trip is exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from qvn.channels import Channel, ProgramState
from qvn.errors import InvalidChannelError, InvalidStateError, QvnError

SCHEMA = "qvn.program/1"


class FormatError(QvnError, ValueError):
    """A document does not follow the program file schema."""


def encode_array(a: np.ndarray) -> list[list[float]]:
    flat = np.asarray(a, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def decode_array(pairs: Any, shape: tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.asarray(pairs, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"array is not a list of [re, im] pairs: {exc}") from None
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] != math.prod(shape):
        raise FormatError(f"expected {math.prod(shape)} [re, im] pairs for shape {shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError("array contains non-finite numbers")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)


def _dims(doc: dict, key: str) -> tuple[int, ...]:
    val = doc.get(key)
    if not isinstance(val, list) or not val or not all(isinstance(d, int) and d >= 1 for d in val):
        raise FormatError(f"field {key!r} must be a non-empty list of positive integers")
    if math.prod(val) > 1 << 12:
        raise FormatError(f"field {key!r} describes an unsupported dimension")
    return tuple(val)


def program_to_dict(p: ProgramState, metadata: dict | None = None) -> dict:
    doc = {
        "schema": SCHEMA,
        "kind": "choi",
        "dims_head": list(p.dims_head),
        "dims_tail": list(p.dims_tail),
        "matrix": encode_array(p.matrix),
        "metadata": dict(metadata or {}),
    }
    if p.is_pure:
        doc["vector"] = encode_array(p.data)
    if p.norm_factor != 1.0:
        doc["norm_factor"] = p.norm_factor
    return doc


def channel_to_dict(ch: Channel, metadata: dict | None = None) -> dict:
    return {
        "schema": SCHEMA,
        "kind": "kraus",
        "dims_head": list(ch.dims_out),
        "dims_tail": list(ch.dims_in),
        "kraus": [encode_array(k) for k in ch.kraus],
        "metadata": dict(metadata or {}),
    }


def _check_header(doc: Any) -> dict:
    if not isinstance(doc, dict):
        raise FormatError("document must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise FormatError(f"unknown schema {doc.get('schema')!r}")
    if not isinstance(doc.get("metadata", {}), dict):
        raise FormatError("metadata must be an object")
    return doc


def program_from_dict(doc: Any, validate: bool = True, tol: float = 1e-9) -> ProgramState:
    """Parse a ``choi`` or ``kraus`` document into a validated program."""
    doc = _check_header(doc)
    kind = doc.get("kind")
    dh, dt = _dims(doc, "dims_head"), _dims(doc, "dims_tail")
    side = math.prod(dh) * math.prod(dt)
    if kind == "choi":
        if "vector" in doc:
            p = ProgramState(decode_array(doc["vector"], (side,)), dh, dt)
        else:
            p = ProgramState(decode_array(doc.get("matrix"), (side, side)), dh, dt)
    elif kind == "kraus":
        ks = doc.get("kraus")
        if not isinstance(ks, list) or not ks:
            raise FormatError("field 'kraus' must be a non-empty list")
        kraus = [decode_array(k, (math.prod(dh), math.prod(dt))) for k in ks]
        from qvn.channels import choi_of

        p = choi_of(Channel(kraus=kraus, dims_in=dt, dims_out=dh), tol=tol)
    else:
        raise FormatError(f"kind {kind!r} is not a program")
    norm = doc.get("norm_factor", 1.0)
    if not isinstance(norm, (int, float)):
        raise FormatError("norm_factor must be a number")
    if norm != 1.0:
        p = ProgramState(p.data, dh, dt, float(norm))
    if validate:
        try:
            p.validate(tol)
        except (InvalidStateError, InvalidChannelError) as exc:
            raise InvalidChannelError(f"stored program failed validation: {exc}") from None
    return p


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {exc.lineno}: {exc.msg}") from None


def save_program(path, p: ProgramState, metadata: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(dumps(program_to_dict(p, metadata)))
    return path


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError:
        raise FormatError(f"{path} is not a text file") from None
    return loads(text)


def load_program(path, validate: bool = True, tol: float = 1e-9) -> ProgramState:
    return program_from_dict(load_document(path), validate=validate, tol=tol)


def metadata_of(doc: dict) -> dict:
    return dict(doc.get("metadata", {}))
