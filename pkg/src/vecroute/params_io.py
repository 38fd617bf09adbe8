"""Deterministic parameter initialization and a portable on-disk format.

Initialization is a pure function of (dims, seed): weight tensors draw
from a zero-mean normal with standard deviation 1/sqrt(fan_in), biases
start at zero, and the use/ignore coefficients start at the neutral
point (use 1, ignore 0) where routing behaves like plain associative
recall. Draws happen in canonical field order from one seeded generator,
so the same arguments always give bit-identical tensors.

The file format is a human-readable ASCII header followed by a raw
little-endian IEEE-754 float32 payload, row-major per tensor, in
canonical field order. The header pins format version, mode, dims, a
CRC-32 of the payload, and every tensor's name, shape, and byte offset,
so a loader can verify the file completely before touching any values.
``docs/param-format.md`` specifies the bytes exactly; files written
there by independent code must load identically.
"""

from __future__ import annotations

import zlib
from typing import Mapping

import numpy as np

from .optimized import RoutingParams, field_shapes
from .reference import RoutingDims
from .tensor import DenseTensor

__all__ = [
    "FORMAT_MAGIC",
    "FORMAT_VERSION",
    "ParamFormatError",
    "init_params",
    "load_params",
    "save_params",
]

FORMAT_MAGIC = "vecroute-params"
FORMAT_VERSION = 1

# Standard deviation of each drawn tensor is 1/sqrt of its fan-in: the
# number of summands feeding one element of the op that consumes it.
# Elementwise gains (pred_gate) have fan-in 1. Bias-like tensors and the
# use/ignore neutral points are set directly, not drawn.
_DRAWN_FAN_IN = {
    "act_weight": lambda d: d.d_inp,
    "vote_mix": lambda d: d.d_inp,
    "vote_proj": lambda d: d.d_inp,
    "pred_proj": lambda d: d.d_out,
    "pred_gate": lambda d: 1,
    "score_gain": lambda d: d.d_inp,
}
_ONES = ("beta_use", "beta_use_bias")
_ZEROS = (
    "act_bias",
    "vote_bias",
    "pred_bias",
    "score_bias",
    "beta_ign",
    "beta_ign_bias",
    "beta_use_weight",
    "beta_ign_weight",
)


class ParamFormatError(ValueError):
    """A parameter file that cannot be trusted: malformed, truncated, or stale."""


def init_params(
    dims: RoutingDims,
    seed: int,
    overrides: Mapping[str, object] | None = None,
) -> RoutingParams:
    """Draw a fresh float32 parameter set, deterministic in (dims, seed).

    ``overrides`` replaces named tensors after the draw (values are
    shape-checked), without disturbing the random stream of the others.
    Variable-length mode starts the use/ignore generators at constant
    neutral output: zero weights with biases 1 and 0, matching the
    fixed-mode start for every input.
    """
    rng = np.random.default_rng(seed)
    shapes = field_shapes(dims)
    tensors: dict[str, DenseTensor] = {}
    for name, shape in shapes.items():
        if name in _DRAWN_FAN_IN:
            std = np.float32(1.0 / np.sqrt(_DRAWN_FAN_IN[name](dims)))
            values = rng.standard_normal(shape, dtype=np.float32) * std
        elif name in _ONES:
            values = np.ones(shape, dtype=np.float32)
        elif name in _ZEROS:
            values = np.zeros(shape, dtype=np.float32)
        else:
            raise AssertionError(f"no initialization rule for {name}")
        tensors[name] = DenseTensor(values, copy=False, context=name)
    if overrides:
        unknown = sorted(set(overrides) - set(shapes))
        if unknown:
            raise ValueError(f"overrides name unknown parameters {unknown}")
        for name, value in overrides.items():
            tensors[name] = (
                value if isinstance(value, DenseTensor) else DenseTensor(value, context=name)
            )
    return RoutingParams.from_mapping(dims, tensors)


def _dims_header(dims: RoutingDims) -> str:
    n_inp = "variable" if dims.variable_length else str(dims.n_inp)
    return (
        f"dims n_inp={n_inp} n_out={dims.n_out} "
        f"d_inp={dims.d_inp} d_out={dims.d_out} n_iters={dims.n_iters}"
    )


def save_params(params: RoutingParams, path) -> None:
    """Write one parameter set; see docs/param-format.md for the bytes.

    Only float32 parameters serialize; the high-precision variant used by
    the equivalence oracles is a derived view, never a stored artifact.
    """
    if params.dtype != np.float32:
        raise ParamFormatError(
            f"only float32 parameters are serialized, got {params.dtype}"
        )
    chunks: list[bytes] = []
    tensor_lines: list[str] = []
    offset = 0
    for name, t in params.field_items():
        raw = np.ascontiguousarray(t.array, dtype="<f4").tobytes()
        shape_text = "x".join(str(e) for e in t.shape)
        tensor_lines.append(f"tensor {name} f32 {shape_text} {offset}")
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header_lines = [
        f"{FORMAT_MAGIC} {FORMAT_VERSION}",
        f"mode {params.mode}",
        _dims_header(params.dims),
        f"checksum {zlib.crc32(payload) & 0xFFFFFFFF:08x}",
        *tensor_lines,
        f"payload {len(payload)}",
    ]
    blob = ("\n".join(header_lines) + "\n\n").encode("ascii") + payload
    with open(path, "wb") as fh:
        fh.write(blob)


def _fail(reason: str) -> ParamFormatError:
    return ParamFormatError(reason)


def _parse_int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise _fail(f"malformed header: {what} {text!r} is not an integer") from None


def _parse_dims(line: str) -> RoutingDims:
    parts = line.split()
    if len(parts) != 6 or parts[0] != "dims":
        raise _fail(f"malformed header: expected dims line, got {line!r}")
    values: dict[str, str] = {}
    for part in parts[1:]:
        key, eq, val = part.partition("=")
        if not eq:
            raise _fail(f"malformed header: dims entry {part!r} lacks '='")
        values[key] = val
    expected = ("n_inp", "n_out", "d_inp", "d_out", "n_iters")
    if tuple(values) != expected:
        raise _fail(f"malformed header: dims keys {tuple(values)} != {expected}")
    n_inp = None if values["n_inp"] == "variable" else _parse_int(values["n_inp"], "n_inp")
    try:
        return RoutingDims(
            n_inp=n_inp,
            n_out=_parse_int(values["n_out"], "n_out"),
            d_inp=_parse_int(values["d_inp"], "d_inp"),
            d_out=_parse_int(values["d_out"], "d_out"),
            n_iters=_parse_int(values["n_iters"], "n_iters"),
        )
    except ValueError as exc:
        raise _fail(f"malformed header: {exc}") from None


def load_params(path) -> RoutingParams:
    """Read a parameter file back, verifying it completely first.

    Any defect (bad magic or version, malformed lines, wrong tensor set,
    non-contiguous offsets, truncated or oversized payload, checksum
    mismatch, non-finite values) raises ParamFormatError; nothing is
    partially loaded.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    head, sep, payload = blob.partition(b"\n\n")
    if not sep:
        raise _fail("malformed header: missing blank-line terminator")
    try:
        lines = head.decode("ascii").split("\n")
    except UnicodeDecodeError:
        raise _fail("malformed header: not ASCII") from None
    if len(lines) < 5:
        raise _fail("malformed header: too few lines")

    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != FORMAT_MAGIC:
        raise _fail(f"not a parameter file: first line {lines[0]!r}")
    if _parse_int(magic[1], "version") != FORMAT_VERSION:
        raise _fail(f"unknown format version {magic[1]}")

    mode_parts = lines[1].split()
    if len(mode_parts) != 2 or mode_parts[0] != "mode" or mode_parts[1] not in ("fixed", "variable"):
        raise _fail(f"malformed header: expected mode line, got {lines[1]!r}")
    mode = mode_parts[1]

    dims = _parse_dims(lines[2])
    if (dims.n_inp is None) != (mode == "variable"):
        raise _fail(f"mode {mode} conflicts with dims n_inp={dims.n_inp}")

    checksum_parts = lines[3].split()
    if len(checksum_parts) != 2 or checksum_parts[0] != "checksum":
        raise _fail(f"malformed header: expected checksum line, got {lines[3]!r}")
    declared_crc = checksum_parts[1]

    payload_parts = lines[-1].split()
    if len(payload_parts) != 2 or payload_parts[0] != "payload":
        raise _fail(f"malformed header: expected payload line, got {lines[-1]!r}")
    declared_len = _parse_int(payload_parts[1], "payload length")

    expected_shapes = field_shapes(dims)
    entries: list[tuple[str, tuple[int, ...], int]] = []
    for line in lines[4:-1]:
        parts = line.split()
        if len(parts) != 5 or parts[0] != "tensor" or parts[2] != "f32":
            raise _fail(f"malformed header: expected tensor line, got {line!r}")
        name = parts[1]
        try:
            shape = tuple(int(e) for e in parts[3].split("x"))
        except ValueError:
            raise _fail(f"malformed header: bad shape {parts[3]!r} for {name}") from None
        entries.append((name, shape, _parse_int(parts[4], f"{name} offset")))

    names = [name for name, _, _ in entries]
    if names != list(expected_shapes):
        raise _fail(
            f"tensor names {names} do not match the {mode}-mode set "
            f"{list(expected_shapes)} in canonical order"
        )
    offset = 0
    for name, shape, declared_offset in entries:
        if shape != expected_shapes[name]:
            raise _fail(f"tensor {name} shape {shape} != required {expected_shapes[name]}")
        if declared_offset != offset:
            raise _fail(
                f"tensor {name} offset {declared_offset} != contiguous offset {offset}"
            )
        offset += int(np.prod(shape)) * 4
    if declared_len != offset:
        raise _fail(f"declared payload length {declared_len} != tensor total {offset}")
    if len(payload) < declared_len:
        raise _fail(f"truncated payload: {len(payload)} bytes, need {declared_len}")
    if len(payload) > declared_len:
        raise _fail(f"trailing bytes after payload: {len(payload) - declared_len}")

    actual_crc = f"{zlib.crc32(payload) & 0xFFFFFFFF:08x}"
    if actual_crc != declared_crc:
        raise _fail(f"checksum mismatch: header {declared_crc}, payload {actual_crc}")

    tensors: dict[str, DenseTensor] = {}
    offset = 0
    for name, shape, _ in entries:
        count = int(np.prod(shape))
        values = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        arr = np.ascontiguousarray(values.astype(np.float32, copy=False)).reshape(shape)
        try:
            tensors[name] = DenseTensor(arr, context=name)
        except ArithmeticError as exc:
            raise _fail(f"tensor {name} holds non-finite values: {exc}") from None
    return RoutingParams.from_mapping(dims, tensors)
