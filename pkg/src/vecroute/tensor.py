"""Dense tensor substrate and numerically stable scalar kernels.

Everything downstream (both routers, the credit algebra, the benchmark
harness) stores its numeric state in :class:`DenseTensor`: an immutable,
shape-checked, row-major array of rank 1 to 3. Default element type is
float32; float64 is supported for high-precision oracle checks and is
never serialized.

Every operation exposed here validates that its result is finite. A NaN
or Inf is an error state, never a silently propagated value.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ALWAYS_ON",
    "AlwaysOn",
    "DenseTensor",
    "NumericError",
    "ShapeError",
    "VARIANCE_EPS",
    "contract",
    "log_logistic",
    "logistic",
    "normalize_vectors",
    "softmax_rows",
    "tensor",
]

VARIANCE_EPS = 1e-5  # per-vector normalization epsilon, keeps constant rows finite

_ALLOWED_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when tensor extents do not line up for an operation."""


class NumericError(ArithmeticError):
    """Raised when an operation produces a non-finite value."""


class AlwaysOn:
    """Symbolic activation-score marker mapping to a gate of exactly 1.

    Standing in for an unboundedly large score, it avoids Inf arithmetic:
    ``logistic(ALWAYS_ON)`` is exactly ``1.0`` and routers treat it as a
    whole-sequence marker (all inputs fully activated, never gated).
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ALWAYS_ON"


ALWAYS_ON = AlwaysOn()


def _check_finite(arr: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {context}")


class DenseTensor:
    """Immutable row-major real tensor of rank 1 to 3.

    Wraps a read-only, C-contiguous numpy array. ``copy=False`` adopts a
    freshly computed array without copying; the adopted array is frozen.
    """

    __slots__ = ("_a",)

    def __init__(self, data, dtype=None, *, copy: bool = True, context: str = "tensor"):
        arr = np.array(data, dtype=dtype, copy=copy, order="C")
        if arr.dtype not in _ALLOWED_DTYPES:
            # Integer literals are a convenience; anything else is a bug.
            if np.issubdtype(arr.dtype, np.integer) and dtype is None:
                arr = arr.astype(np.float32)
            else:
                raise TypeError(f"unsupported element type {arr.dtype}")
        if not 1 <= arr.ndim <= 3:
            raise ShapeError(f"rank {arr.ndim} outside supported range 1..3")
        if min(arr.shape) < 1:
            raise ShapeError(f"extents must be positive, got {arr.shape}")
        _check_finite(arr, context)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._a = arr

    @property
    def array(self) -> np.ndarray:
        """Read-only numpy view of the stored data."""
        return self._a

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def rank(self) -> int:
        return self._a.ndim

    @property
    def dtype(self) -> np.dtype:
        return self._a.dtype

    @property
    def size(self) -> int:
        return self._a.size

    def astype(self, dtype) -> "DenseTensor":
        if self._a.dtype == np.dtype(dtype):
            return self
        return DenseTensor(self._a.astype(dtype), copy=False)

    def tolist(self) -> list:
        return self._a.tolist()

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return (
            self._a.shape == other._a.shape
            and self._a.dtype == other._a.dtype
            and bool(np.array_equal(self._a, other._a))
        )

    def __hash__(self):
        return hash((self._a.shape, self._a.dtype.str, self._a.tobytes()))

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self._a.shape}, dtype={self._a.dtype.name})"

    # Elementwise arithmetic broadcasts over missing indices (numpy rules).
    def _binary(self, other, op, name: str) -> "DenseTensor":
        rhs = other._a if isinstance(other, DenseTensor) else other
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                out = op(self._a, rhs)
        except ValueError as exc:
            raise ShapeError(f"{name}: {exc}") from None
        return DenseTensor(out, copy=False, context=name)

    def __add__(self, other):
        return self._binary(other, np.add, "add")

    def __radd__(self, other):
        return self._binary(other, lambda a, b: np.add(b, a), "add")

    def __sub__(self, other):
        return self._binary(other, np.subtract, "subtract")

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: np.subtract(b, a), "subtract")

    def __mul__(self, other):
        return self._binary(other, np.multiply, "multiply")

    def __rmul__(self, other):
        return self._binary(other, lambda a, b: np.multiply(b, a), "multiply")


def tensor(data, dtype=np.float32) -> DenseTensor:
    """Build a DenseTensor from nested lists or an array, copying the data."""
    return DenseTensor(data, dtype=dtype, copy=True)


def as_array(x, name: str = "input") -> np.ndarray:
    """Coerce a DenseTensor or array-like to a validated numpy array."""
    if isinstance(x, DenseTensor):
        return x.array
    arr = np.asarray(x)
    if arr.dtype not in _ALLOWED_DTYPES:
        arr = arr.astype(np.float32)
    _check_finite(arr, name)
    return arr


def contract(
    a: DenseTensor | np.ndarray,
    b: DenseTensor | np.ndarray,
    a_indices: str,
    b_indices: str,
    sum_over: str,
) -> DenseTensor:
    """Explicit-summation contraction of two tensors over named indices.

    ``a_indices`` and ``b_indices`` label the axes of each operand with
    single letters (e.g. ``"ij"``, ``"jk"``). Every index in ``sum_over``
    must appear in both operands and is summed away; indices shared but
    not summed stay aligned elementwise. Surviving indices appear in the
    result in operand order: a's first, then b's.

    Summed axes are eliminated in ascending index order; the per-axis
    accumulation is delegated to the backing library and is deterministic
    within one build. Cross-schedule comparisons should use tolerances,
    not bit equality.
    """
    arr_a = as_array(a, "contract lhs")
    arr_b = as_array(b, "contract rhs")
    if len(a_indices) != arr_a.ndim or len(b_indices) != arr_b.ndim:
        raise ShapeError(
            f"index labels '{a_indices}','{b_indices}' do not match operand "
            f"ranks {arr_a.ndim},{arr_b.ndim}"
        )
    if len(set(a_indices)) != len(a_indices) or len(set(b_indices)) != len(b_indices):
        raise ShapeError("repeated index label within one operand")
    summed = set(sum_over)
    for idx in sorted(summed):
        if idx not in a_indices or idx not in b_indices:
            raise ShapeError(f"summed index '{idx}' must appear in both operands")
    extents: dict[str, int] = {}
    for labels, arr, side in ((a_indices, arr_a, "left"), (b_indices, arr_b, "right")):
        for idx, n in zip(labels, arr.shape):
            if idx in extents and extents[idx] != n:
                raise ShapeError(
                    f"index '{idx}' has extent {extents[idx]} in left operand "
                    f"but {n} in right operand"
                )
            extents[idx] = n
    out_indices = [i for i in a_indices if i not in summed]
    out_indices += [i for i in b_indices if i not in summed and i not in out_indices]
    spec = f"{a_indices},{b_indices}->{''.join(out_indices)}"
    out = np.einsum(spec, arr_a, arr_b)
    if out.ndim == 0:
        out = out.reshape(1)
    return DenseTensor(out, copy=False, context="contract")


def logistic(z):
    """Logistic gate 1 / (1 + e^(-z)), overflow-safe for any finite input.

    Accepts scalars, arrays, DenseTensor, or the ALWAYS_ON marker (which
    maps to exactly 1.0). Only negative arguments are ever exponentiated,
    so extreme magnitudes saturate to 0 or 1 without overflow.
    """
    if isinstance(z, AlwaysOn):
        return 1.0
    wrap = isinstance(z, DenseTensor)
    arr = z.array if wrap else np.asarray(z)
    t = np.exp(-np.abs(arr))
    out = np.where(arr >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    if arr.dtype in _ALLOWED_DTYPES:
        out = out.astype(arr.dtype)
    if wrap:
        return DenseTensor(out, copy=False, context="logistic")
    return float(out) if np.isscalar(z) or np.ndim(z) == 0 else out


def log_logistic(z):
    """log of the logistic gate, computed as min(z, 0) - log1p(e^(-|z|)).

    Always <= 0; never overflows and keeps full precision in both tails
    (approaches z for large negative z, -e^(-z) for large positive z).
    """
    wrap = isinstance(z, DenseTensor)
    arr = z.array if wrap else np.asarray(z)
    out = np.minimum(arr, 0.0) - np.log1p(np.exp(-np.abs(arr)))
    if arr.dtype in _ALLOWED_DTYPES:
        out = out.astype(arr.dtype)
    if wrap:
        return DenseTensor(out, copy=False, context="log_logistic")
    return float(out) if np.isscalar(z) or np.ndim(z) == 0 else out


def softmax_rows(scores: DenseTensor | np.ndarray) -> DenseTensor:
    """Row-wise softmax of a rank-2 tensor, stabilized by row-max subtraction."""
    arr = as_array(scores, "softmax_rows input")
    if arr.ndim != 2:
        raise ShapeError(f"softmax_rows expects rank 2, got rank {arr.ndim}")
    shifted = arr - arr.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return DenseTensor(out, copy=False, context="softmax_rows")


def normalize_vectors(x: DenseTensor | np.ndarray) -> DenseTensor:
    """Shift and scale each row to zero mean and unit variance.

    Variance is regularized by VARIANCE_EPS inside the square root, so a
    constant row maps to zeros instead of dividing by zero.
    """
    arr = as_array(x, "normalize_vectors input")
    if arr.ndim != 2:
        raise ShapeError(f"normalize_vectors expects rank 2, got rank {arr.ndim}")
    centered = arr - arr.mean(axis=1, keepdims=True)
    var = np.mean(centered * centered, axis=1, keepdims=True)
    out = centered / np.sqrt(var + np.asarray(VARIANCE_EPS, dtype=arr.dtype))
    return DenseTensor(out, copy=False, context="normalize_vectors")
