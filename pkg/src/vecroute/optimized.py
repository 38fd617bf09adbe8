"""Memory-lean concrete router that never stores the proposal tensor.

The general formulation in :mod:`vecroute.reference` materializes one
candidate output per (input, output) pair, an (n_inp, n_out, d_out) block
that dominates memory at scale. This module fixes concrete linear forms
for the four component networks and reorders the output update so the
contraction over inputs happens first:

    pooled[j, d] = sum_i credit[i, j] * x[i, d]

after which the proposal network's two factors are applied to ``pooled``
instead of to every input separately. All intermediates are then
routing-pair-sized (n_inp * n_out) or output-sized
(n_out * max(d_inp, d_out)); nothing of size n_inp * n_out * d_out ever
exists. The proposals stay implicit, but :func:`materialized_votes` can
still build the tensor explicitly for small instances so tests can
compare both execution orders.

Two parameter layouts are supported. Fixed-length mode keys activation,
score, and use/ignore coefficients by input position, so n_inp is baked
into the parameter shapes. Variable-length mode drops the input index
from every parameter and instead derives the per-pair use/ignore
coefficients from the input vectors themselves, once per pass, so one
parameter set serves any sequence length.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields
from typing import Mapping

import numpy as np

from .reference import (
    BetaPair,
    IterationRecord,
    PluggableNetworks,
    RoutingDims,
    RoutingTrace,
    _check_step,
)
from .tensor import (
    DenseTensor,
    ShapeError,
    as_array,
    log_logistic,
    logistic,
    normalize_vectors,
    softmax_rows,
)

__all__ = [
    "FIXED_FIELD_NAMES",
    "TRANSIENT_ELEMENT_BOUND_FACTOR",
    "VARIABLE_FIELD_NAMES",
    "RoutingParams",
    "VoteParamBudget",
    "activation_scores",
    "as_plugins",
    "beta_pair_for",
    "field_shapes",
    "fixed_field_shapes",
    "variable_field_shapes",
    "m_step_factored",
    "materialized_votes",
    "predict_inputs",
    "route_optimized",
    "score_predictions",
    "total_param_count",
    "transient_element_bound",
    "vote_param_budget",
    "vote_param_count",
    "votes_for_input",
]

# Canonical field order. Serialization, initialization draw order, and
# parameter counting all follow this order, so it must never be permuted.
FIXED_FIELD_NAMES = (
    "act_weight",
    "act_bias",
    "vote_mix",
    "vote_proj",
    "vote_bias",
    "pred_proj",
    "pred_gate",
    "pred_bias",
    "score_gain",
    "score_bias",
    "beta_use",
    "beta_ign",
)
VARIABLE_FIELD_NAMES = (
    "act_weight",
    "act_bias",
    "vote_mix",
    "vote_proj",
    "vote_bias",
    "pred_proj",
    "pred_gate",
    "pred_bias",
    "score_gain",
    "score_bias",
    "beta_use_weight",
    "beta_use_bias",
    "beta_ign_weight",
    "beta_ign_bias",
)


def fixed_field_shapes(dims: RoutingDims) -> dict[str, tuple[int, ...]]:
    if dims.variable_length:
        raise ValueError("dims are variable-length; no fixed layout exists")
    return {
        "act_weight": (dims.n_inp, dims.d_inp),
        "act_bias": (dims.n_inp,),
        "vote_mix": (dims.n_out, dims.d_inp),
        "vote_proj": (dims.d_inp, dims.d_out),
        "vote_bias": (dims.n_out, dims.d_out),
        "pred_proj": (dims.d_out, dims.d_inp),
        "pred_gate": (dims.n_out, dims.d_inp),
        "pred_bias": (dims.n_out, dims.d_inp),
        "score_gain": (dims.n_inp, dims.n_out),
        "score_bias": (dims.n_inp, dims.n_out),
        "beta_use": (dims.n_inp, dims.n_out),
        "beta_ign": (dims.n_inp, dims.n_out),
    }


def variable_field_shapes(dims: RoutingDims) -> dict[str, tuple[int, ...]]:
    # Scalars are stored shape (1,) so every parameter is a tensor.
    return {
        "act_weight": (dims.d_inp,),
        "act_bias": (1,),
        "vote_mix": (dims.n_out, dims.d_inp),
        "vote_proj": (dims.d_inp, dims.d_out),
        "vote_bias": (dims.n_out, dims.d_out),
        "pred_proj": (dims.d_out, dims.d_inp),
        "pred_gate": (dims.n_out, dims.d_inp),
        "pred_bias": (dims.n_out, dims.d_inp),
        "score_gain": (dims.n_out,),
        "score_bias": (dims.n_out,),
        "beta_use_weight": (dims.d_inp, dims.n_out),
        "beta_use_bias": (dims.n_out,),
        "beta_ign_weight": (dims.d_inp, dims.n_out),
        "beta_ign_bias": (dims.n_out,),
    }


def field_shapes(dims: RoutingDims) -> dict[str, tuple[int, ...]]:
    """Name -> required shape for the layout ``dims`` selects."""
    if dims.variable_length:
        return variable_field_shapes(dims)
    return fixed_field_shapes(dims)


@dataclass(frozen=True)
class RoutingParams:
    """One complete parameter set for the concrete router.

    Exactly one layout's fields are populated; the other layout's fields
    stay None. Every tensor shares one dtype (float32 by default,
    float64 for high-precision cross-checks). ``dims`` rides along so a
    parameter set is self-describing.
    """

    dims: RoutingDims
    act_weight: DenseTensor | None = None
    act_bias: DenseTensor | None = None
    vote_mix: DenseTensor | None = None
    vote_proj: DenseTensor | None = None
    vote_bias: DenseTensor | None = None
    pred_proj: DenseTensor | None = None
    pred_gate: DenseTensor | None = None
    pred_bias: DenseTensor | None = None
    score_gain: DenseTensor | None = None
    score_bias: DenseTensor | None = None
    beta_use: DenseTensor | None = None
    beta_ign: DenseTensor | None = None
    beta_use_weight: DenseTensor | None = None
    beta_use_bias: DenseTensor | None = None
    beta_ign_weight: DenseTensor | None = None
    beta_ign_bias: DenseTensor | None = None

    def __post_init__(self):
        required = field_shapes(self.dims)
        tensor_names = {f.name for f in dataclass_fields(self)} - {"dims"}
        dtypes = set()
        for name in sorted(tensor_names):
            value = getattr(self, name)
            if name not in required:
                if value is not None:
                    raise ValueError(
                        f"{name} does not belong to {self.mode}-length parameters"
                    )
                continue
            if value is None:
                raise ValueError(f"missing parameter {name} for {self.mode}-length mode")
            if not isinstance(value, DenseTensor):
                value = DenseTensor(value, context=name)
                object.__setattr__(self, name, value)
            if value.shape != required[name]:
                raise ShapeError(
                    f"{name} shape {value.shape} != required {required[name]}"
                )
            dtypes.add(value.dtype)
        if len(dtypes) != 1:
            raise ValueError(f"parameters mix dtypes {sorted(str(d) for d in dtypes)}")

    @property
    def mode(self) -> str:
        return "variable" if self.dims.variable_length else "fixed"

    @property
    def dtype(self) -> np.dtype:
        return self.vote_mix.dtype

    def field_names(self) -> tuple[str, ...]:
        return VARIABLE_FIELD_NAMES if self.dims.variable_length else FIXED_FIELD_NAMES

    def field_items(self) -> tuple[tuple[str, DenseTensor], ...]:
        """(name, tensor) pairs in the canonical order for this layout."""
        return tuple((name, getattr(self, name)) for name in self.field_names())

    def astype(self, dtype) -> "RoutingParams":
        return RoutingParams(
            dims=self.dims,
            **{name: t.astype(dtype) for name, t in self.field_items()},
        )

    @classmethod
    def from_mapping(cls, dims: RoutingDims, tensors: Mapping[str, DenseTensor]) -> "RoutingParams":
        expected = set(field_shapes(dims))
        given = set(tensors)
        if given != expected:
            missing = sorted(expected - given)
            extra = sorted(given - expected)
            raise ValueError(f"parameter names mismatch: missing {missing}, extra {extra}")
        return cls(dims=dims, **dict(tensors))


def _scale(n_inp: int, dtype) -> np.ndarray:
    # The update sums are damped by sqrt(sequence length), computed in the
    # working dtype so both execution orders round identically.
    return dtype.type(1.0) / np.sqrt(np.asarray(n_inp, dtype=dtype))


def activation_scores(x_inp: np.ndarray, params: RoutingParams) -> np.ndarray:
    """Pre-gate activation score of each input vector, shape (n_inp,).

    A per-input linear form damped by sqrt(sequence length), with bias.
    The damping divides by the root of the input count even though the
    sum runs over features; that is the defined behavior, kept verbatim.
    """
    n_inp = x_inp.shape[0]
    scale = _scale(n_inp, x_inp.dtype)
    if params.dims.variable_length:
        return (x_inp @ params.act_weight.array) * scale + params.act_bias.array[0]
    return (
        np.einsum("id,id->i", params.act_weight.array, x_inp) * scale
        + params.act_bias.array
    )


def beta_pair_for(x_inp: np.ndarray, params: RoutingParams) -> BetaPair:
    """Per-pair use/ignore coefficients for this pass.

    Fixed mode returns the stored tables unchanged. Variable mode derives
    the coefficients from the input vectors through a per-output linear
    map; they depend only on the inputs, so they are computed once here
    and stay constant across iterations.
    """
    if not params.dims.variable_length:
        return BetaPair(params.beta_use, params.beta_ign)
    bu = x_inp @ params.beta_use_weight.array + params.beta_use_bias.array[None, :]
    bi = x_inp @ params.beta_ign_weight.array + params.beta_ign_bias.array[None, :]
    return BetaPair(DenseTensor(bu, copy=False), DenseTensor(bi, copy=False))


def predict_inputs(x_out: np.ndarray, params: RoutingParams) -> np.ndarray:
    """Map output states back to predicted inputs, shape (n_out, d_inp).

    Output rows are normalized to zero mean and unit variance before the
    two-factor linear map, so prediction depends on output direction, not
    the magnitudes the update sums produce.
    """
    normed = normalize_vectors(x_out).array
    return (
        params.pred_gate.array * (normed @ params.pred_proj.array)
        + params.pred_bias.array
    )


def score_predictions(x_inp: np.ndarray, predicted: np.ndarray, params: RoutingParams) -> np.ndarray:
    """Agreement score of each input with each predicted input.

    The gained inner product is squashed through log-of-logistic, keeping
    every score nonpositive and saturating smoothly for strong agreement.
    Variable mode broadcasts per-output gain and bias over inputs.
    """
    inner = x_inp @ predicted.T
    z = params.score_gain.array * inner + params.score_bias.array
    return np.asarray(log_logistic(z))


def m_step_factored(x_inp: np.ndarray, phi: np.ndarray, params: RoutingParams) -> np.ndarray:
    """Output update with the input contraction done first.

    pooled[j, d] = sum_i phi[i, j] * x[i, d] collapses the inputs before
    the proposal network's mixing and projection factors are applied, so
    the per-(input, output) proposals are never formed. The bias term
    picks up the total credit each output assigned.
    """
    pooled = phi.T @ x_inp
    phi_total = phi.sum(axis=0)
    scale = _scale(x_inp.shape[0], x_inp.dtype)
    out = ((params.vote_mix.array * pooled) @ params.vote_proj.array) * scale
    out += phi_total[:, None] * params.vote_bias.array
    return out


def _dims_for_run(params: RoutingParams, dims: RoutingDims | None) -> RoutingDims:
    if dims is None:
        return params.dims
    fixed = ("n_inp", "n_out", "d_inp", "d_out")
    for name in fixed:
        if getattr(dims, name) != getattr(params.dims, name):
            raise ShapeError(
                f"dims.{name}={getattr(dims, name)} conflicts with parameter "
                f"layout {name}={getattr(params.dims, name)}"
            )
    return dims


def route_optimized(
    x_inp,
    params: RoutingParams,
    dims: RoutingDims | None = None,
    capture_trace: bool = False,
) -> tuple[DenseTensor, RoutingTrace]:
    """Run the routing loop without materializing proposals.

    ``dims`` may override the iteration count; its sizes must agree with
    the parameter layout. With ``capture_trace`` off (the default, and
    the configuration the transient-memory promise covers), per-iteration
    arrays are dropped as soon as the loop is done with them and the
    returned trace carries only the final credit coefficients. With it
    on, every iteration's routing, shares, credit, and output are
    retained, which keeps O(n_iters * n_inp * n_out) memory alive.
    """
    x = as_array(x_inp, "x_inp")
    if x.ndim != 2:
        raise ShapeError(f"x_inp must be rank 2, got rank {x.ndim}")
    run_dims = _dims_for_run(params, dims)
    n_inp, d_inp = x.shape
    if not run_dims.variable_length and n_inp != run_dims.n_inp:
        raise ShapeError(f"x_inp has {n_inp} rows, params fix n_inp={run_dims.n_inp}")
    if d_inp != run_dims.d_inp:
        raise ShapeError(f"x_inp has {d_inp} columns, params fix d_inp={run_dims.d_inp}")
    if x.dtype != params.dtype:
        raise TypeError(f"x_inp dtype {x.dtype} != parameter dtype {params.dtype}")
    n_out = run_dims.n_out
    dtype = x.dtype

    raw = activation_scores(x, params)
    _check_step(raw, "activations")
    gates = np.asarray(logistic(raw))
    betas = beta_pair_for(x, params)
    bu = betas.beta_use.array
    bi = betas.beta_ign.array
    _check_step(bu, "beta_use coefficients")
    _check_step(bi, "beta_ign coefficients")

    records: list[IterationRecord] = []
    x_out = None
    phi = None
    for it in range(1, run_dims.n_iters + 1):
        if it == 1:
            routing = np.full((n_inp, n_out), 1.0 / n_out, dtype=dtype)
            predicted = None
            scores = None
        else:
            predicted = predict_inputs(x_out, params)
            _check_step(predicted, "predict", it)
            scores = score_predictions(x, predicted, params)
            _check_step(scores, "score", it)
            routing = softmax_rows(scores).array
        share_used = gates[:, None] * routing
        share_ignored = gates[:, None] - share_used
        phi = bu * share_used - bi * share_ignored
        x_out = m_step_factored(x, phi, params)
        _check_step(x_out, "output update", it)
        if capture_trace:
            records.append(
                IterationRecord(
                    routing=DenseTensor(routing, copy=False),
                    scores=None if scores is None else DenseTensor(scores, copy=False),
                    predicted=None if predicted is None else DenseTensor(predicted, copy=False),
                    share_used=DenseTensor(share_used, copy=False),
                    share_ignored=DenseTensor(share_ignored, copy=False),
                    credit=DenseTensor(phi, copy=False),
                    output=DenseTensor(x_out, copy=True),
                )
            )
        else:
            # Keep the loop's live set at one generation of pair-sized
            # arrays; the next iteration only needs x_out and phi.
            del routing, share_used, share_ignored, scores, predicted

    final_credit = DenseTensor(phi, copy=False)
    if capture_trace:
        trace = RoutingTrace(
            activation_scores=DenseTensor(raw, copy=False),
            activation_gates=DenseTensor(gates, copy=False),
            iterations=tuple(records),
            final_credit=final_credit,
        )
    else:
        trace = RoutingTrace(
            activation_scores=None,
            activation_gates=None,
            iterations=(),
            final_credit=final_credit,
        )
    return DenseTensor(x_out, copy=False), trace


def materialized_votes(x_inp: np.ndarray, params: RoutingParams) -> DenseTensor:
    """Explicit proposal tensor (n_inp, n_out, d_out) for small instances.

    Builds what :func:`route_optimized` deliberately avoids, so the two
    execution orders can be compared. Memory is O(n_inp * n_out * d_out);
    use only at test scale.
    """
    scale = _scale(x_inp.shape[0], x_inp.dtype)
    # The optimized contraction may hand back a strided view; the in-place
    # updates and the zero-copy tensor wrap both need an owned C buffer.
    votes = np.ascontiguousarray(
        np.einsum(
            "id,jd,dh->ijh",
            x_inp,
            params.vote_mix.array,
            params.vote_proj.array,
            optimize=True,
        )
    )
    votes *= scale
    votes += params.vote_bias.array[None, :, :]
    return DenseTensor(votes, copy=False, context="materialized votes")


def votes_for_input(x_inp: np.ndarray, index: int, params: RoutingParams) -> np.ndarray:
    """Proposals of one input vector, shape (n_out, d_out).

    Lets streaming checks walk the implicit tensor row by row without
    ever holding more than one input's proposals.
    """
    scale = _scale(x_inp.shape[0], x_inp.dtype)
    mixed = params.vote_mix.array * x_inp[index][None, :]
    return (mixed @ params.vote_proj.array) * scale + params.vote_bias.array


def as_plugins(x_inp: np.ndarray, params: RoutingParams) -> tuple[PluggableNetworks, BetaPair]:
    """Bridge this parameterization into the general router's plugin slots.

    Feeding the result to :func:`vecroute.reference.route_reference` runs
    the identical model through the proposal-materializing path, which is
    the equivalence oracle for :func:`route_optimized`. The returned
    coefficient pair is bound to ``x_inp`` (variable mode derives it from
    the data), so pass the same input to both routers.
    """
    nets = PluggableNetworks(
        activations=lambda xx: activation_scores(xx, params),
        votes=lambda xx: materialized_votes(xx, params).array,
        predict=lambda x_out: predict_inputs(x_out, params),
        score=lambda xx, predicted: score_predictions(xx, predicted, params),
    )
    return nets, beta_pair_for(x_inp, params)


def vote_param_count(dims: RoutingDims) -> int:
    """Parameters in the factored proposal network.

    The mixing table, the shared projection, and the bias table:
    n_out * d_inp + d_inp * d_out + n_out * d_out.
    """
    return (
        dims.n_out * dims.d_inp
        + dims.d_inp * dims.d_out
        + dims.n_out * dims.d_out
    )


@dataclass(frozen=True)
class VoteParamBudget:
    """Factored proposal parameter count next to the unfactored baselines.

    ``full_naive`` keys a separate linear map by (input, output) pair;
    ``shared_naive`` shares one map across inputs but still keys a full
    d_inp x d_out matrix by output.
    """

    factored: int
    shared_naive: int
    full_naive: int


def vote_param_budget(dims: RoutingDims, n_inp: int | None = None) -> VoteParamBudget:
    rows = dims.n_inp if n_inp is None else n_inp
    if rows is None:
        raise ValueError("variable-length dims need an explicit n_inp for the naive counts")
    return VoteParamBudget(
        factored=vote_param_count(dims),
        shared_naive=dims.n_out * dims.d_inp * dims.d_out,
        full_naive=rows * dims.n_out * dims.d_inp * dims.d_out,
    )


def total_param_count(params: RoutingParams) -> int:
    """Total scalar parameters across every tensor in the set."""
    return sum(t.size for _, t in params.field_items())


# Documented ceiling on transient allocations of route_optimized with the
# trace off, in array elements (multiply by dtype itemsize for bytes).
# The three terms cover input-sized, routing-pair-sized, and output-sized
# intermediates; the factor absorbs the simultaneously live generations
# of each (measured worst case: about nine pair-sized arrays live at once
# in variable mode, so 16 leaves better than 40% headroom). The floor
# covers interpreter-level overhead that dominates at toy sizes. The
# bound assumes capture_trace off; trace capture retains every iteration.
# The test suite asserts measured peaks stay under this bound.
TRANSIENT_ELEMENT_BOUND_FACTOR = 16
TRANSIENT_ELEMENT_BOUND_FLOOR = 16384


def transient_element_bound(n_inp: int, n_out: int, d_inp: int, d_out: int) -> int:
    """Max array elements route_optimized may allocate, trace off.

    Notably independent of n_inp * n_out * d_out: the proposal tensor
    never exists, so the bound carries no triple product.
    """
    return TRANSIENT_ELEMENT_BOUND_FLOOR + TRANSIENT_ELEMENT_BOUND_FACTOR * (
        n_inp * d_inp + n_inp * n_out + n_out * (d_inp + d_out)
    )
