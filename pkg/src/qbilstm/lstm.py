"""Quantized bidirectional LSTM inference datapath.

The network is one BiLSTM layer (no peephole connections), an output layer
obtained by folding batch-norm into the fully connected layer, and a greedy
best-path CTC decoder.  Weights are quantized once per
:class:`~qbilstm.quant.PrecisionConfig` (see :func:`prepare`); activations are
quantized inside the cell kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _backend
from .errors import BatchNormFoldError, DimensionError
from .quant import (
    BinaryWeightSpec,
    PrecisionConfig,
    activation_policy,
    cell_spec,
    input_spec,
    make_signed_spec,
    make_unsigned_spec,
    quantize_codes,
    quantize_tensor,
    weight_policy,
)

GATES = ("I", "i", "f", "o")
BLANK_INDEX = 0


def _as_matrix(a, name) -> np.ndarray:
    m = np.array(a, dtype=np.float64, copy=True)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    m.setflags(write=False)
    return m


def _as_vector(a, name) -> np.ndarray:
    v = np.array(a, dtype=np.float64, copy=True)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class LstmDirectionParams:
    """Weights of one LSTM direction.  ``W_*`` are H x I, ``R_*`` H x H, ``b_*`` length H."""

    W_I: np.ndarray
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    R_I: np.ndarray
    R_i: np.ndarray
    R_f: np.ndarray
    R_o: np.ndarray
    b_I: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        for g in GATES:
            object.__setattr__(self, f"W_{g}", _as_matrix(getattr(self, f"W_{g}"), f"W_{g}"))
            object.__setattr__(self, f"R_{g}", _as_matrix(getattr(self, f"R_{g}"), f"R_{g}"))
            object.__setattr__(self, f"b_{g}", _as_vector(getattr(self, f"b_{g}"), f"b_{g}"))
        H, I = self.W_I.shape
        if H < 1 or I < 1:
            raise DimensionError(f"need H >= 1 and I >= 1, got H={H}, I={I}")
        for g in GATES:
            if getattr(self, f"W_{g}").shape != (H, I):
                raise DimensionError(f"W_{g} has shape {getattr(self, f'W_{g}').shape}, expected {(H, I)}")
            if getattr(self, f"R_{g}").shape != (H, H):
                raise DimensionError(f"R_{g} has shape {getattr(self, f'R_{g}').shape}, expected {(H, H)}")
            if getattr(self, f"b_{g}").shape != (H,):
                raise DimensionError(f"b_{g} has shape {getattr(self, f'b_{g}').shape}, expected {(H,)}")

    @property
    def H(self) -> int:
        return self.W_I.shape[0]

    @property
    def I(self) -> int:
        return self.W_I.shape[1]

    @classmethod
    def from_packed(cls, W, R, b) -> "LstmDirectionParams":
        """Build from gate-stacked arrays (4H x I, 4H x H, 4H) in node/input/forget/output order."""
        W, R, b = np.asarray(W, float), np.asarray(R, float), np.asarray(b, float)
        if W.ndim != 2 or W.shape[0] % 4:
            raise DimensionError(f"stacked W must be (4H, I), got {W.shape}")
        kw = {}
        for name, arr in (("W", W), ("R", R), ("b", b)):
            for g, part in zip(GATES, np.split(arr, 4, axis=0)):
                kw[f"{name}_{g}"] = part
        return cls(**kw)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        W = np.vstack([getattr(self, f"W_{g}") for g in GATES])
        R = np.vstack([getattr(self, f"R_{g}") for g in GATES])
        b = np.concatenate([getattr(self, f"b_{g}") for g in GATES])
        return W, R, b

    def blobs(self) -> list[tuple[str, np.ndarray]]:
        """Arrays in model-file order: W_I..W_o, R_I..R_o, b_I..b_o."""
        return [(f"{p}_{g}", getattr(self, f"{p}_{g}")) for p in ("W", "R", "b") for g in GATES]

    def quantized(self, WQ: int) -> "LstmDirectionParams":
        return pack_direction(self, WQ).to_params()


@dataclass(frozen=True, eq=False)
class PackedDirection:
    """Integer weight codes of one direction plus the real value of one code unit."""

    W: np.ndarray
    R: np.ndarray
    b: np.ndarray
    scale: float

    @property
    def H(self) -> int:
        return self.R.shape[1]

    @property
    def I(self) -> int:
        return self.W.shape[1]

    def to_params(self) -> LstmDirectionParams:
        return LstmDirectionParams.from_packed(self.W * self.scale, self.R * self.scale, self.b * self.scale)


def pack_direction(params: LstmDirectionParams, WQ: int) -> PackedDirection:
    """Quantize a direction's weights and biases to ``WQ`` bits and pack them as codes."""
    W, R, b = params.stacked()
    policy = weight_policy(WQ, params.H, params.I)
    if isinstance(policy, BinaryWeightSpec):
        # re-packing already binarized weights must not change them
        codes = [np.where(a >= 0.0, 1.0, -1.0) for a in (W, R, b)]
        scale = policy.scaling_factor
    else:
        for a in (W, R, b):
            quantize_tensor(a, policy)  # finiteness check with index
        codes = [quantize_codes(a, policy) for a in (W, R, b)]
        scale = policy.step
    return PackedDirection(*(np.ascontiguousarray(c) for c in codes), scale=scale)


def kernel_quantizers(precision: PrecisionConfig) -> np.ndarray:
    """Quantizer table consumed by the kernels (see ``qbilstm._fallback``)."""

    def entry(policy):
        if not hasattr(policy, "f"):
            return (1.0, 0.0, 0.0, 0.0)
        return (0.0, float(policy.f), float(policy.code_min), float(policy.code_max))

    rows = [
        entry(make_unsigned_spec(precision.cell_bits)),  # sigmoid gates
        entry(make_signed_spec(precision.cell_bits)),    # tanh node / output squash
        entry(cell_spec(precision.cell_bits)),
        entry(activation_policy(precision.AQ)),
        entry(activation_policy(precision.RQ)),
    ]
    return np.array(rows, dtype=np.float64).ravel()


@dataclass(frozen=True)
class LstmState:
    """Recurrent output ``y`` (RQ grid) and cell state ``c`` (cell grid)."""

    y: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, H: int) -> "LstmState":
        return cls(np.zeros(H), np.zeros(H))


def _kernels(backend):
    return _backend.kernels if backend is None else _backend.load_backend(backend)


def lstm_cell_step(params, x_t, prev: LstmState, precision: PrecisionConfig, backend=None):
    """One timestep of one direction.

    ``params`` is an :class:`LstmDirectionParams` (quantized to ``precision.WQ``
    on the fly) or an already :class:`PackedDirection`.  Returns
    ``(new_state, y_out)`` where ``new_state.y`` is on the RQ grid and feeds
    the next step, and ``y_out`` is on the AQ grid and feeds the output layer.
    """
    packed = params if isinstance(params, PackedDirection) else pack_direction(params, precision.WQ)
    H, I = packed.H, packed.I
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape != (I,):
        raise DimensionError(f"input column has shape {x.shape}, expected {(I,)}")
    y_prev = np.ascontiguousarray(prev.y, dtype=np.float64)
    c_prev = np.ascontiguousarray(prev.c, dtype=np.float64)
    if y_prev.shape != (H,) or c_prev.shape != (H,):
        raise DimensionError(f"state shapes {y_prev.shape}/{c_prev.shape}, expected {(H,)}")
    x = np.ascontiguousarray(quantize_tensor(x, input_spec(precision.IQ)))
    y_out, y_rec, c = _kernels(backend).cell_step(
        packed.W, packed.R, packed.b, packed.scale, x, y_prev, c_prev, kernel_quantizers(precision)
    )
    return LstmState(y_rec, c), y_out


@dataclass(frozen=True, eq=False)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def apply(self, z):
        return self.gamma * (np.asarray(z) - self.mean) / np.sqrt(self.var + self.eps) + self.beta


@dataclass(frozen=True, eq=False)
class OutputLayerParams:
    """Affine output layer, K x 2H weights and K biases."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _as_matrix(self.weights, "output weights")
        b = _as_vector(self.bias, "output bias")
        if b.shape[0] != w.shape[0]:
            raise DimensionError(f"output bias has {b.shape[0]} entries for {w.shape[0]} rows")
        if w.shape[1] % 2:
            raise DimensionError(f"output layer width must be 2H, got {w.shape[1]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    def quantized(self, bits: int = 8) -> "OutputLayerParams":
        return OutputLayerParams(quantize_tensor(self.weights, make_signed_spec(bits)), self.bias)


def fold_batchnorm(fc_weights, fc_bias, bn: BatchNormParams, weight_bits: int | None = 8) -> OutputLayerParams:
    """Fold a batch-norm over the FC inputs into the FC layer.

    With ``weight_bits=None`` the folded layer is returned in full precision,
    otherwise its weights are quantized to the signed ``weight_bits`` grid.
    """
    w = np.asarray(fc_weights, dtype=np.float64)
    b = np.asarray(fc_bias, dtype=np.float64)
    denom = np.asarray(bn.var, dtype=np.float64) + bn.eps
    if np.any(denom <= 0.0) or not np.all(np.isfinite(denom)):
        raise BatchNormFoldError("batch-norm var + eps must be positive for every feature")
    gain = np.asarray(bn.gamma, dtype=np.float64) / np.sqrt(denom)
    if w.ndim != 2 or gain.shape not in ((), (w.shape[1],)):
        raise DimensionError(f"batch-norm over {gain.shape} features does not match FC {w.shape}")
    shift = np.asarray(bn.beta, dtype=np.float64) - gain * np.asarray(bn.mean, dtype=np.float64)
    folded = OutputLayerParams(w * gain, b + w @ np.broadcast_to(shift, (w.shape[1],)))
    return folded if weight_bits is None else folded.quantized(weight_bits)


def output_layer(features, out: OutputLayerParams) -> np.ndarray:
    """Per-column affine map to K logits (no softmax)."""
    z = np.asarray(features, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != out.weights.shape[1]:
        raise DimensionError(f"features of shape {z.shape} do not match output width {out.weights.shape[1]}")
    return z @ out.weights.T + out.bias


def greedy_decode(logits, alphabet: Sequence[str], blank_index: int = BLANK_INDEX) -> str:
    """Best-path CTC decoding: per-column argmax, merge repeats, drop blanks."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        return ""
    if z.ndim != 2 or z.shape[1] != len(alphabet):
        raise DimensionError(f"logits shape {z.shape} does not match alphabet of size {len(alphabet)}")
    if not 0 <= blank_index < len(alphabet):
        raise DimensionError(f"blank index {blank_index} outside alphabet")
    out = []
    prev = None
    for k in np.argmax(z, axis=1):
        if k != prev and k != blank_index:
            out.append(alphabet[k])
        prev = k
    return "".join(out)


@dataclass(eq=False)
class NetworkModel:
    """Full-precision network: two LSTM directions, folded output layer and alphabet."""

    forward: LstmDirectionParams
    backward: LstmDirectionParams
    output: OutputLayerParams
    alphabet: tuple
    blank_index: int = BLANK_INDEX
    _prepared: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.alphabet = tuple(self.alphabet)
        I, H, K = self.dims
        if (self.backward.I, self.backward.H) != (I, H):
            raise DimensionError("forward and backward directions differ in shape")
        if self.output.weights.shape != (K, 2 * H):
            raise DimensionError(f"output weights {self.output.weights.shape}, expected {(K, 2 * H)}")
        if len(self.alphabet) != K:
            raise DimensionError(f"alphabet has {len(self.alphabet)} symbols for K={K}")
        if not 0 <= self.blank_index < K:
            raise DimensionError(f"blank index {self.blank_index} outside alphabet")

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(I, H, K)``."""
        return self.forward.I, self.forward.H, self.output.K


@dataclass(frozen=True, eq=False)
class QuantizedNetwork:
    precision: PrecisionConfig
    forward: PackedDirection
    backward: PackedDirection
    output: OutputLayerParams
    alphabet: tuple
    blank_index: int
    quantizers: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.forward.I, self.forward.H, self.output.K


def prepare(model, precision: PrecisionConfig | None = None) -> QuantizedNetwork:
    """Quantize ``model`` for ``precision``; results are cached per model."""
    if isinstance(model, QuantizedNetwork):
        if precision is not None and precision != model.precision:
            raise ValueError(f"network was prepared for {model.precision}, not {precision}")
        return model
    if precision is None:
        raise ValueError("a PrecisionConfig is required for a full-precision model")
    net = model._prepared.get(precision)
    if net is None:
        net = QuantizedNetwork(
            precision=precision,
            forward=pack_direction(model.forward, precision.WQ),
            backward=pack_direction(model.backward, precision.WQ),
            output=model.output.quantized(precision.fc_weight_bits),
            alphabet=model.alphabet,
            blank_index=model.blank_index,
            quantizers=kernel_quantizers(precision),
        )
        model._prepared[precision] = net
    return net


def _input_columns(net: QuantizedNetwork, image) -> np.ndarray:
    cols = np.asarray(getattr(image, "columns", image), dtype=np.float64)
    I = net.forward.I
    if cols.size == 0:
        return np.zeros((0, I))
    if cols.ndim != 2 or cols.shape[1] != I:
        raise DimensionError(f"image columns have shape {cols.shape}, expected (C, {I})")
    return np.ascontiguousarray(quantize_tensor(cols, input_spec(net.precision.IQ)))


def bilstm_forward(model, image, precision: PrecisionConfig | None = None, backend=None) -> np.ndarray:
    """C x 2H features; row t is ``[forward_t, backward_t]``, both describing column t."""
    net = prepare(model, precision)
    X = _input_columns(net, image)
    k = _kernels(backend)
    parts = []
    for packed, reverse in ((net.forward, False), (net.backward, True)):
        Y, _, _ = k.direction_pass(packed.W, packed.R, packed.b, packed.scale, X, net.quantizers, reverse)
        parts.append(Y)
    return np.hstack(parts)


class InterleavedResult(NamedTuple):
    features: np.ndarray
    #: per column, the 1-based interleaved round after which both halves exist
    availability: np.ndarray
    #: datapath evaluations executed (one direction, one column each)
    steps: int
    #: ("fw" | "bw", column) per datapath evaluation, in execution order
    schedule: tuple


def interleaved_forward(model, image, precision: PrecisionConfig | None = None, backend=None) -> InterleavedResult:
    """Run both directions on a single cell datapath, alternating fw(0), bw(C-1), fw(1), ...

    Produces the same features as :func:`bilstm_forward` and records when the
    concatenator can release each column.
    """
    net = prepare(model, precision)
    X = _input_columns(net, image)
    C, H = X.shape[0], net.forward.H
    k = _kernels(backend)
    qp = net.quantizers
    features = np.empty((C, 2 * H))
    fw_state = (np.zeros(H), np.zeros(H))
    bw_state = (np.zeros(H), np.zeros(H))
    fw_round = np.zeros(C, dtype=np.int64)
    bw_round = np.zeros(C, dtype=np.int64)
    schedule = []
    fw, bw = net.forward, net.backward
    for n in range(C):
        t = n
        y_out, y, c = k.cell_step(fw.W, fw.R, fw.b, fw.scale, X[t], *fw_state, qp)
        features[t, :H] = y_out
        fw_state = (y, c)
        fw_round[t] = n + 1
        schedule.append(("fw", t))

        t = C - 1 - n
        y_out, y, c = k.cell_step(bw.W, bw.R, bw.b, bw.scale, X[t], *bw_state, qp)
        features[t, H:] = y_out
        bw_state = (y, c)
        bw_round[t] = n + 1
        schedule.append(("bw", t))
    return InterleavedResult(features, np.maximum(fw_round, bw_round), len(schedule), tuple(schedule))


def infer(model, image, precision: PrecisionConfig | None = None, backend=None) -> str:
    net = prepare(model, precision)
    logits = output_layer(bilstm_forward(net, image, backend=backend), net.output)
    return greedy_decode(logits, net.alphabet, net.blank_index)
