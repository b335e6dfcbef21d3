"""Quantized bidirectional LSTM OCR inference with an accelerator performance model."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .lstm import (
    LstmDirectionParams,
    LstmState,
    NetworkModel,
    OutputLayerParams,
    bilstm_forward,
    greedy_decode,
    infer,
    interleaved_forward,
    lstm_cell_step,
    prepare,
)
from .quant import PrecisionConfig, QuantSpec, make_signed_spec, make_unsigned_spec, quantize

__all__ = [
    "BACKEND",
    "LstmDirectionParams",
    "LstmState",
    "NetworkModel",
    "OutputLayerParams",
    "PrecisionConfig",
    "QuantSpec",
    "bilstm_forward",
    "greedy_decode",
    "infer",
    "interleaved_forward",
    "lstm_cell_step",
    "make_signed_spec",
    "make_unsigned_spec",
    "prepare",
    "quantize",
]
