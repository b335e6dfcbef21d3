"""Analytical performance model of the BiLSTM dataflow accelerator.

Covers operation counts, PE/SIMD folding, a cycle estimate for the
interleaved hidden layer, throughput, and weight-memory accounting in
BRAM36-equivalents (one URAM counts as four).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DomainError, FoldingConfigError
from .quant import PrecisionConfig

#: Capacity of one BRAM36 block in bits.
BRAM36_BITS = 36 * 1024
DEFAULT_FREQUENCY_MHZ = 200.0


class Dims(NamedTuple):
    I: int
    H: int
    K: int


#: Network dimensions of the OCR model: 32-pixel columns, 128 cells, 82 outputs.
OCR_DIMS = Dims(I=32, H=128, K=82)


@dataclass(frozen=True)
class FoldingConfig:
    pe: int = 1
    simd_input: int = 1
    simd_recurrent: int = 1
    pipeline_depth: int = 0
    frequency_mhz: float = DEFAULT_FREQUENCY_MHZ

    def __post_init__(self):
        for name in ("pe", "simd_input", "simd_recurrent"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise FoldingConfigError(f"{name} must be a positive integer, got {getattr(self, name)!r}")
        if self.pipeline_depth < 0:
            raise FoldingConfigError(f"pipeline_depth must be >= 0, got {self.pipeline_depth}")
        if not self.frequency_mhz > 0:
            raise FoldingConfigError(f"frequency must be positive, got {self.frequency_mhz}")

    @classmethod
    def full_simd(cls, dims: Dims, pe: int = 1, **kwargs) -> "FoldingConfig":
        """All inputs and recurrent activations in parallel (fold factor 1)."""
        return cls(pe=pe, simd_input=dims.I, simd_recurrent=dims.H, **kwargs)

    @property
    def label(self) -> str:
        return f"{self.pe}/{self.simd_input}/{self.simd_recurrent}"

    def sort_key(self) -> tuple:
        return (self.pe, self.simd_input, self.simd_recurrent, self.pipeline_depth, self.frequency_mhz)


@dataclass(frozen=True)
class OpCount:
    bilstm_ops: int
    output_ops: int

    @property
    def total_ops(self) -> int:
        return self.bilstm_ops + self.output_ops


@dataclass(frozen=True)
class MemoryEstimate:
    lstm_bits: int
    output_bits: int

    @property
    def weight_bits(self) -> int:
        return self.lstm_bits + self.output_bits

    @property
    def memory_blocks(self) -> int:
        return math.ceil(self.weight_bits / BRAM36_BITS)


@dataclass(frozen=True)
class SimReport:
    dims: Dims
    folding: FoldingConfig
    columns: int
    ops: OpCount
    fold_factor: int
    cycles: int
    runtime_s: float
    gops: float
    memory: MemoryEstimate | None = None


def op_count(H: int, I: int, K: int, C: int) -> OpCount:
    """Operations for one sequence of C columns, multiply and add counted separately."""
    if min(H, I, K) < 1 or C < 0:
        raise DomainError(f"need H, I, K >= 1 and C >= 0, got H={H}, I={I}, K={K}, C={C}")
    per_cell = 2 * 4 * (H + I) + 8
    return OpCount(
        bilstm_ops=per_cell * H * 2 * C,
        output_ops=(2 * (2 * H) + 1) * K * C,
    )


def fold_factor(config: FoldingConfig, I: int, H: int) -> int:
    """Cycles per dot-product result: ``I/SIMD_INPUT``, which must equal ``H/SIMD_RECURRENT``."""
    if I % config.simd_input:
        raise FoldingConfigError(f"SIMD_INPUT={config.simd_input} does not divide I={I}")
    if H % config.simd_recurrent:
        raise FoldingConfigError(f"SIMD_RECURRENT={config.simd_recurrent} does not divide H={H}")
    fs_in, fs_rec = I // config.simd_input, H // config.simd_recurrent
    if fs_in != fs_rec:
        raise FoldingConfigError(
            f"input fold I/SIMD_INPUT={fs_in} differs from recurrent fold H/SIMD_RECURRENT={fs_rec}"
        )
    return fs_in


def cycle_estimate(dims: Dims, config: FoldingConfig, C: int) -> int:
    """``2*C * (H/PE) * F_s + pipeline_depth``.

    Two cell evaluations per column (one per direction, interleaved on one
    datapath).  Output layer, concatenator and decoder are assumed to overlap
    with the hidden layer.
    """
    I, H, _ = dims
    if H % config.pe:
        raise FoldingConfigError(f"PE={config.pe} does not divide H={H}")
    if C < 0:
        raise DomainError(f"column count must be >= 0, got {C}")
    fs = fold_factor(config, I, H)
    return 2 * C * (H // config.pe) * fs + config.pipeline_depth


def throughput(ops: OpCount, cycles: int, frequency_mhz: float) -> float:
    """Giga-operations per second."""
    if cycles <= 0:
        raise DomainError(f"throughput needs a positive cycle count, got {cycles}")
    if frequency_mhz <= 0:
        raise DomainError(f"frequency must be positive, got {frequency_mhz}")
    runtime = cycles / (frequency_mhz * 1e6)
    return ops.total_ops / runtime / 1e9


def memory_estimate(dims: Dims, precision: PrecisionConfig) -> MemoryEstimate:
    """Weight storage only, a lower bound on what synthesis will use."""
    I, H, K = dims
    return MemoryEstimate(
        lstm_bits=2 * 4 * (I + H + 1) * H * precision.WQ,
        output_bits=(2 * H + 1) * K * precision.fc_weight_bits,
    )


def simulate(dims: Dims, config: FoldingConfig, C: int, precision: PrecisionConfig | None = None) -> SimReport:
    dims = Dims(*dims)
    fs = fold_factor(config, dims.I, dims.H)
    ops = op_count(dims.H, dims.I, dims.K, C)
    cycles = cycle_estimate(dims, config, C)
    runtime = cycles / (config.frequency_mhz * 1e6)
    gops = throughput(ops, cycles, config.frequency_mhz) if cycles > 0 else 0.0
    memory = memory_estimate(dims, precision) if precision is not None else None
    return SimReport(dims, config, C, ops, fs, cycles, runtime, gops, memory)
