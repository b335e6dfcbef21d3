"""Compare the compiled and numpy LSTM kernels on full BiLSTM passes.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from qbilstm import _backend
from qbilstm.lstm import LstmDirectionParams, NetworkModel, OutputLayerParams, bilstm_forward, prepare
from qbilstm.quant import PrecisionConfig

CASES = [
    # name, I, H, C
    ("toy", 8, 8, 100),
    ("small", 16, 32, 300),
    ("ocr", 32, 128, 732),
]


def make_model(rng, I, H, K=82):
    def direction():
        return LstmDirectionParams.from_packed(
            rng.uniform(-1, 1, (4 * H, I)), rng.uniform(-1, 1, (4 * H, H)), rng.uniform(-1, 1, 4 * H)
        )

    alphabet = ["<blank>"] + [chr(0x21 + n) for n in range(K - 1)]
    return NetworkModel(direction(), direction(), OutputLayerParams(np.zeros((K, 2 * H)), np.zeros(K)), alphabet)


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--precision", default="1/2/1/1")
    args = parser.parse_args()

    backends = _backend.available_backends()
    prec = PrecisionConfig.parse(args.precision)
    rng = np.random.default_rng(0)
    print(f"precision {prec.label}, best of {args.repeat}")
    print(f"{'case':<6} {'I':>3} {'H':>4} {'C':>4}  " + "  ".join(f"{b + ' [ms]':>14}" for b in backends)
          + ("  speedup" if len(backends) == 2 else ""))
    for name, I, H, C in CASES:
        net = prepare(make_model(rng, I, H), prec)
        X = rng.integers(0, 256, (C, I)) / 256.0
        results = {}
        outputs = {}
        for b in backends:
            outputs[b] = bilstm_forward(net, X, backend=b)
            results[b] = best_time(lambda: bilstm_forward(net, X, backend=b), args.repeat)
        line = f"{name:<6} {I:>3} {H:>4} {C:>4}  " + "  ".join(f"{results[b] * 1e3:>14.2f}" for b in backends)
        if len(backends) == 2:
            same = np.array_equal(outputs["cython"], outputs["python"])
            line += f"  {results['python'] / results['cython']:>6.1f}x" + ("" if same else "  MISMATCH")
        print(line)


if __name__ == "__main__":
    main()
