"""Small deterministic model and synthetic text lines for demos and end-to-end tests.

The bundled toy dataset lives in ``qbilstm/data/toy``.  Its ground truth is
what the toy model decodes at 16 bits everywhere, so lower-precision CER
measures how far quantization moves the decoded output.
"""

from __future__ import annotations

import os
from importlib import resources

import numpy as np

from .eval.modelfile import save_model
from .eval.pgm import TextLineImage, save_image
from .lstm import BatchNormParams, LstmDirectionParams, NetworkModel, fold_batchnorm, infer
from .quant import PrecisionConfig

TOY_ALPHABET = ("<blank>", "a", "b", "c")
TOY_DIMS = (8, 8, 4)  # I, H, K
REFERENCE_PRECISION = PrecisionConfig.uniform(16)


def toy_dir() -> str:
    return str(resources.files("qbilstm") / "data" / "toy")


def make_toy_model(seed: int = 7):
    """Return ``(model, fc, bn)``; the latter two are the unfolded output layers."""
    I, H, K = TOY_DIMS
    rng = np.random.default_rng(seed)

    def direction():
        return LstmDirectionParams.from_packed(
            rng.uniform(-1, 1, (4 * H, I)),
            rng.uniform(-1, 1, (4 * H, H)),
            rng.uniform(-0.5, 0.5, 4 * H),
        )

    fw, bw = direction(), direction()
    fc = (rng.uniform(-1, 1, (K, 2 * H)), rng.uniform(-0.2, 0.2, K))
    bn = BatchNormParams(
        gamma=rng.uniform(0.5, 1.5, 2 * H),
        beta=rng.uniform(-0.1, 0.1, 2 * H),
        mean=rng.uniform(-0.1, 0.1, 2 * H),
        var=rng.uniform(0.5, 1.5, 2 * H),
        eps=1e-5,
    )
    # round through float32 so the in-memory model equals what the file stores
    fw, bw = (LstmDirectionParams(**{n: a.astype(np.float32) for n, a in d.blobs()}) for d in (fw, bw))
    fc = tuple(a.astype(np.float32) for a in fc)
    bn = BatchNormParams(*(getattr(bn, f).astype(np.float32) for f in ("gamma", "beta", "mean", "var")),
                         eps=float(np.float32(bn.eps)))
    output = fold_batchnorm(fc[0], fc[1], bn, weight_bits=None)
    return NetworkModel(fw, bw, output, TOY_ALPHABET), fc, bn


def synthetic_line(rng, height: int, glyphs: int) -> TextLineImage:
    """Random glyph blobs separated by blank gaps, as an 8-bit raster."""
    cols = []
    for _ in range(glyphs):
        cols += [np.zeros(height, dtype=np.uint8)] * int(rng.integers(1, 3))
        width = int(rng.integers(2, 5))
        for _ in range(width):
            cols.append(rng.integers(0, 256, height).astype(np.uint8))
    cols.append(np.zeros(height, dtype=np.uint8))
    return TextLineImage.from_pixels(np.stack(cols, axis=1))


def write_toy_dataset(outdir, n_lines: int = 5, seed: int = 7) -> dict:
    """Write ``model.json``/``model.bin``, ``line_XX.pgm`` and ``truth.tsv`` into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    model, fc, bn = make_toy_model(seed)
    save_model(os.path.join(outdir, "model.json"), model, fc=fc, bn=bn)
    rng = np.random.default_rng(seed + 1)
    lines = []
    I = TOY_DIMS[0]
    for n in range(n_lines):
        image = synthetic_line(rng, I, glyphs=int(rng.integers(3, 7)))
        name = f"line_{n:02d}.pgm"
        save_image(os.path.join(outdir, name), image)
        lines.append((name, infer(model, image, REFERENCE_PRECISION)))
    with open(os.path.join(outdir, "truth.tsv"), "w", encoding="utf-8") as fh:
        for name, text in lines:
            fh.write(f"{name}\t{text}\n")
    return dict(lines)
