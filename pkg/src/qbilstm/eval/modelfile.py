"""Model files: a JSON manifest next to a raw float32 weight blob.

Manifest layout::

    {
      "format": "qbilstm-model",
      "version": 1,
      "dims": {"I": 32, "H": 128, "K": 82},
      "alphabet": ["<blank>", "a", ...],       # blank at index 0
      "weights": "model.bin",
      "blobs": [{"name": "forward.W_I", "shape": [128, 32]}, ...]
    }

The blob file holds the arrays back to back as little-endian IEEE-754
float32, row-major, in the fixed order: forward W_I, W_i, W_f, W_o, R_I, R_i,
R_f, R_o, b_I, b_i, b_f, b_o; the same for backward; then fc.weight,
fc.bias, bn.gamma, bn.beta, bn.mean, bn.var, bn.eps.  The manifest's blob
list must follow that order.  Weights are full precision; quantization
happens when a network is prepared for a precision.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..errors import ModelFormatError
from ..lstm import (
    BLANK_INDEX,
    BatchNormParams,
    LstmDirectionParams,
    NetworkModel,
    fold_batchnorm,
)

FORMAT = "qbilstm-model"
VERSION = 1
_DTYPE = np.dtype("<f4")
_BN_FIELDS = ("gamma", "beta", "mean", "var", "eps")


def blob_layout(I: int, H: int, K: int) -> list[tuple[str, tuple]]:
    layout = []
    for direction in ("forward", "backward"):
        for prefix, shape in (("W", (H, I)), ("R", (H, H)), ("b", (H,))):
            for g in ("I", "i", "f", "o"):
                layout.append((f"{direction}.{prefix}_{g}", shape))
    layout += [("fc.weight", (K, 2 * H)), ("fc.bias", (K,))]
    layout += [(f"bn.{f}", (2 * H,)) for f in _BN_FIELDS[:-1]] + [("bn.eps", ())]
    return layout


def save_model(path, model: NetworkModel, fc=None, bn: BatchNormParams | None = None, weights_name=None) -> None:
    """Write ``model`` as manifest + blob.

    ``fc`` (weights, bias) and ``bn`` store the unfolded layers; by default the
    already folded output layer is written with an identity batch-norm.
    """
    I, H, K = model.dims
    if model.blank_index != BLANK_INDEX:
        raise ModelFormatError("the file format requires the blank symbol at index 0")
    if fc is None:
        fc = (model.output.weights, model.output.bias)
    if bn is None:
        bn = BatchNormParams(np.ones(2 * H), np.zeros(2 * H), np.zeros(2 * H), np.ones(2 * H), 0.0)
    arrays = {}
    for direction in ("forward", "backward"):
        for name, arr in getattr(model, direction).blobs():
            arrays[f"{direction}.{name}"] = arr
    arrays["fc.weight"], arrays["fc.bias"] = fc
    for f in _BN_FIELDS:
        arrays[f"bn.{f}"] = getattr(bn, f)

    path = os.fspath(path)
    if weights_name is None:
        weights_name = os.path.splitext(os.path.basename(path))[0] + ".bin"
    blobs = []
    with open(os.path.join(os.path.dirname(path), weights_name), "wb") as fh:
        for name, shape in blob_layout(I, H, K):
            a = np.asarray(arrays[name], dtype=np.float64)
            a = np.broadcast_to(a, shape)
            fh.write(np.ascontiguousarray(a, dtype=_DTYPE).tobytes())
            blobs.append({"name": name, "shape": list(shape)})
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "dims": {"I": I, "H": H, "K": K},
        "alphabet": list(model.alphabet),
        "weights": weights_name,
        "blobs": blobs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def load_model(path) -> NetworkModel:
    """Load a model manifest; batch-norm is folded into the output layer here."""
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: manifest is not valid JSON ({exc})") from None
    if manifest.get("format") != FORMAT or manifest.get("version") != VERSION:
        raise ModelFormatError(f"{path}: not a {FORMAT} v{VERSION} manifest")
    try:
        dims = manifest["dims"]
        I, H, K = int(dims["I"]), int(dims["H"]), int(dims["K"])
        alphabet = manifest["alphabet"]
        weights_name = manifest["weights"]
        declared = [(b["name"], tuple(b["shape"])) for b in manifest["blobs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: missing or malformed manifest field ({exc})") from None
    if min(I, H, K) < 1:
        raise ModelFormatError(f"{path}: dims must be positive, got I={I}, H={H}, K={K}")
    if not isinstance(alphabet, list) or len(alphabet) != K or not all(isinstance(s, str) for s in alphabet):
        raise ModelFormatError(f"{path}: alphabet must be a list of {K} strings")
    if len(set(alphabet)) != K:
        raise ModelFormatError(f"{path}: alphabet contains duplicate symbols")
    if any(len(s) != 1 for s in alphabet[1:]):
        raise ModelFormatError(f"{path}: non-blank symbols must be single characters")
    expected = blob_layout(I, H, K)
    if declared != expected:
        for (dn, ds), (en, es) in zip(declared + [(None, None)] * len(expected), expected):
            if (dn, ds) != (en, es):
                raise ModelFormatError(f"{path}: blob {en} {list(es)} expected, manifest has {dn} {ds}")
        raise ModelFormatError(f"{path}: unexpected extra blobs in manifest")

    blob_path = os.path.join(os.path.dirname(path), weights_name)
    try:
        raw = np.fromfile(blob_path, dtype=_DTYPE)
    except OSError as exc:
        raise ModelFormatError(f"{blob_path}: cannot read weights ({exc})") from None
    total = sum(int(np.prod(s)) for _, s in expected)
    if raw.size != total:
        raise ModelFormatError(f"{blob_path}: holds {raw.size} floats, manifest needs {total}")
    if not np.all(np.isfinite(raw)):
        raise ModelFormatError(f"{blob_path}: contains non-finite weights")

    arrays = {}
    offset = 0
    for name, shape in expected:
        n = int(np.prod(shape))
        arrays[name] = raw[offset:offset + n].astype(np.float64).reshape(shape)
        offset += n

    def direction(prefix):
        return LstmDirectionParams(**{k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith(prefix + ".")})

    bn = BatchNormParams(*(arrays[f"bn.{f}"] for f in _BN_FIELDS[:-1]), eps=float(arrays["bn.eps"]))
    output = fold_batchnorm(arrays["fc.weight"], arrays["fc.bias"], bn, weight_bits=None)
    return NetworkModel(direction("forward"), direction("backward"), output, alphabet, BLANK_INDEX)
