"""Dataset evaluation: run inference over text lines and aggregate CER."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..errors import DatasetError, UndefinedRateError
from ..lstm import infer, prepare
from ..quant import PrecisionConfig
from .metrics import levenshtein
from .pgm import TextLineImage, image_files, load_image


@dataclass(frozen=True)
class ImageResult:
    name: str
    pred: str
    truth: str
    distance: int
    columns: int


@dataclass(frozen=True)
class EvalReport:
    results: tuple

    @property
    def total_distance(self) -> int:
        return sum(r.distance for r in self.results)

    @property
    def total_length(self) -> int:
        return sum(len(r.truth) for r in self.results)

    @property
    def total_columns(self) -> int:
        return sum(r.columns for r in self.results)

    @property
    def cer(self) -> float:
        """Corpus-level CER: total edits over total ground-truth length."""
        if self.total_length == 0:
            raise UndefinedRateError("dataset has no ground-truth characters")
        return self.total_distance / self.total_length

    @property
    def accuracy(self) -> float:
        return 1.0 - self.cer


def read_truth_file(path) -> list[tuple[str, str]]:
    """Parse ``<image-filename>\\t<ground truth>`` lines."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            name, sep, truth = line.partition("\t")
            if not sep or not name:
                raise DatasetError(f"{path}:{lineno}: expected '<image>\\t<text>'")
            entries.append((name, truth))
    return entries


def load_dataset(dataset_dir, truth_file) -> list[tuple[str, str]]:
    """Pair every truth entry with its image path under ``dataset_dir``."""
    if not os.path.isdir(dataset_dir):
        raise DatasetError(f"{dataset_dir}: not a directory")
    entries = read_truth_file(truth_file)
    if not entries:
        raise DatasetError(f"{truth_file}: no ground-truth entries")
    if not image_files(dataset_dir):
        raise DatasetError(f"{dataset_dir}: no .pgm images found")
    dataset = []
    for name, truth in entries:
        path = os.path.join(dataset_dir, name)
        if not os.path.isfile(path):
            raise DatasetError(f"{truth_file}: image {name} not found in {dataset_dir}")
        dataset.append((path, truth))
    return dataset


def evaluate_dataset(model, dataset, precision: PrecisionConfig, workers: int = 1, backend=None) -> EvalReport:
    """Decode every line and compare with its ground truth.

    ``dataset`` holds ``(image, truth)`` pairs where ``image`` is a PGM path or
    a :class:`TextLineImage`.  Results come back in dataset order whatever
    ``workers`` is.
    """
    dataset = list(dataset)
    if not dataset:
        raise DatasetError("dataset is empty")
    net = prepare(model, precision)
    I = net.dims[0]
    symbols = set(net.alphabet[i] for i in range(len(net.alphabet)) if i != net.blank_index)
    for item, truth in dataset:
        unknown = sorted(set(truth) - symbols)
        if unknown:
            raise DatasetError(f"ground truth for {_name(item)} uses symbols outside the alphabet: {unknown}")

    def run(pair):
        item, truth = pair
        image = item if isinstance(item, TextLineImage) else load_image(item, height=I)
        pred = infer(net, image, backend=backend)
        return ImageResult(_name(item), pred, truth, levenshtein(pred, truth), image.width)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, dataset))
    else:
        results = [run(p) for p in dataset]
    return EvalReport(tuple(results))


def _name(item) -> str:
    return os.path.basename(item) if isinstance(item, (str, os.PathLike)) else "<image>"
