"""Image ingestion, model files, metrics and the dataset evaluation harness."""

from .harness import EvalReport, ImageResult, evaluate_dataset, load_dataset, read_truth_file
from .metrics import cer, levenshtein
from .modelfile import load_model, save_model
from .pgm import TextLineImage, load_image, save_image

__all__ = [
    "EvalReport",
    "ImageResult",
    "TextLineImage",
    "cer",
    "evaluate_dataset",
    "levenshtein",
    "load_dataset",
    "load_image",
    "load_model",
    "read_truth_file",
    "save_image",
    "save_model",
]
